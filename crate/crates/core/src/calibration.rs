//! Closed-form threshold selection for the sequential statistic.
//!
//! Given nominal frame evidences, the quantities below fix the alarm
//! threshold `h` so that the false alarm rate is bounded by `exp(-ω₀ h) ≤ β`:
//!
//! * `D_α`: the (1 − α) nearest-rank percentile of nominal evidences,
//! * `φ`: the largest nominal drift `D^m − D_α^m`,
//! * `v_m = π^{m/2} / Γ(m/2 + 1)`, the volume of the unit m-ball,
//! * `θ = v_m · exp(−v_m · D_α^m)`,
//! * `ω₀ = v_m − θ − W(−φθ·e^{−φθ}) / φ`,
//! * `h = −ln β / ω₀`.
//!
//! `W(−y·e^{−y}) = −y` holds on one real branch for every `y > 0`, and that
//! root collapses `ω₀` to `v_m`. The other branch is used: principal when
//! `φθ > 1`, minus-one when `φθ < 1`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{fit_normalization, normalize, FeatureVector, FrameObservation, NormalizationStats};
use crate::error::{Error, Result};
use crate::evidence::{train_knn_regressor, KdTree, RegressorConfig, TrainingSet};
use crate::lambert::{lambert_w, Branch};
use crate::model::NominalModel;

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_K: usize = 10;
/// Largest dimensionality for which `v_m` is evaluated in closed form.
pub const MAX_DIM: usize = 300;

/// Every scalar produced by calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub alpha: f64,
    pub d_alpha: f64,
    pub d_max: f64,
    pub phi: f64,
    pub v_m: f64,
    pub theta: f64,
    pub omega0: f64,
    pub beta: f64,
    pub h: f64,
}

impl CalibrationResult {
    pub fn far_bound(&self) -> f64 {
        far_bound(self.omega0, self.h)
    }

    /// Same calibration with the threshold recomputed for another `beta`.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Ok(CalibrationResult {
            beta,
            h: compute_threshold(self.omega0, beta)?,
            ..self.clone()
        })
    }
}

/// Nearest-rank (1 − α) percentile: the ⌈(1 − α)·N⌉-th smallest value.
pub fn compute_d_alpha(distances: &[f64], alpha: f64) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::InsufficientData("no distances for percentile".into()));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    let n = distances.len();
    let rank = nearest_rank(1.0 - alpha, n);
    let mut sorted = distances.to_vec();
    let (_, v, _) = sorted.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*v)
}

/// 1-based nearest rank of quantile `q` among `n` values.
fn nearest_rank(q: f64, n: usize) -> usize {
    let r = q * n as f64;
    // (1 - 0.05) * 100 evaluates to 95.00000000000001
    let snapped = if (r - r.round()).abs() < 1e-9 { r.round() } else { r.ceil() };
    (snapped as usize).clamp(1, n)
}

/// Volume of the unit ball in `m` dimensions.
pub fn compute_v_m(m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    if m > MAX_DIM {
        return Err(Error::Domain(format!(
            "dimension {m} exceeds supported maximum {MAX_DIM}"
        )));
    }
    Ok(PI.powf(m as f64 / 2.0) / gamma_half_integer(m + 2))
}

/// Γ(n / 2) for a positive integer `n`, from the integer and half-integer
/// closed forms.
fn gamma_half_integer(n: usize) -> f64 {
    if n % 2 == 0 {
        // Γ(j) = (j - 1)!
        (1..n / 2).map(|i| i as f64).product()
    } else {
        // Γ(j + 1/2) = √π · ∏_{i<j} (i + 1/2)
        let j = n / 2;
        PI.sqrt() * (0..j).map(|i| i as f64 + 0.5).product::<f64>()
    }
}

/// Upper bound on the drift: `safety · max(D^m − D_α^m)` over nominal evidences.
pub fn estimate_phi(evidences: &[f64], d_alpha: f64, m: usize, safety: f64) -> Result<f64> {
    if evidences.is_empty() {
        return Err(Error::InsufficientData("no evidences for phi".into()));
    }
    if !(safety > 0.0) {
        return Err(Error::Domain(format!("phi safety factor must be positive, got {safety}")));
    }
    let base = power(d_alpha, m);
    let max = evidences
        .iter()
        .map(|&d| power(d, m) - base)
        .fold(f64::NEG_INFINITY, f64::max);
    let phi = max * safety;
    if !(phi > 0.0) || !phi.is_finite() {
        return Err(Error::Degenerate(format!(
            "no nominal evidence exceeds D_alpha = {d_alpha}; phi = {phi}"
        )));
    }
    Ok(phi)
}

/// `d^m`, the drift scale used throughout.
#[inline]
pub fn power(d: f64, m: usize) -> f64 {
    d.powi(m as i32)
}

pub fn theta_constant(v_m: f64, d_alpha: f64, m: usize) -> f64 {
    v_m * (-v_m * power(d_alpha, m)).exp()
}

/// Intermediate values of the ω₀ computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Omega0 {
    pub theta: f64,
    /// `−φθ·e^{−φθ}`
    pub argument: f64,
    pub branch: Branch,
    pub w: f64,
    pub omega0: f64,
}

pub fn compute_omega0(v_m: f64, d_alpha: f64, m: usize, phi: f64) -> Result<f64> {
    omega0_detail(v_m, d_alpha, m, phi).map(|o| o.omega0)
}

pub fn omega0_detail(v_m: f64, d_alpha: f64, m: usize, phi: f64) -> Result<Omega0> {
    if !(phi > 0.0) || !phi.is_finite() {
        return Err(Error::Domain(format!("phi must be positive, got {phi}")));
    }
    if !(v_m > 0.0) || !(d_alpha >= 0.0) {
        return Err(Error::Domain(format!(
            "invalid v_m = {v_m} or D_alpha = {d_alpha}"
        )));
    }
    let theta = theta_constant(v_m, d_alpha, m);
    let y = phi * theta;
    if (y - 1.0).abs() < 1e-9 {
        return Err(Error::Degenerate(format!(
            "phi * theta = {y}: both Lambert-W roots coincide"
        )));
    }
    let argument = -y * (-y).exp();
    let branch = if y > 1.0 {
        Branch::Principal
    } else {
        Branch::MinusOne
    };
    let w = lambert_w(branch, argument)?;
    let omega0 = v_m - theta - w / phi;
    if !(omega0 > 0.0) || !omega0.is_finite() {
        return Err(Error::Degenerate(format!("omega0 = {omega0} is not positive")));
    }
    Ok(Omega0 {
        theta,
        argument,
        branch,
        w,
        omega0,
    })
}

/// `h = −ln β / ω₀`.
pub fn compute_threshold(omega0: f64, beta: f64) -> Result<f64> {
    if !(omega0 > 0.0) || !omega0.is_finite() {
        return Err(Error::Domain(format!("omega0 must be positive, got {omega0}")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Domain(format!("beta must lie in (0, 1], got {beta}")));
    }
    Ok(-beta.ln() / omega0)
}

/// `exp(−ω₀ h)`.
pub fn far_bound(omega0: f64, h: f64) -> f64 {
    (-omega0 * h).exp()
}

/// Runs the scalar pipeline on nominal frame evidences.
pub fn calibrate_evidences(
    evidences: &[f64],
    m: usize,
    alpha: f64,
    beta: f64,
    phi_safety: f64,
) -> Result<CalibrationResult> {
    let d_alpha = compute_d_alpha(evidences, alpha)?;
    let d_max = evidences.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let phi = estimate_phi(evidences, d_alpha, m, phi_safety)?;
    let v_m = compute_v_m(m)?;
    let o = omega0_detail(v_m, d_alpha, m, phi)?;
    let h = compute_threshold(o.omega0, beta)?;
    Ok(CalibrationResult {
        alpha,
        d_alpha,
        d_max,
        phi,
        v_m,
        theta: o.theta,
        omega0: o.omega0,
        beta,
        h,
    })
}

/// Optional regressor training during calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorTraining {
    pub config: RegressorConfig,
    pub lambda: f64,
    pub seed: u64,
    /// Use the regressor for inference once trained.
    pub enable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrateOptions {
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub phi_safety: f64,
    pub feature_mask: Option<Vec<usize>>,
    pub regressor: Option<RegressorTraining>,
}

impl Default for CalibrateOptions {
    fn default() -> Self {
        CalibrateOptions {
            alpha: DEFAULT_ALPHA,
            beta: 0.05,
            k: DEFAULT_K,
            phi_safety: 1.0,
            feature_mask: None,
            regressor: None,
        }
    }
}

/// Nominal reference built from training frames, before any scalar is fitted.
pub struct NominalReference {
    pub stats: NormalizationStats,
    pub training: TrainingSet,
    pub tree: KdTree,
    /// Leave-one-out kNN distance of every object of the given frames.
    pub object_distances: Vec<f64>,
    /// Largest object distance of each given frame that has objects.
    pub frame_evidences: Vec<f64>,
}

pub(crate) fn mask_frames(
    frames: &[FrameObservation],
    feature_mask: Option<&[usize]>,
) -> Result<Vec<FrameObservation>> {
    let Some(mask) = feature_mask else {
        return Ok(frames.to_vec());
    };
    frames
        .iter()
        .map(|f| {
            let objects = f
                .objects
                .iter()
                .map(|o| o.select(mask))
                .collect::<Result<Vec<_>>>()?;
            Ok(FrameObservation::new(f.video_id.clone(), f.frame_index, objects))
        })
        .collect()
}

/// Normalizes the training objects and computes leave-one-out evidences.
pub fn build_reference(
    frames: &[FrameObservation],
    k: usize,
    feature_mask: Option<&[usize]>,
) -> Result<NominalReference> {
    let masked = mask_frames(frames, feature_mask)?;
    let stats = fit_normalization(&masked)?;
    reference_from(&masked, &stats, &[], k)
}

/// Reference set made of `extra` (raw, already masked) points followed by
/// the objects of `frames`, all normalized with `stats`. Evidences are
/// computed for the objects of `frames` only.
pub(crate) fn reference_from(
    frames: &[FrameObservation],
    stats: &NormalizationStats,
    extra: &[FeatureVector],
    k: usize,
) -> Result<NominalReference> {
    let mut objects = extra
        .iter()
        .map(|x| normalize(x, stats))
        .collect::<Result<Vec<_>>>()?;
    let first = objects.len();
    let mut owners = Vec::new();
    for (fi, frame) in frames.iter().enumerate() {
        for object in &frame.objects {
            objects.push(normalize(object, stats)?);
            owners.push(fi);
        }
    }
    if objects.len() <= k {
        return Err(Error::InsufficientData(format!(
            "{} training objects; leave-one-out evidence with k = {k} needs more than k",
            objects.len()
        )));
    }
    let training = TrainingSet::new(&objects, k)?;
    let tree = KdTree::build(&training);
    let object_distances = (first..training.len())
        .into_par_iter()
        .map(|i| tree.kth_distance(training.point(i), k, Some(i)))
        .collect::<Result<Vec<_>>>()?;

    let mut frame_evidences = Vec::new();
    let mut current: Option<(usize, f64)> = None;
    for (&owner, &d) in owners.iter().zip(&object_distances) {
        match current {
            Some((fi, best)) if fi == owner => current = Some((fi, best.max(d))),
            Some((_, best)) => {
                frame_evidences.push(best);
                current = Some((owner, d));
            }
            None => current = Some((owner, d)),
        }
    }
    if let Some((_, best)) = current {
        frame_evidences.push(best);
    }
    Ok(NominalReference {
        stats: stats.clone(),
        training,
        tree,
        object_distances,
        frame_evidences,
    })
}

/// Calibrates with default options apart from `alpha`, `beta` and `k`.
pub fn calibrate(
    train: &[FrameObservation],
    alpha: f64,
    beta: f64,
    k: usize,
) -> Result<NominalModel> {
    calibrate_with(
        train,
        &CalibrateOptions {
            alpha,
            beta,
            k,
            ..CalibrateOptions::default()
        },
    )
}

/// Full pipeline: normalization, leave-one-out frame evidences, `D_α`,
/// `D_max`, `φ`, `v_m`, `ω₀`, `h`, and optionally the distance regressor.
pub fn calibrate_with(train: &[FrameObservation], opts: &CalibrateOptions) -> Result<NominalModel> {
    let reference = build_reference(train, opts.k, opts.feature_mask.as_deref())?;
    let dim = reference.training.dim();
    let calibration = calibrate_evidences(
        &reference.frame_evidences,
        dim,
        opts.alpha,
        opts.beta,
        opts.phi_safety,
    )?;
    let (regressor, use_regressor) = match &opts.regressor {
        Some(rt) => {
            let (net, _) = train_knn_regressor(
                &reference.training,
                &reference.object_distances,
                rt.lambda,
                &rt.config,
                rt.seed,
            )?;
            (Some(net), rt.enable)
        }
        None => (None, false),
    };
    NominalModel::new(
        reference.training,
        reference.stats,
        opts.feature_mask.clone(),
        calibration,
        regressor,
        use_regressor,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn d_alpha_nearest_rank() {
        let d: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        assert_eq!(compute_d_alpha(&d, 0.05).unwrap(), 0.95);
        assert_eq!(compute_d_alpha(&d, 0.0).unwrap(), 1.0);
        assert_eq!(compute_d_alpha(&d, 0.999).unwrap(), 0.01);
        assert_eq!(compute_d_alpha(&[0.3], 0.5).unwrap(), 0.3);
        assert!(compute_d_alpha(&[], 0.05).is_err());
        assert!(compute_d_alpha(&d, 1.0).is_err());
    }

    #[test]
    fn unit_ball_volumes() {
        assert!((compute_v_m(1).unwrap() - 2.0).abs() < 1e-15);
        assert!((compute_v_m(2).unwrap() - PI).abs() < 1e-15);
        assert!((compute_v_m(3).unwrap() - 4.0 * PI / 3.0).abs() < 1e-14);
        // v_18 = π^9 / 9!
        let v18 = PI.powi(9) / 362_880.0;
        assert!((compute_v_m(18).unwrap() / v18 - 1.0).abs() < 1e-13);
        assert!(compute_v_m(0).is_err());
        assert!(compute_v_m(MAX_DIM).unwrap().is_finite());
    }

    #[test]
    fn phi_cases() {
        let e = [0.5, 1.5, 2.0];
        assert!((estimate_phi(&e, 1.0, 1, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((estimate_phi(&e, 1.0, 1, 1.5).unwrap() - 1.5).abs() < 1e-15);
        assert!(matches!(
            estimate_phi(&[0.1, 0.2], 1.0, 1, 1.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn omega0_reference_point() {
        let v = compute_v_m(2).unwrap();
        let o = omega0_detail(v, 0.5, 2, 2.0).unwrap();
        assert!((o.theta - PI * (-PI / 4.0).exp()).abs() < 1e-12);
        assert!((o.theta - 1.4323).abs() < 1e-4);
        assert_eq!(o.branch, Branch::Principal);
        assert!((o.w * o.w.exp() - o.argument).abs() < 1e-10);
        assert!((o.omega0 - 1.809).abs() < 1e-3, "{}", o.omega0);
        assert!((o.omega0 - v).abs() > 1e-6);
    }

    #[test]
    fn degenerate_root_gives_v_m() {
        // substituting W = -φθ collapses ω₀ to v_m
        for &(d_alpha, phi) in &[(0.5, 2.0), (0.1, 0.01), (0.9, 7.0)] {
            let v = compute_v_m(3).unwrap();
            let theta = theta_constant(v, d_alpha, 3);
            let w = -phi * theta;
            let omega = v - theta - w / phi;
            assert!((omega - v).abs() < 1e-12);
        }
    }

    #[test]
    fn omega0_coalescing_roots() {
        let v = compute_v_m(1).unwrap();
        let theta = theta_constant(v, 0.3, 1);
        let phi = 1.0 / theta;
        assert!(matches!(
            compute_omega0(v, 0.3, 1, phi),
            Err(Error::Degenerate(_))
        ));
        assert!(compute_omega0(v, 0.3, 1, 0.0).is_err());
    }

    #[test]
    fn minus_one_branch_used_for_small_phi() {
        let v = compute_v_m(2).unwrap();
        let o = omega0_detail(v, 0.02, 2, 1e-3).unwrap();
        assert_eq!(o.branch, Branch::MinusOne);
        assert!(o.w < -1.0);
        assert!(o.omega0 > v);
    }

    #[test]
    fn thresholds() {
        assert!((compute_threshold(1.0, 0.05).unwrap() - 2.99573).abs() < 1e-5);
        assert_eq!(compute_threshold(3.0, 1.0).unwrap(), 0.0);
        assert!((compute_threshold(0.5, 0.01).unwrap() - 100f64.ln() / 0.5).abs() < 1e-12);
        assert!((compute_threshold(0.5, 0.01).unwrap() - 9.21034).abs() < 1e-5);
        assert!(compute_threshold(0.0, 0.1).is_err());
        assert!(compute_threshold(1.0, 0.0).is_err());
    }

    #[test]
    fn far_bounds() {
        assert_eq!(far_bound(2.0, 0.0), 1.0);
        assert!((far_bound(1.0, -(0.05f64.ln())) - 0.05).abs() < 1e-15);
        assert!((far_bound(2.0, 1.0) - 0.13534).abs() < 1e-5);
    }
}
