use crate::calibration::{calibrate_evidences, mask_frames, reference_from};
use crate::data::{denormalize, fit_normalization, FeatureVector, FrameObservation};
use crate::error::{Error, Result};
use crate::model::NominalModel;

/// Frames in one shot.
pub const FRAMES_PER_SHOT: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptOptions {
    /// Raw dimensions kept for the new scene; `None` keeps the base model's.
    pub feature_mask: Option<Vec<usize>>,
    pub phi_safety: f64,
}

impl Default for AdaptOptions {
    fn default() -> Self {
        AdaptOptions {
            feature_mask: None,
            phi_safety: 1.0,
        }
    }
}

pub fn adapt_few_shot(
    base: &NominalModel,
    shots: &[FrameObservation],
    k_shots: usize,
    beta: f64,
) -> Result<NominalModel> {
    adapt_few_shot_with(base, shots, k_shots, beta, &AdaptOptions::default())
}

/// Recalibrates a model for a new scene from the first `k_shots × 10` shot
/// frames.
///
/// Normalization is refitted on the shot objects, which then join the base
/// reference set. `D_α`, `D_max`, `φ`, `ω₀` and `h` are recomputed from the
/// leave-one-out evidences of the shot frames alone. `k`, `α` and the
/// distance regressor carry over from `base`; the regressor is dropped when
/// the feature subset changes width.
pub fn adapt_few_shot_with(
    base: &NominalModel,
    shots: &[FrameObservation],
    k_shots: usize,
    beta: f64,
    opts: &AdaptOptions,
) -> Result<NominalModel> {
    if k_shots == 0 {
        return Ok(base.clone());
    }
    let needed = k_shots * FRAMES_PER_SHOT;
    if shots.len() < needed {
        return Err(Error::InsufficientData(format!(
            "{k_shots} shots need {needed} frames, got {}",
            shots.len()
        )));
    }
    let mask = opts.feature_mask.clone().or_else(|| base.feature_mask.clone());
    let frames = mask_frames(&shots[..needed], mask.as_deref())?;
    let stats = fit_normalization(&frames)?;

    let columns = base_columns(base, mask.as_deref())?;
    let base_points = base
        .training
        .rows()
        .map(|row| {
            let raw = denormalize(&FeatureVector(row.to_vec()), &base.stats)?;
            Ok(FeatureVector(columns.iter().map(|&c| raw.0[c]).collect()))
        })
        .collect::<Result<Vec<_>>>()?;

    let reference = reference_from(&frames, &stats, &base_points, base.k)?;
    let dim = reference.training.dim();
    let calibration = calibrate_evidences(
        &reference.frame_evidences,
        dim,
        base.calibration.alpha,
        beta,
        opts.phi_safety,
    )?;
    let regressor = base.regressor.clone().filter(|r| r.input_dim() == dim);
    let use_regressor = base.use_regressor && regressor.is_some();
    NominalModel::new(
        reference.training,
        stats,
        mask,
        calibration,
        regressor,
        use_regressor,
    )
}

/// Positions within the base model's features of the raw dimensions in
/// `mask`.
fn base_columns(base: &NominalModel, mask: Option<&[usize]>) -> Result<Vec<usize>> {
    let Some(mask) = mask else {
        return Ok((0..base.dim).collect());
    };
    mask.iter()
        .map(|&raw| match &base.feature_mask {
            None if raw < base.dim => Ok(raw),
            Some(kept) => kept.iter().position(|&d| d == raw).ok_or_else(|| {
                Error::Validation(format!("dimension {raw} is not kept by the base model"))
            }),
            None => Err(Error::DimensionMismatch {
                expected: base.dim,
                found: raw + 1,
            }),
        })
        .collect()
}
