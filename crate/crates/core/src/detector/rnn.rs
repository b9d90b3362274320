//! Single-unit recurrent detector.
//!
//! `s_t = ReLU(w_state·s_{t−1} + w_input·x_t + bias)`, alarm when `s_t ≥ h`,
//! where `x_t` is either the raw evidence or its m-th power. With unit
//! weights, `bias = −D_α^m` and power input the unit is exactly the CUSUM
//! recursion of [`update`](super::update).
//!
//! Training labels nominal frames 0 and synthetic anomalous segments 1 and
//! minimizes the mean cross-entropy of `sigmoid(a·(s_t − h))` by truncated
//! backpropagation through time.

use super::cusum::relu;
use super::synthetic::generate_synthetic_evidence;
use crate::calibration::power;
use crate::error::{Error, Result};
use crate::model::NominalModel;

#[derive(Debug, Clone, PartialEq)]
pub struct RnnDetector {
    pub w_state: f64,
    pub w_input: f64,
    pub bias: f64,
    /// Sigmoid scale used by the training loss.
    pub sharpness: f64,
    pub h: f64,
    /// Feed `evidence^m` instead of the raw evidence.
    pub power_input: bool,
    pub m: usize,
}

impl RnnDetector {
    /// The fixed-weight unit that reproduces the CUSUM statistic of `model`.
    pub fn fixed_weight(model: &NominalModel) -> Self {
        let offset = model.drift_offset();
        RnnDetector {
            w_state: 1.0,
            w_input: 1.0,
            bias: -offset,
            sharpness: default_sharpness(model.h(), offset),
            h: model.h(),
            power_input: true,
            m: model.dim,
        }
    }

    pub fn input(&self, evidence: f64) -> f64 {
        if self.power_input {
            power(evidence, self.m)
        } else {
            evidence
        }
    }

    pub fn params(&self) -> [f64; 3] {
        [self.w_state, self.w_input, self.bias]
    }

    pub fn set_params(&mut self, p: [f64; 3]) {
        self.w_state = p[0];
        self.w_input = p[1];
        self.bias = p[2];
    }

    /// Runs the unit over a whole evidence sequence from a zero state.
    pub fn run(&self, evidences: &[f64]) -> Vec<f64> {
        let mut s = 0.0;
        evidences
            .iter()
            .map(|&e| {
                s = rnn_update(self, s, e).0;
                s
            })
            .collect()
    }
}

fn default_sharpness(h: f64, offset: f64) -> f64 {
    let scale = statistic_scale(h, offset);
    4.0 / scale
}

fn statistic_scale(h: f64, offset: f64) -> f64 {
    if h > 0.0 {
        h
    } else if offset > 0.0 {
        offset
    } else {
        1.0
    }
}

/// One recurrent step; returns the new state and whether it alarms.
pub fn rnn_update(r: &RnnDetector, state: f64, evidence: f64) -> (f64, bool) {
    let s = relu((r.w_state * state + r.w_input * r.input(evidence)) + r.bias);
    (s, s >= r.h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Backpropagation window length in frames.
    pub truncation: usize,
    pub nominal_segment: usize,
    pub anomaly_segment: usize,
    /// Sigmoid scale; `None` picks `4 / h`.
    pub sharpness: Option<f64>,
    pub power_input: bool,
}

impl Default for RnnTrainConfig {
    fn default() -> Self {
        RnnTrainConfig {
            learning_rate: 0.05,
            epochs: 50,
            truncation: 20,
            nominal_segment: 60,
            anomaly_segment: 15,
            sharpness: None,
            power_input: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnTrainingReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub loss_history: Vec<f64>,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean cross-entropy over the sequence, starting from a zero state.
pub fn rnn_loss(r: &RnnDetector, inputs: &[f64], labels: &[f64]) -> f64 {
    let mut s = 0.0;
    let mut total = 0.0;
    for (&x, &y) in inputs.iter().zip(labels) {
        s = relu((r.w_state * s + r.w_input * x) + r.bias);
        let z = r.sharpness * (s - r.h);
        total += softplus(z) - y * z;
    }
    total / inputs.len() as f64
}

/// Loss and exact gradient (full backpropagation through time) with respect
/// to `[w_state, w_input, bias]`. `inputs` are already transformed (powered
/// when `power_input` is set).
pub fn rnn_loss_and_grad(r: &RnnDetector, inputs: &[f64], labels: &[f64]) -> (f64, [f64; 3]) {
    let (loss, grad, _) = chunk_loss_and_grad(r, 0.0, inputs, labels, inputs.len() as f64);
    (loss, grad)
}

/// Forward and backward pass over one window that starts from `s0` (treated
/// as a constant). Per-frame terms are divided by `norm`. Returns the window
/// loss, gradient, and final state.
fn chunk_loss_and_grad(
    r: &RnnDetector,
    s0: f64,
    inputs: &[f64],
    labels: &[f64],
    norm: f64,
) -> (f64, [f64; 3], f64) {
    let n = inputs.len();
    let mut pre = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n + 1);
    states.push(s0);
    let mut loss = 0.0;
    for t in 0..n {
        let u = (r.w_state * states[t] + r.w_input * inputs[t]) + r.bias;
        let s = relu(u);
        let z = r.sharpness * (s - r.h);
        loss += softplus(z) - labels[t] * z;
        pre.push(u);
        states.push(s);
    }
    let mut grad = [0.0; 3];
    let mut g_state = 0.0;
    for t in (0..n).rev() {
        let s = states[t + 1];
        let z = r.sharpness * (s - r.h);
        g_state += (sigmoid(z) - labels[t]) * r.sharpness / norm;
        let g_pre = if pre[t] > 0.0 { g_state } else { 0.0 };
        grad[0] += g_pre * states[t];
        grad[1] += g_pre * inputs[t];
        grad[2] += g_pre;
        g_state = g_pre * r.w_state;
    }
    (loss / norm, grad, states[n])
}

/// Interleaves nominal evidence with synthetic anomalous segments and
/// returns `(evidences, labels)`.
pub fn build_training_sequence(
    nominal_evidence: &[f64],
    model: &NominalModel,
    config: &RnnTrainConfig,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if config.nominal_segment == 0 {
        return Err(Error::Validation("nominal segment length must be positive".into()));
    }
    let segments = nominal_evidence.len().div_ceil(config.nominal_segment);
    let anomalous =
        generate_synthetic_evidence(model, segments * config.anomaly_segment, seed)?;
    let mut evidences = Vec::with_capacity(nominal_evidence.len() + anomalous.len());
    let mut labels = Vec::with_capacity(evidences.capacity());
    let mut synth = anomalous.chunks(config.anomaly_segment.max(1));
    for chunk in nominal_evidence.chunks(config.nominal_segment) {
        evidences.extend_from_slice(chunk);
        labels.extend(std::iter::repeat_n(0.0, chunk.len()));
        if config.anomaly_segment > 0 {
            if let Some(a) = synth.next() {
                evidences.extend_from_slice(a);
                labels.extend(std::iter::repeat_n(1.0, a.len()));
            }
        }
    }
    Ok((evidences, labels))
}

/// Trains the three recurrent weights, starting from the fixed-weight unit.
pub fn train_rnn_detector(
    nominal_evidence: &[f64],
    model: &NominalModel,
    config: &RnnTrainConfig,
    seed: u64,
) -> Result<(RnnDetector, RnnTrainingReport)> {
    if nominal_evidence.is_empty() {
        return Err(Error::InsufficientData("no nominal evidence for detector training".into()));
    }
    if config.truncation == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::Validation("truncation and learning rate must be positive".into()));
    }
    let (evidences, labels) = build_training_sequence(nominal_evidence, model, config, seed)?;

    let mut detector = RnnDetector::fixed_weight(model);
    detector.power_input = config.power_input;
    let offset = model.drift_offset();
    let inputs: Vec<f64> = evidences.iter().map(|&e| detector.input(e)).collect();
    let scale = if config.power_input {
        statistic_scale(model.h(), offset)
    } else {
        statistic_scale(model.h(), model.calibration.d_alpha)
    };
    if !config.power_input {
        detector.bias = -model.calibration.d_alpha;
    }
    if let Some(a) = config.sharpness {
        detector.sharpness = a;
    } else {
        detector.sharpness = 4.0 / scale;
    }

    // Train in units of `scale`: the rectifier is positively homogeneous, so
    // dividing inputs, bias and h by `scale` (and multiplying the sharpness)
    // leaves the loss unchanged.
    let mut unit = RnnDetector {
        bias: detector.bias / scale,
        h: detector.h / scale,
        sharpness: detector.sharpness * scale,
        ..detector.clone()
    };
    let scaled: Vec<f64> = inputs.iter().map(|x| x / scale).collect();

    let initial_loss = rnn_loss(&unit, &scaled, &labels);
    let mut history = vec![initial_loss];
    for epoch in 1..=config.epochs {
        let mut s = 0.0;
        for (xs, ys) in scaled
            .chunks(config.truncation)
            .zip(labels.chunks(config.truncation))
        {
            let (_, g, s_end) = chunk_loss_and_grad(&unit, s, xs, ys, xs.len() as f64);
            let mut p = unit.params();
            for (pi, gi) in p.iter_mut().zip(g) {
                *pi -= config.learning_rate * gi;
            }
            unit.set_params(p);
            // carry the state forward under the updated weights' trajectory
            s = s_end;
        }
        let loss = rnn_loss(&unit, &scaled, &labels);
        if !loss.is_finite() || unit.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        history.push(loss);
    }

    detector.w_state = unit.w_state;
    detector.w_input = unit.w_input;
    detector.bias = unit.bias * scale;
    let final_loss = *history.last().unwrap();
    Ok((
        detector,
        RnnTrainingReport {
            initial_loss,
            final_loss,
            loss_history: history,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(ws: f64, wi: f64, b: f64) -> RnnDetector {
        RnnDetector {
            w_state: ws,
            w_input: wi,
            bias: b,
            sharpness: 2.0,
            h: 1.0,
            power_input: false,
            m: 1,
        }
    }

    #[test]
    fn zero_unit_never_alarms() {
        let r = unit(0.0, 0.0, 0.0);
        let mut s = 0.0;
        for e in [0.0, 5.0, 100.0, 1e9] {
            let (next, alarm) = rnn_update(&r, s, e);
            assert_eq!(next, 0.0);
            assert!(!alarm);
            s = next;
        }
    }

    #[test]
    fn rectifier_clamps() {
        let r = unit(1.0, 1.0, -10.0);
        assert_eq!(rnn_update(&r, 1.0, 2.0).0, 0.0);
        assert_eq!(rnn_update(&r, 10.0, 2.0).0, 2.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let r = unit(0.8, 1.3, -0.4);
        let inputs: Vec<f64> = (0..40).map(|i| ((i * 37 % 11) as f64) / 7.0).collect();
        let labels: Vec<f64> = (0..40).map(|i| if (15..25).contains(&i) { 1.0 } else { 0.0 }).collect();
        let (_, g) = rnn_loss_and_grad(&r, &inputs, &labels);
        for i in 0..3 {
            let eps = 1e-6;
            let mut p = r.params();
            p[i] += eps;
            let mut rp = r.clone();
            rp.set_params(p);
            p[i] -= 2.0 * eps;
            let mut rm = r.clone();
            rm.set_params(p);
            let fd = (rnn_loss(&rp, &inputs, &labels) - rnn_loss(&rm, &inputs, &labels)) / (2.0 * eps);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-12);
            assert!(rel < 1e-4, "param {i}: analytic {} fd {fd}", g[i]);
        }
    }
}
