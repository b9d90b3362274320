//! Fully connected network that approximates kNN distances.
//!
//! The training objective is the mean squared error against exact distances
//! plus `lambda` times the sum of squared weights (biases are not penalized).
//! Hidden layers use the rectifier, the output is linear, and predictions are
//! clamped at zero.
//!
//! # Parameter file
//!
//! [`KnnRegressor::to_bytes`] writes a little-endian flat file:
//!
//! | field              | type                        |
//! |--------------------|-----------------------------|
//! | magic `SVKR`       | 4 bytes                     |
//! | version (= 1)      | u32                         |
//! | layer count L      | u32                         |
//! | layer widths       | (L + 1) × u32, input first  |
//! | lambda             | f64                         |
//! | per layer          | weights (out × in, row-major) then biases (out), f64 |

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::knn::{KdTree, TrainingSet};
use crate::data::FeatureVector;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SVKR";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    /// `outputs × inputs`, row-major.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let z = row.iter().zip(x).fold(self.biases[o], |acc, (w, v)| acc + w * v);
            out.push(z);
        }
    }
}

/// Multilayer perceptron approximating the kNN distance of a feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnRegressor {
    layers: Vec<Layer>,
    lambda: f64,
}

/// Optimizer settings for [`train_knn_regressor`].
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Mini-batch size; `0` means full batch.
    pub batch_size: usize,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        RegressorConfig {
            hidden: vec![20, 20, 20],
            learning_rate: 0.01,
            epochs: 300,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    /// Objective on standardized targets before training and after every
    /// epoch.
    pub objective_history: Vec<f64>,
    /// Objective of the returned network on the original targets.
    pub final_objective: f64,
}

impl KnnRegressor {
    /// Network with the given layer widths (input first, output last) and all
    /// parameters zero.
    pub fn zeros(widths: &[usize], lambda: f64) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(Error::Validation(format!("invalid layer widths {widths:?}")));
        }
        if widths[widths.len() - 1] != 1 {
            return Err(Error::Validation("regressor output width must be 1".into()));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Validation(format!("lambda must be non-negative, got {lambda}")));
        }
        let layers = widths
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        Ok(KnnRegressor { layers, lambda })
    }

    /// He-uniform weights, zero biases, output bias set to `output_bias`.
    pub fn init(widths: &[usize], lambda: f64, output_bias: f64, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(widths, lambda)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let bound = (6.0 / layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-bound..bound);
            }
        }
        net.set_output_bias(output_bias);
        Ok(net)
    }

    pub fn set_output_bias(&mut self, b: f64) {
        let last = self.layers.last_mut().expect("at least one layer");
        last.biases[0] = b;
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].inputs];
        w.extend(self.layers.iter().map(|l| l.outputs));
        w
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.biases);
        }
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                found: params.len(),
            });
        }
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[at..at + nw]);
            at += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&params[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    /// Largest absolute weight (biases excluded).
    pub fn max_abs_weight(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter())
            .fold(0.0, |m, w| m.max(w.abs()))
    }

    /// Sum of squared weights, the regularizer `f`.
    pub fn weight_penalty(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter())
            .map(|w| w * w)
            .sum()
    }

    /// Unclamped network output.
    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward(&cur, &mut next);
            if i < last {
                for v in &mut next {
                    *v = v.max(0.0);
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    /// Predicted kNN distance, clamped below at zero.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(self.forward(x).max(0.0))
    }

    /// Training objective over `rows` (row-major, `input_dim` wide).
    pub fn objective(&self, rows: &[f64], targets: &[f64]) -> f64 {
        let n = targets.len();
        let sse: f64 = rows
            .par_chunks_exact(self.input_dim())
            .zip(targets.par_iter())
            .map(|(x, &t)| {
                let e = self.forward(x) - t;
                e * e
            })
            .sum();
        sse / n as f64 + self.lambda * self.weight_penalty()
    }

    /// Objective and its gradient with respect to [`params`](Self::params),
    /// restricted to the samples in `batch`.
    pub fn objective_and_gradient(
        &self,
        rows: &[f64],
        targets: &[f64],
        batch: &[usize],
    ) -> (f64, Vec<f64>) {
        let dim = self.input_dim();
        let mut grad = vec![0.0; self.param_count()];
        let mut sse = 0.0;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        let mut delta = Vec::new();
        let mut prev_delta = Vec::new();
        let scale = 2.0 / batch.len() as f64;
        let offsets = self.param_offsets();

        for &j in batch {
            let x = &rows[j * dim..(j + 1) * dim];
            acts.clear();
            acts.push(x.to_vec());
            let last = self.layers.len() - 1;
            for (i, layer) in self.layers.iter().enumerate() {
                let mut out = Vec::with_capacity(layer.outputs);
                layer.forward(&acts[i], &mut out);
                if i < last {
                    for v in &mut out {
                        *v = v.max(0.0);
                    }
                }
                acts.push(out);
            }
            let err = acts[self.layers.len()][0] - targets[j];
            sse += err * err;

            delta.clear();
            delta.push(scale * err);
            for (i, layer) in self.layers.iter().enumerate().rev() {
                let input = &acts[i];
                let (w_off, b_off) = offsets[i];
                for o in 0..layer.outputs {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    grad[b_off + o] += d;
                    let g = &mut grad[w_off + o * layer.inputs..w_off + (o + 1) * layer.inputs];
                    for (gi, xi) in g.iter_mut().zip(input) {
                        *gi += d * xi;
                    }
                }
                if i == 0 {
                    break;
                }
                prev_delta.clear();
                prev_delta.resize(layer.inputs, 0.0);
                for o in 0..layer.outputs {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, w) in prev_delta.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                // rectifier derivative of the layer below
                for (p, a) in prev_delta.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                std::mem::swap(&mut delta, &mut prev_delta);
            }
        }

        for (i, layer) in self.layers.iter().enumerate() {
            let (w_off, _) = offsets[i];
            for (g, w) in grad[w_off..w_off + layer.weights.len()]
                .iter_mut()
                .zip(&layer.weights)
            {
                *g += 2.0 * self.lambda * w;
            }
        }
        let value = sse / batch.len() as f64 + self.lambda * self.weight_penalty();
        (value, grad)
    }

    fn param_offsets(&self) -> Vec<(usize, usize)> {
        let mut at = 0;
        self.layers
            .iter()
            .map(|l| {
                let w = at;
                let b = at + l.weights.len();
                at = b + l.biases.len();
                (w, b)
            })
            .collect()
    }

    /// One step: gradient descent on the data term, then the exact proximal
    /// step for the L2 penalty on weights.
    fn step(&mut self, rows: &[f64], targets: &[f64], batch: &[usize], lr: f64) {
        let (_, mut grad) = self.objective_and_gradient(rows, targets, batch);
        let offsets = self.param_offsets();
        // remove the penalty gradient; it is applied in closed form below
        for (i, layer) in self.layers.iter().enumerate() {
            let (w_off, _) = offsets[i];
            for (g, w) in grad[w_off..w_off + layer.weights.len()]
                .iter_mut()
                .zip(&layer.weights)
            {
                *g -= 2.0 * self.lambda * w;
            }
        }
        let shrink = 1.0 / (1.0 + 2.0 * lr * self.lambda);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let (w_off, b_off) = offsets[i];
            for (w, g) in layer.weights.iter_mut().zip(&grad[w_off..]) {
                *w = (*w - lr * g) * shrink;
            }
            for (b, g) in layer.biases.iter_mut().zip(&grad[b_off..]) {
                *b -= lr * g;
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let widths = self.widths();
        let mut out = Vec::with_capacity(16 + 4 * widths.len() + 8 * (1 + self.param_count()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for w in widths {
            out.extend_from_slice(&(w as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.lambda.to_le_bytes());
        for p in self.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, at: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("regressor blob has wrong magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported regressor version {version}")));
        }
        let n_layers = r.u32()? as usize;
        if n_layers == 0 || n_layers > 1024 {
            return Err(Error::Format(format!("implausible layer count {n_layers}")));
        }
        let widths = (0..=n_layers)
            .map(|_| r.u32().map(|w| w as usize))
            .collect::<Result<Vec<_>>>()?;
        let lambda = r.f64()?;
        let mut net = Self::zeros(&widths, lambda).map_err(|e| Error::Format(e.to_string()))?;
        let params = (0..net.param_count())
            .map(|_| r.f64())
            .collect::<Result<Vec<_>>>()?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Format("non-finite regressor parameter".into()));
        }
        if r.at != bytes.len() {
            return Err(Error::Format("trailing bytes after regressor parameters".into()));
        }
        net.set_params(&params)?;
        Ok(net)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl ByteReader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.at + n;
        let s = self
            .bytes
            .get(self.at..end)
            .ok_or_else(|| Error::Format("truncated regressor blob".into()))?;
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Free-function form of [`KnnRegressor::predict`].
pub fn regressor_predict(r: &KnnRegressor, x: &FeatureVector) -> Result<f64> {
    r.predict(x.values())
}

/// Leave-one-out kNN distance of every training point: the point's own
/// entry is excluded, other copies of the same value are not.
pub fn leave_one_out_targets(train: &TrainingSet) -> Result<Vec<f64>> {
    let tree = KdTree::build(train);
    leave_one_out_with(train, &tree)
}

pub(crate) fn leave_one_out_with(train: &TrainingSet, tree: &KdTree) -> Result<Vec<f64>> {
    (0..train.len())
        .into_par_iter()
        .map(|i| tree.kth_distance(train.point(i), train.k(), Some(i)))
        .collect()
}

/// Fits a [`KnnRegressor`] to `targets` by seeded mini-batch gradient descent.
///
/// Training runs on inputs and targets standardized to zero mean and unit
/// variance, so `lambda` and the step size are in those units; the returned
/// network takes and predicts original units.
pub fn train_knn_regressor(
    train: &TrainingSet,
    targets: &[f64],
    lambda: f64,
    config: &RegressorConfig,
    seed: u64,
) -> Result<(KnnRegressor, TrainingReport)> {
    if targets.len() != train.len() {
        return Err(Error::DimensionMismatch {
            expected: train.len(),
            found: targets.len(),
        });
    }
    if train.is_empty() {
        return Err(Error::InsufficientData("no training points".into()));
    }
    if !(config.learning_rate > 0.0) {
        return Err(Error::Validation("learning rate must be positive".into()));
    }
    let mut widths = vec![train.dim()];
    widths.extend_from_slice(&config.hidden);
    widths.push(1);
    // Fit standardized targets, then fold the affine map into the output
    // layer.
    let nf = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / nf;
    let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / nf;
    let sd = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    let z: Vec<f64> = targets.iter().map(|y| (y - mean) / sd).collect();
    let targets = &z[..];
    let mut net = KnnRegressor::init(&widths, lambda, 0.0, seed)?;

    // Likewise for the inputs, folded into the first layer afterwards.
    let n = train.len();
    let dim = train.dim();
    let mut mu = vec![0.0; dim];
    let mut sigma = vec![0.0; dim];
    for row in train.rows() {
        for (a, x) in mu.iter_mut().zip(row) {
            *a += x / n as f64;
        }
    }
    for row in train.rows() {
        for ((a, x), m) in sigma.iter_mut().zip(row).zip(&mu) {
            *a += (x - m).powi(2) / n as f64;
        }
    }
    for v in &mut sigma {
        *v = if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 };
    }
    let scaled: Vec<f64> = train
        .flat()
        .iter()
        .enumerate()
        .map(|(i, x)| (x - mu[i % dim]) / sigma[i % dim])
        .collect();
    let rows = &scaled[..];
    let batch_size = if config.batch_size == 0 {
        n
    } else {
        config.batch_size.min(n)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_ba7c);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs + 1);
    history.push(net.objective(rows, targets));

    for epoch in 1..=config.epochs {
        if batch_size < n {
            order.shuffle(&mut rng);
        }
        for batch in order.chunks(batch_size) {
            net.step(rows, targets, batch, config.learning_rate);
        }
        let value = net.objective(rows, targets);
        if !value.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.push(value);
    }
    let first = &mut net.layers[0];
    for o in 0..first.outputs {
        let row = &mut first.weights[o * dim..(o + 1) * dim];
        let mut shift = 0.0;
        for ((w, m), sd) in row.iter_mut().zip(&mu).zip(&sigma) {
            *w /= sd;
            shift += *w * m;
        }
        first.biases[o] -= shift;
    }
    let out = net.layers.last_mut().unwrap();
    for w in &mut out.weights {
        *w *= sd;
    }
    out.biases[0] = out.biases[0] * sd + mean;
    let raw: Vec<f64> = z.iter().map(|v| v * sd + mean).collect();
    let final_objective = net.objective(train.flat(), &raw);
    Ok((
        net,
        TrainingReport {
            objective_history: history,
            final_objective,
        },
    ))
}
