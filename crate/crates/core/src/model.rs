//! The calibrated nominal profile shared by every detector stream.
//!
//! # Model file
//!
//! A model is stored as one JSON document:
//!
//! ```text
//! {
//!   "format": "seqvad-model",
//!   "version": 1,
//!   "k": 10,
//!   "dim": 18,
//!   "feature_mask": null | [0, 3, ...],
//!   "stats": {"min": [...], "max": [...]},
//!   "calibration": {"alpha": .., "d_alpha": .., "d_max": .., "phi": .., "v_m": ..,
//!                   "theta": .., "omega0": .., "beta": .., "h": ..},
//!   "use_regressor": false,
//!   "training": {"rows": N, "values": [row-major N × dim]},
//!   "regressor": null | "<base64 of the regressor parameter file>"
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so saving the same model
//! twice produces identical bytes.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{power, CalibrationResult};
use crate::data::{normalize, FeatureVector, FrameObservation, NormalizationStats};
use crate::error::{Error, Result};
use crate::evidence::{KdTree, KnnRegressor, TrainingSet};

pub const MODEL_FORMAT: &str = "seqvad-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct NominalModel {
    pub k: usize,
    /// Feature dimensionality `m` after masking; also the drift exponent.
    pub dim: usize,
    /// Raw input dimensions used, in order. `None` means all.
    pub feature_mask: Option<Vec<usize>>,
    pub stats: NormalizationStats,
    pub training: TrainingSet,
    pub calibration: CalibrationResult,
    pub regressor: Option<KnnRegressor>,
    pub use_regressor: bool,
    index: KdTree,
}

impl PartialEq for NominalModel {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k
            && self.dim == other.dim
            && self.feature_mask == other.feature_mask
            && self.stats == other.stats
            && self.training == other.training
            && self.calibration == other.calibration
            && self.regressor == other.regressor
            && self.use_regressor == other.use_regressor
    }
}

impl NominalModel {
    pub fn new(
        training: TrainingSet,
        stats: NormalizationStats,
        feature_mask: Option<Vec<usize>>,
        calibration: CalibrationResult,
        regressor: Option<KnnRegressor>,
        use_regressor: bool,
    ) -> Result<Self> {
        if stats.dim() != training.dim() {
            return Err(Error::DimensionMismatch {
                expected: training.dim(),
                found: stats.dim(),
            });
        }
        if let Some(mask) = &feature_mask {
            if mask.len() != training.dim() {
                return Err(Error::DimensionMismatch {
                    expected: training.dim(),
                    found: mask.len(),
                });
            }
        }
        if let Some(r) = &regressor {
            if r.input_dim() != training.dim() {
                return Err(Error::DimensionMismatch {
                    expected: training.dim(),
                    found: r.input_dim(),
                });
            }
        }
        if use_regressor && regressor.is_none() {
            return Err(Error::Validation(
                "regressor inference requested but the model has no regressor".into(),
            ));
        }
        let c = &calibration;
        let scalars = [c.d_alpha, c.d_max, c.phi, c.v_m, c.theta, c.omega0, c.h];
        if scalars.iter().any(|v| !v.is_finite()) || c.d_alpha > c.d_max || !(c.omega0 > 0.0) {
            return Err(Error::Uncalibrated(
                "calibration scalars are missing or inconsistent".into(),
            ));
        }
        let index = KdTree::build(&training);
        Ok(NominalModel {
            k: training.k(),
            dim: training.dim(),
            feature_mask,
            stats,
            training,
            calibration,
            regressor,
            use_regressor,
            index,
        })
    }

    pub fn h(&self) -> f64 {
        self.calibration.h
    }

    /// `D_α^m`, the per-frame drift offset.
    pub fn drift_offset(&self) -> f64 {
        power(self.calibration.d_alpha, self.dim)
    }

    /// Copy with the alarm threshold replaced.
    pub fn with_threshold(&self, h: f64) -> Result<Self> {
        if !(h >= 0.0) || !h.is_finite() {
            return Err(Error::Domain(format!("threshold must be non-negative, got {h}")));
        }
        let mut m = self.clone();
        m.calibration.h = h;
        Ok(m)
    }

    /// Copy with regressor inference switched on or off.
    pub fn with_regressor_inference(&self, on: bool) -> Result<Self> {
        if on && self.regressor.is_none() {
            return Err(Error::Validation("model has no regressor".into()));
        }
        let mut m = self.clone();
        m.use_regressor = on;
        Ok(m)
    }

    pub fn index(&self) -> &KdTree {
        &self.index
    }

    /// Applies the feature mask and training normalization to a raw object.
    pub fn project(&self, raw: &FeatureVector) -> Result<FeatureVector> {
        let x = match &self.feature_mask {
            Some(mask) => raw.select(mask)?,
            None => raw.clone(),
        };
        normalize(&x, &self.stats)
    }

    /// Anomaly evidence of one normalized object.
    pub fn object_distance(&self, x: &FeatureVector) -> Result<f64> {
        match (&self.regressor, self.use_regressor) {
            (Some(r), true) => r.predict(x.values()),
            _ => self.index.kth_distance(x.values(), self.k, None),
        }
    }

    /// Frame evidence for each frame, in order.
    pub fn evidences(&self, frames: &[FrameObservation]) -> Result<Vec<f64>> {
        frames
            .par_iter()
            .map(|f| crate::evidence::frame_evidence(f, self))
            .collect()
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            k: self.k,
            dim: self.dim,
            feature_mask: self.feature_mask.clone(),
            stats: self.stats.clone(),
            calibration: self.calibration.clone(),
            use_regressor: self.use_regressor,
            training: TrainingBlock {
                rows: self.training.len(),
                values: self.training.flat().to_vec(),
            },
            regressor: self.regressor.as_ref().map(|r| BASE64.encode(r.to_bytes())),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Format(format!("unexpected format tag {:?}", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {}", file.version)));
        }
        if file.training.values.len() != file.training.rows * file.dim {
            return Err(Error::Format("training block size does not match rows × dim".into()));
        }
        let training = TrainingSet::from_flat(file.training.values, file.dim, file.k)?;
        let regressor = file
            .regressor
            .map(|b| {
                BASE64
                    .decode(b)
                    .map_err(|e| Error::Format(e.to_string()))
                    .and_then(|bytes| KnnRegressor::from_bytes(&bytes))
            })
            .transpose()?;
        NominalModel::new(
            training,
            file.stats,
            file.feature_mask,
            file.calibration,
            regressor,
            file.use_regressor,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    k: usize,
    dim: usize,
    feature_mask: Option<Vec<usize>>,
    stats: NormalizationStats,
    calibration: CalibrationResult,
    use_regressor: bool,
    training: TrainingBlock,
    regressor: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct TrainingBlock {
    rows: usize,
    values: Vec<f64>,
}
