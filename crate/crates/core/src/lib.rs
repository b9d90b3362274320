//! Online anomaly detection on per-frame object feature streams.
//!
//! The pipeline turns each frame into a scalar anomaly evidence (the largest
//! k-th nearest neighbor distance of its objects to a nominal training set),
//! accumulates `evidence^m − D_α^m` in a CUSUM-style statistic, and raises an
//! alarm once the statistic reaches a threshold `h` chosen in closed form for
//! a target false alarm rate. Alarms are localized offline by waiting for a
//! window of consecutive statistic drops.
//!
//! | module          | contents                                                  |
//! |-----------------|-----------------------------------------------------------|
//! | [`data`]        | feature/ground-truth formats, min-max normalization       |
//! | [`evidence`]    | exact kNN distances, kd-tree, distance regressor          |
//! | [`calibration`] | `D_α`, `φ`, `v_m`, `ω₀`, threshold `h`, [`calibrate`]     |
//! | [`lambert`]     | real Lambert W branches                                   |
//! | [`detector`]    | statistic updates, localization, RNN unit, few-shot       |
//! | [`metrics`]     | precision-delay curve, APD, frame AUC, false alarm rate   |
//! | [`synth`]       | seeded synthetic scenarios                                |
//! | [`cli`]         | the `seqvad` command-line pipeline                        |
//!
//! See the crate's `examples/` directory for one runnable program per
//! capability.

pub mod calibration;
pub mod cli;
pub mod data;
pub mod detector;
pub mod error;
pub mod evidence;
pub mod lambert;
pub mod metrics;
pub mod model;
pub mod synth;

pub use calibration::{calibrate, calibrate_with, CalibrateOptions, CalibrationResult};
pub use data::{FeatureVector, FrameObservation, GroundTruthEvent, NormalizationStats};
pub use detector::{DetectionEvent, DetectorState, StreamDetector};
pub use error::{Error, Result};
pub use model::NominalModel;
