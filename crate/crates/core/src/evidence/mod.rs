//! kNN-distance anomaly evidence.
//!
//! Each object's evidence is the Euclidean distance to its k-th nearest
//! nominal training point, computed exactly through a kd-tree or
//! approximated by a trained [`KnnRegressor`]. A frame's evidence is the
//! largest object evidence; a frame without objects has evidence 0.

mod knn;
mod regressor;

pub use knn::{brute_force_kth, knn_distance, KdTree, TrainingSet};
pub use regressor::{
    leave_one_out_targets, regressor_predict, train_knn_regressor, KnnRegressor,
    RegressorConfig, TrainingReport,
};


use crate::data::FrameObservation;
use crate::error::Result;
use crate::model::NominalModel;

/// Largest object evidence in a raw (unnormalized) frame.
pub fn frame_evidence(frame: &FrameObservation, model: &NominalModel) -> Result<f64> {
    let mut best = 0.0f64;
    for object in &frame.objects {
        let x = model.project(object)?;
        best = best.max(model.object_distance(&x)?);
    }
    Ok(best)
}
