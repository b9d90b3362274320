//! Sequential decision making on frame evidence.

mod cusum;
mod fewshot;
mod localize;
mod rnn;
mod synthetic;

pub use cusum::{
    count_restart_alarms, drift, next_statistic, statistic_series, update, DetectorState, FrameRecord, StreamDetector,
    DEFAULT_DROP_WINDOW,
};
pub use fewshot::{adapt_few_shot, adapt_few_shot_with, AdaptOptions, FRAMES_PER_SHOT};
pub use localize::{localize, DetectionEvent};
pub use rnn::{
    build_training_sequence, rnn_loss, rnn_loss_and_grad, rnn_update, train_rnn_detector,
    RnnDetector, RnnTrainConfig, RnnTrainingReport,
};
pub use synthetic::generate_synthetic_evidence;

use crate::data::FrameObservation;
use crate::error::Result;
use crate::evidence::frame_evidence;
use crate::model::NominalModel;

/// Detector output for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoDetection {
    pub records: Vec<FrameRecord>,
    pub events: Vec<DetectionEvent>,
}

/// Runs the online detector over one video's frames (already in frame order).
pub fn detect_video(
    model: &NominalModel,
    video_id: &str,
    frames: &[&FrameObservation],
    drop_window: usize,
) -> Result<VideoDetection> {
    let mut det = StreamDetector::new(model, video_id, drop_window)?;
    let mut records = Vec::with_capacity(frames.len());
    for frame in frames {
        let e = frame_evidence(frame, model)?;
        records.push(det.push(frame.frame_index, e)?);
    }
    Ok(VideoDetection {
        records,
        events: det.finish(),
    })
}
