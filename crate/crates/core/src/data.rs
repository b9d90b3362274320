//! Domain types, the line-delimited feature-stream and ground-truth formats,
//! and min-max feature normalization.
//!
//! Both file formats are UTF-8 JSON lines. A feature-stream record is
//!
//! ```text
//! {"video_id":"cam01","frame_index":17,"objects":[[0.1,0.0,...],[...]]}
//! ```
//!
//! and a ground-truth record is
//!
//! ```text
//! {"video_id":"cam01","start_frame":120,"end_frame":180,"segment_length":400}
//! ```
//!
//! Blank lines are ignored in both formats.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default per-object layout: 15 class probabilities, optical-flow mean,
/// optical-flow variance and pose prediction error.
pub const DEFAULT_DIM: usize = 18;
pub const CLASS_PROBABILITY_SLOTS: std::ops::Range<usize> = 0..15;
pub const FLOW_MEAN_SLOT: usize = 15;
pub const FLOW_VARIANCE_SLOT: usize = 16;
pub const POSE_ERROR_SLOT: usize = 17;

/// One detected object's feature point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        FeatureVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Keeps only the listed dimensions, in the listed order.
    pub fn select(&self, dims: &[usize]) -> Result<FeatureVector> {
        dims.iter()
            .map(|&d| {
                self.0.get(d).copied().ok_or(Error::DimensionMismatch {
                    expected: d + 1,
                    found: self.0.len(),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(FeatureVector)
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(v: Vec<f64>) -> Self {
        FeatureVector(v)
    }
}

/// All objects detected in one frame of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameObservation {
    pub video_id: String,
    pub frame_index: u64,
    pub objects: Vec<FeatureVector>,
}

impl FrameObservation {
    pub fn new(video_id: impl Into<String>, frame_index: u64, objects: Vec<FeatureVector>) -> Self {
        FrameObservation {
            video_id: video_id.into(),
            frame_index,
            objects,
        }
    }

    /// Dimensionality of the first object, if any.
    pub fn dim(&self) -> Option<usize> {
        self.objects.first().map(FeatureVector::dim)
    }
}

/// Per-dimension minimum and maximum over a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizationStats {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(Error::DimensionMismatch {
                expected: min.len(),
                found: max.len(),
            });
        }
        if let Some(d) = (0..min.len()).find(|&d| !(min[d] <= max[d])) {
            return Err(Error::Validation(format!(
                "normalization min exceeds max in dimension {d}"
            )));
        }
        Ok(NormalizationStats { min, max })
    }

    /// Stats that leave vectors in the unit cube untouched.
    pub fn identity(dim: usize) -> Self {
        NormalizationStats {
            min: vec![0.0; dim],
            max: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }
}

/// One annotated anomalous event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthEvent {
    pub video_id: String,
    pub start_frame: u64,
    pub end_frame: u64,
    /// Number of frames in the video segment containing the event.
    pub segment_length: u64,
}

impl GroundTruthEvent {
    pub fn contains(&self, frame: u64) -> bool {
        self.start_frame <= frame && frame <= self.end_frame
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.end_frame < self.start_frame {
            return Err(format!(
                "event in {} ends ({}) before it starts ({})",
                self.video_id, self.end_frame, self.start_frame
            ));
        }
        if self.end_frame >= self.segment_length {
            return Err(format!(
                "event in {} ends at {} outside a segment of {} frames",
                self.video_id, self.end_frame, self.segment_length
            ));
        }
        Ok(())
    }
}

/// Reads a feature stream, validating dimensionality and per-video frame order.
pub fn parse_feature_stream<R: BufRead>(input: R) -> Result<Vec<FrameObservation>> {
    let mut frames = Vec::new();
    let mut dim: Option<usize> = None;
    let mut last_index: HashMap<String, u64> = HashMap::new();

    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::parse(line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let frame: FrameObservation =
            serde_json::from_str(&line).map_err(|e| Error::parse(line_no, e.to_string()))?;

        for object in &frame.objects {
            match dim {
                None if object.dim() == 0 => {
                    return Err(Error::parse(line_no, "object with zero features"));
                }
                None => dim = Some(object.dim()),
                Some(expected) if expected != object.dim() => {
                    return Err(Error::DimensionMismatch {
                        expected,
                        found: object.dim(),
                    });
                }
                Some(_) => {}
            }
        }
        if let Some(&prev) = last_index.get(&frame.video_id) {
            if frame.frame_index <= prev {
                return Err(Error::parse(
                    line_no,
                    format!(
                        "frame_index {} of video {} does not follow {}",
                        frame.frame_index, frame.video_id, prev
                    ),
                ));
            }
        }
        last_index.insert(frame.video_id.clone(), frame.frame_index);
        frames.push(frame);
    }
    Ok(frames)
}

pub fn write_feature_stream<W: Write>(mut out: W, frames: &[FrameObservation]) -> Result<()> {
    for frame in frames {
        let line = serde_json::to_string(frame).expect("frame serializes");
        writeln!(out, "{line}").map_err(|e| Error::io("<feature stream>", e))?;
    }
    Ok(())
}

/// Reads ground-truth events, returning them sorted by `(video_id, start_frame)`.
pub fn parse_ground_truth<R: BufRead>(input: R) -> Result<Vec<GroundTruthEvent>> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::parse(line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let event: GroundTruthEvent =
            serde_json::from_str(&line).map_err(|e| Error::parse(line_no, e.to_string()))?;
        event.validate().map_err(Error::Validation)?;
        events.push(event);
    }
    sort_and_check_events(events)
}

/// Sorts events and rejects overlapping events within one video.
pub fn sort_and_check_events(mut events: Vec<GroundTruthEvent>) -> Result<Vec<GroundTruthEvent>> {
    for event in &events {
        event.validate().map_err(Error::Validation)?;
    }
    events.sort_by(|a, b| {
        (a.video_id.as_str(), a.start_frame).cmp(&(b.video_id.as_str(), b.start_frame))
    });
    for pair in events.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.video_id == b.video_id && b.start_frame <= a.end_frame {
            return Err(Error::Validation(format!(
                "overlapping events in {}: [{}, {}] and [{}, {}]",
                a.video_id, a.start_frame, a.end_frame, b.start_frame, b.end_frame
            )));
        }
    }
    Ok(events)
}

pub fn write_ground_truth<W: Write>(mut out: W, events: &[GroundTruthEvent]) -> Result<()> {
    for event in events {
        let line = serde_json::to_string(event).expect("event serializes");
        writeln!(out, "{line}").map_err(|e| Error::io("<ground truth>", e))?;
    }
    Ok(())
}

/// Per-dimension min/max over every object in the training frames.
pub fn fit_normalization(training: &[FrameObservation]) -> Result<NormalizationStats> {
    let mut objects = training.iter().flat_map(|f| f.objects.iter());
    let first = objects
        .next()
        .ok_or_else(|| Error::InsufficientData("no objects in training frames".into()))?;
    let mut min = first.0.clone();
    let mut max = first.0.clone();
    for object in objects {
        if object.dim() != min.len() {
            return Err(Error::DimensionMismatch {
                expected: min.len(),
                found: object.dim(),
            });
        }
        for (d, &v) in object.0.iter().enumerate() {
            min[d] = min[d].min(v);
            max[d] = max[d].max(v);
        }
    }
    Ok(NormalizationStats { min, max })
}

/// Min-max scales into `[0, 1]`, clamping values outside the training range.
/// A constant dimension (min == max) maps to 0.
pub fn normalize(x: &FeatureVector, stats: &NormalizationStats) -> Result<FeatureVector> {
    if x.dim() != stats.dim() {
        return Err(Error::DimensionMismatch {
            expected: stats.dim(),
            found: x.dim(),
        });
    }
    let values = x
        .0
        .iter()
        .zip(stats.min.iter().zip(&stats.max))
        .map(|(&v, (&lo, &hi))| {
            let range = hi - lo;
            if range > 0.0 {
                ((v - lo) / range).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    Ok(FeatureVector(values))
}

/// Inverse of [`normalize`] for values inside the training range.
pub fn denormalize(x: &FeatureVector, stats: &NormalizationStats) -> Result<FeatureVector> {
    if x.dim() != stats.dim() {
        return Err(Error::DimensionMismatch {
            expected: stats.dim(),
            found: x.dim(),
        });
    }
    let values = x
        .0
        .iter()
        .zip(stats.min.iter().zip(&stats.max))
        .map(|(&v, (&lo, &hi))| lo + v * (hi - lo))
        .collect();
    Ok(FeatureVector(values))
}
