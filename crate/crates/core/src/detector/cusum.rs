use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::localize::DetectionEvent;
use crate::calibration::power;
use crate::error::{Error, Result};
use crate::model::NominalModel;

pub const DEFAULT_DROP_WINDOW: usize = 5;

#[inline]
pub(crate) fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// One step of the recursion `s_t = max(s_{t-1} + D_t^m - D_α^m, 0)`.
#[inline]
pub fn next_statistic(prev: f64, evidence: f64, m: usize, drift_offset: f64) -> f64 {
    relu((prev + power(evidence, m)) - drift_offset)
}

/// The drift `D_t^m - D_α^m`, i.e. the single-frame evidence.
#[inline]
pub fn drift(evidence: f64, m: usize, drift_offset: f64) -> f64 {
    power(evidence, m) - drift_offset
}

/// Statistic series for a whole evidence sequence, starting from zero and
/// never reset.
pub fn statistic_series(evidences: &[f64], m: usize, drift_offset: f64) -> Vec<f64> {
    evidences
        .iter()
        .scan(0.0, |s, &e| {
            *s = next_statistic(*s, e, m, drift_offset);
            Some(*s)
        })
        .collect()
}

/// Alarms raised on an evidence sequence when the statistic restarts from
/// zero after every alarm. With `h = 0` every frame alarms.
pub fn count_restart_alarms(evidences: &[f64], m: usize, drift_offset: f64, h: f64) -> usize {
    let mut s = 0.0;
    let mut alarms = 0;
    for &e in evidences {
        s = next_statistic(s, e, m, drift_offset);
        if s >= h {
            alarms += 1;
            s = 0.0;
        }
    }
    alarms
}

/// Running state of one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorState {
    pub statistic: f64,
    /// Frames consumed so far.
    pub frame_index: u64,
    pub in_alarm: bool,
    pub alarm_frame: Option<u64>,
    /// Consecutive strict decreases since the alarm.
    pub drop_count: usize,
    /// Most recent statistic values, oldest first.
    pub statistic_history: VecDeque<f64>,
    history_len: usize,
}

impl DetectorState {
    pub fn new(history_len: usize) -> Self {
        DetectorState {
            statistic: 0.0,
            frame_index: 0,
            in_alarm: false,
            alarm_frame: None,
            drop_count: 0,
            statistic_history: VecDeque::with_capacity(history_len.max(1)),
            history_len: history_len.max(1),
        }
    }

    fn remember(&mut self, s: f64) {
        if self.statistic_history.len() == self.history_len {
            self.statistic_history.pop_front();
        }
        self.statistic_history.push_back(s);
    }
}

impl Default for DetectorState {
    fn default() -> Self {
        DetectorState::new(DEFAULT_DROP_WINDOW + 1)
    }
}

/// Advances the state by one frame and reports the statistic and whether it
/// reached the threshold. Localization bookkeeping is left to
/// [`StreamDetector`].
pub fn update(
    state: &DetectorState,
    evidence: f64,
    model: &NominalModel,
) -> Result<(DetectorState, f64, bool)> {
    let h = model.h();
    if !h.is_finite() || !model.calibration.d_alpha.is_finite() {
        return Err(Error::Uncalibrated("threshold or D_alpha missing".into()));
    }
    if !(evidence >= 0.0) {
        return Err(Error::Domain(format!("evidence must be non-negative, got {evidence}")));
    }
    let s = next_statistic(state.statistic, evidence, model.dim, model.drift_offset());
    let mut next = state.clone();
    next.statistic = s;
    next.frame_index += 1;
    next.remember(s);
    Ok((next, s, s >= h))
}

/// Per-frame detector output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub video_id: String,
    pub frame_index: u64,
    pub statistic: f64,
    pub alarm: bool,
}

/// Online detector for one video stream: updates the statistic, raises
/// alarms, and closes each event once the statistic has dropped for
/// `drop_window` consecutive frames. The statistic restarts from zero after
/// an event closes.
#[derive(Debug, Clone)]
pub struct StreamDetector<'a> {
    model: &'a NominalModel,
    video_id: String,
    drop_window: usize,
    h: f64,
    state: DetectorState,
    /// Frame indices of the current drop run.
    drop_frames: VecDeque<u64>,
    last_frame: Option<u64>,
    peak: f64,
    events: Vec<DetectionEvent>,
}

impl<'a> StreamDetector<'a> {
    pub fn new(model: &'a NominalModel, video_id: impl Into<String>, drop_window: usize) -> Result<Self> {
        if drop_window == 0 {
            return Err(Error::Validation("drop window must be at least 1".into()));
        }
        Ok(StreamDetector {
            model,
            video_id: video_id.into(),
            drop_window,
            h: model.h(),
            state: DetectorState::new(drop_window + 1),
            drop_frames: VecDeque::with_capacity(drop_window),
            last_frame: None,
            peak: 0.0,
            events: Vec::new(),
        })
    }

    pub fn state(&self) -> &DetectorState {
        &self.state
    }

    pub fn push(&mut self, frame_index: u64, evidence: f64) -> Result<FrameRecord> {
        if self.last_frame.is_some_and(|last| frame_index <= last) {
            return Err(Error::Validation(format!(
                "frame {frame_index} of {} is out of order",
                self.video_id
            )));
        }
        let prev = self.state.statistic;
        let (mut next, s, alarm) = update(&self.state, evidence, self.model)?;
        if next.in_alarm {
            self.peak = self.peak.max(s);
            if s < prev {
                next.drop_count += 1;
                self.drop_frames.push_back(frame_index);
            } else {
                next.drop_count = 0;
                self.drop_frames.clear();
            }
            if next.drop_count == self.drop_window {
                let start = next.alarm_frame.expect("alarm frame set while in alarm");
                let end = self.drop_frames[0];
                self.events.push(DetectionEvent {
                    video_id: self.video_id.clone(),
                    alarm_frame: start,
                    start_frame: start,
                    end_frame: end,
                    peak_statistic: self.peak,
                });
                next.in_alarm = false;
                next.alarm_frame = None;
                next.drop_count = 0;
                next.statistic = 0.0;
                self.drop_frames.clear();
            }
        } else if alarm {
            next.in_alarm = true;
            next.alarm_frame = Some(frame_index);
            next.drop_count = 0;
            self.drop_frames.clear();
            self.peak = s;
        }
        self.state = next;
        self.last_frame = Some(frame_index);
        Ok(FrameRecord {
            video_id: self.video_id.clone(),
            frame_index,
            statistic: s,
            alarm,
        })
    }

    /// Closes any open event at the last frame and returns all events.
    pub fn finish(mut self) -> Vec<DetectionEvent> {
        if self.state.in_alarm {
            let start = self.state.alarm_frame.expect("alarm frame set while in alarm");
            self.events.push(DetectionEvent {
                video_id: self.video_id.clone(),
                alarm_frame: start,
                start_frame: start,
                end_frame: self.last_frame.unwrap_or(start),
                peak_statistic: self.peak,
            });
        }
        self.events
    }

    pub fn events(&self) -> &[DetectionEvent] {
        &self.events
    }

    pub fn threshold(&self) -> f64 {
        self.h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::CalibrationResult;
    use crate::data::NormalizationStats;
    use crate::evidence::TrainingSet;

    pub(crate) fn model_1d(d_alpha: f64, h: f64) -> NominalModel {
        let training = TrainingSet::from_flat(vec![0.0, 0.5, 1.0], 1, 1).unwrap();
        let calibration = CalibrationResult {
            alpha: 0.05,
            d_alpha,
            d_max: d_alpha.max(1.0),
            phi: 1.0,
            v_m: 2.0,
            theta: 1.0,
            omega0: 1.0,
            beta: 0.05,
            h,
        };
        NominalModel::new(
            training,
            NormalizationStats::identity(1),
            None,
            calibration,
            None,
            false,
        )
        .unwrap()
    }

    #[test]
    fn update_examples() {
        let m = model_1d(1.0, 10.0);
        let s0 = DetectorState::default();
        assert_eq!(update(&s0, 1.0, &m).unwrap().1, 0.0);
        assert_eq!(update(&s0, 3.0, &m).unwrap().1, 2.0);
        let half = DetectorState {
            statistic: 0.5,
            ..DetectorState::default()
        };
        let (next, s, alarm) = update(&half, 0.0, &m).unwrap();
        assert_eq!(s, 0.0);
        assert!(!alarm);
        assert_eq!(next.frame_index, 1);
    }

    #[test]
    fn alarm_at_threshold() {
        let m = model_1d(1.0, 2.0);
        let (_, s, alarm) = update(&DetectorState::default(), 3.0, &m).unwrap();
        assert_eq!(s, 2.0);
        assert!(alarm);
    }

    #[test]
    fn negative_evidence_rejected() {
        let m = model_1d(1.0, 2.0);
        assert!(update(&DetectorState::default(), -1.0, &m).is_err());
    }

    #[test]
    fn stream_closes_event_after_drop_window() {
        // m = 1, D_α = 1: statistic increments by (evidence - 1)
        let m = model_1d(1.0, 3.0);
        let evidences = [1.0, 3.0, 3.0, 2.0, 0.5, 0.5, 0.5, 0.5, 0.5, 1.0, 1.0];
        let mut det = StreamDetector::new(&m, "v", 5).unwrap();
        let stats: Vec<f64> = evidences
            .iter()
            .enumerate()
            .map(|(i, &e)| det.push(i as u64, e).unwrap().statistic)
            .collect();
        assert_eq!(stats[..9], [0.0, 2.0, 4.0, 5.0, 4.5, 4.0, 3.5, 3.0, 2.5]);
        let events = det.finish();
        assert_eq!(events.len(), 1);
        assert_eq!((events[0].start_frame, events[0].end_frame), (2, 4));
        assert_eq!(events[0].peak_statistic, 5.0);
    }

    #[test]
    fn statistic_resets_after_event() {
        let m = model_1d(1.0, 1.0);
        let mut det = StreamDetector::new(&m, "v", 1).unwrap();
        det.push(0, 3.0).unwrap(); // 2, alarm
        let r = det.push(1, 0.5).unwrap(); // 1.5, drop closes the event
        assert_eq!(r.statistic, 1.5);
        let r = det.push(2, 1.5).unwrap(); // restarts from 0
        assert_eq!(r.statistic, 0.5);
        assert_eq!(det.events().len(), 1);
    }

    #[test]
    fn open_event_closed_at_stream_end() {
        let m = model_1d(1.0, 1.0);
        let mut det = StreamDetector::new(&m, "v", 5).unwrap();
        for i in 0..4 {
            det.push(10 + i, 2.0).unwrap();
        }
        let events = det.finish();
        assert_eq!(events.len(), 1);
        assert_eq!((events[0].start_frame, events[0].end_frame), (10, 13));
    }

    #[test]
    fn series_matches_fold() {
        let e = [0.1, 2.0, 0.0, 5.0, 1.0];
        let s = statistic_series(&e, 2, 1.0);
        assert_eq!(s, vec![0.0, 3.0, 2.0, 26.0, 26.0]);
    }
}
