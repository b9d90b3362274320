use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A detected anomalous event and its localized frame span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub video_id: String,
    pub alarm_frame: u64,
    pub start_frame: u64,
    pub end_frame: u64,
    pub peak_statistic: f64,
}

/// Offline localization of the event raised at `alarm_index`.
///
/// The event ends at the first index `e > alarm_index` from which the
/// statistic strictly decreases for `drop_window` consecutive frames (each
/// of `e..e + drop_window` is below its predecessor). Without such a run the
/// event extends to the last index. Returned frame numbers are positions in
/// `statistics`.
pub fn localize(statistics: &[f64], alarm_index: usize, drop_window: usize) -> Result<DetectionEvent> {
    if alarm_index >= statistics.len() {
        return Err(Error::Domain(format!(
            "alarm index {alarm_index} outside a series of {}",
            statistics.len()
        )));
    }
    if drop_window == 0 {
        return Err(Error::Validation("drop window must be at least 1".into()));
    }
    let last = statistics.len() - 1;
    let mut run = 0;
    let mut end = last;
    for i in alarm_index + 1..statistics.len() {
        if statistics[i] < statistics[i - 1] {
            run += 1;
            if run == drop_window {
                end = i + 1 - drop_window;
                break;
            }
        } else {
            run = 0;
        }
    }
    let peak = statistics[alarm_index..=end]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(DetectionEvent {
        video_id: String::new(),
        alarm_frame: alarm_index as u64,
        start_frame: alarm_index as u64,
        end_frame: end as u64,
        peak_statistic: peak,
    })
}
