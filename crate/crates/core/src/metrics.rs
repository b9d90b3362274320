//! Event-based online metrics (precision-delay curve and its area, APD),
//! frame-level ROC AUC, and empirical false alarm rate.
//!
//! An alarm run is a maximal stretch of consecutive frames whose statistic is
//! at or above the threshold. A run is a true alarm when it overlaps a
//! ground-truth event of the same video. An event's delay is measured from
//! its start to the first overlapping run (zero if that run began earlier)
//! and normalized by the distance from the event start to the segment end;
//! missed events count as delay 1.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::GroundTruthEvent;
use crate::detector::FrameRecord;
use crate::error::{Error, Result};

pub const DEFAULT_GRID_POINTS: usize = 200;

/// Statistic values of one video, in frame order.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSeries {
    pub video_id: String,
    pub frames: Vec<u64>,
    pub statistics: Vec<f64>,
}

impl VideoSeries {
    pub fn new(video_id: impl Into<String>, frames: Vec<u64>, statistics: Vec<f64>) -> Self {
        VideoSeries {
            video_id: video_id.into(),
            frames,
            statistics,
        }
    }

    /// Series whose frames are numbered from zero.
    pub fn contiguous(video_id: impl Into<String>, statistics: Vec<f64>) -> Self {
        let frames = (0..statistics.len() as u64).collect();
        Self::new(video_id, frames, statistics)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Groups detector records by video, ordered by video id.
pub fn series_from_records(records: &[FrameRecord]) -> Vec<VideoSeries> {
    let mut by_video: BTreeMap<&str, VideoSeries> = BTreeMap::new();
    for r in records {
        let s = by_video
            .entry(r.video_id.as_str())
            .or_insert_with(|| VideoSeries::new(r.video_id.clone(), Vec::new(), Vec::new()));
        s.frames.push(r.frame_index);
        s.statistics.push(r.statistic);
    }
    by_video.into_values().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlarmRun {
    pub start_frame: u64,
    pub end_frame: u64,
}

impl AlarmRun {
    fn overlaps(&self, e: &GroundTruthEvent) -> bool {
        self.start_frame <= e.end_frame && self.end_frame >= e.start_frame
    }
}

/// Runs of consecutive entries flagged by `flag`.
pub fn runs_where(frames: &[u64], flag: impl Fn(usize) -> bool) -> Vec<AlarmRun> {
    let mut runs = Vec::new();
    let mut open: Option<u64> = None;
    for (i, &f) in frames.iter().enumerate() {
        match (flag(i), open) {
            (true, None) => open = Some(f),
            (false, Some(start)) => {
                runs.push(AlarmRun {
                    start_frame: start,
                    end_frame: frames[i - 1],
                });
                open = None;
            }
            _ => {}
        }
    }
    if let (Some(start), Some(&last)) = (open, frames.last()) {
        runs.push(AlarmRun {
            start_frame: start,
            end_frame: last,
        });
    }
    runs
}

pub fn alarm_runs(series: &VideoSeries, h: f64) -> Vec<AlarmRun> {
    runs_where(&series.frames, |i| series.statistics[i] >= h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    /// Normalized average detection delay.
    pub gamma: f64,
    pub precision: f64,
}

/// Precision as a function of normalized delay, sorted by delay.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrecisionDelayCurve {
    pub points: Vec<CurvePoint>,
}

impl PrecisionDelayCurve {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `threshold,gamma,precision` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,gamma,precision\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.threshold, p.gamma, p.precision));
        }
        out
    }
}

/// Alarm and delay counts at one threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdOutcome {
    pub total_runs: usize,
    pub true_runs: usize,
    pub gamma: f64,
}

/// Evaluates one threshold over every video.
pub fn evaluate_threshold(
    series: &[VideoSeries],
    truth: &[GroundTruthEvent],
    h: f64,
) -> ThresholdOutcome {
    let mut total_runs = 0;
    let mut true_runs = 0;
    let mut delay_sum = 0.0;
    let mut by_video: BTreeMap<&str, Vec<&GroundTruthEvent>> = BTreeMap::new();
    for e in truth {
        by_video.entry(e.video_id.as_str()).or_default().push(e);
    }
    let mut covered = 0;
    for s in series {
        let runs = alarm_runs(s, h);
        let events = by_video.get(s.video_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        total_runs += runs.len();
        true_runs += runs.iter().filter(|r| events.iter().any(|e| r.overlaps(e))).count();
        for e in events {
            covered += 1;
            let span = (e.segment_length - e.start_frame) as f64;
            let delay = runs
                .iter()
                .find(|r| r.overlaps(e))
                .map(|r| r.start_frame.saturating_sub(e.start_frame) as f64 / span)
                .unwrap_or(1.0);
            delay_sum += delay.min(1.0);
        }
    }
    // events of videos without a series are misses
    delay_sum += (truth.len() - covered) as f64;
    let gamma = if truth.is_empty() {
        0.0
    } else {
        delay_sum / truth.len() as f64
    };
    ThresholdOutcome {
        total_runs,
        true_runs,
        gamma,
    }
}

/// Sweeps `thresholds`, skipping those that raise no alarm at all.
pub fn precision_delay_curve(
    series: &[VideoSeries],
    truth: &[GroundTruthEvent],
    thresholds: &[f64],
) -> Result<PrecisionDelayCurve> {
    if thresholds.is_empty() {
        return Err(Error::Validation("threshold list is empty".into()));
    }
    if let Some(e) = truth
        .iter()
        .find(|e| !series.iter().any(|s| s.video_id == e.video_id))
    {
        return Err(Error::Validation(format!(
            "no statistics for ground-truth video {}",
            e.video_id
        )));
    }
    let mut points: Vec<CurvePoint> = thresholds
        .iter()
        .filter_map(|&h| {
            let o = evaluate_threshold(series, truth, h);
            (o.total_runs > 0).then(|| CurvePoint {
                threshold: h,
                gamma: o.gamma,
                precision: o.true_runs as f64 / o.total_runs as f64,
            })
        })
        .collect();
    points.sort_by(|a, b| {
        a.gamma
            .total_cmp(&b.gamma)
            .then(b.precision.total_cmp(&a.precision))
            .then(a.threshold.total_cmp(&b.threshold))
    });
    points.dedup_by(|b, a| a.gamma == b.gamma && a.precision == b.precision);
    Ok(PrecisionDelayCurve { points })
}

/// Threshold grid: the distinct statistic values, thinned evenly to at most
/// `max_points`.
pub fn default_thresholds(series: &[VideoSeries], max_points: usize) -> Vec<f64> {
    let mut values: Vec<f64> = series
        .iter()
        .flat_map(|s| s.statistics.iter().copied())
        .filter(|v| v.is_finite())
        .collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    thin(&values, max_points)
}

fn thin(sorted: &[f64], max_points: usize) -> Vec<f64> {
    if sorted.len() <= max_points {
        return sorted.to_vec();
    }
    if max_points < 2 {
        return sorted.first().copied().into_iter().collect();
    }
    let last = sorted.len() - 1;
    let mut out: Vec<f64> = (0..max_points)
        .map(|i| sorted[i * last / (max_points - 1)])
        .collect();
    out.dedup();
    out
}

/// Area under the precision-delay curve over `γ ∈ [0, 1]`, trapezoidal,
/// with the end precisions held constant out to 0 and 1.
pub fn apd(curve: &PrecisionDelayCurve) -> f64 {
    let pts = &curve.points;
    let (Some(first), Some(last)) = (pts.first(), pts.last()) else {
        return 0.0;
    };
    let mut area = first.precision * first.gamma.clamp(0.0, 1.0);
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        area += 0.5 * (a.precision + b.precision) * (b.gamma - a.gamma);
    }
    area += last.precision * (1.0 - last.gamma.clamp(0.0, 1.0));
    area
}

/// ROC area of `scores` against binary `labels` via the rank statistic;
/// tied scores share their average rank.
pub fn frame_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            found: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Validation("NaN score".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Validation("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut positive_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let rank = (i + j) as f64 / 2.0 + 1.0;
        positive_rank_sum += rank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let p = positives as f64;
    Ok((positive_rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

/// Frame anomaly labels aligned with the series, concatenated in series order.
pub fn frame_labels(series: &[VideoSeries], truth: &[GroundTruthEvent]) -> Vec<bool> {
    series
        .iter()
        .flat_map(|s| {
            let events: Vec<&GroundTruthEvent> =
                truth.iter().filter(|e| e.video_id == s.video_id).collect();
            s.frames
                .iter()
                .map(move |&f| events.iter().any(|e| e.contains(f)))
                .collect::<Vec<_>>()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarMeasurement {
    pub far: f64,
    /// Frames per false alarm; infinite when there were none.
    pub period: f64,
}

/// False alarm rate as alarm runs per nominal frame.
pub fn measure_far(alarm_runs: usize, nominal_frames: u64) -> Result<FarMeasurement> {
    if nominal_frames == 0 {
        return Err(Error::InsufficientData("no nominal frames".into()));
    }
    let far = alarm_runs as f64 / nominal_frames as f64;
    let period = if alarm_runs == 0 {
        f64::INFINITY
    } else {
        nominal_frames as f64 / alarm_runs as f64
    };
    Ok(FarMeasurement { far, period })
}

/// Summary of one evaluation. Undefined quantities are `None`; an infinite
/// false alarm period is also `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub apd: Option<f64>,
    pub frame_auc: Option<f64>,
    pub empirical_far: f64,
    pub false_alarm_period: Option<f64>,
    pub false_alarm_runs: usize,
    pub nominal_frames: u64,
    pub events: usize,
    pub frames: usize,
    pub curve: PrecisionDelayCurve,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Evaluates detector records against ground truth.
///
/// APD uses the statistic column swept over `grid_points` thresholds; the
/// false alarm rate uses the `alarm` column, counting runs outside every
/// event per frame outside every event.
pub fn evaluate_records(
    records: &[FrameRecord],
    truth: &[GroundTruthEvent],
    grid_points: usize,
) -> Result<EvalReport> {
    let series = series_from_records(records);
    let labels = frame_labels(&series, truth);
    if !truth.is_empty() && !labels.iter().any(|&l| l) {
        return Err(Error::Validation(
            "ground truth covers no frame of the detection output".into(),
        ));
    }

    let (apd_value, auc, curve) = if truth.is_empty() {
        (None, None, PrecisionDelayCurve::default())
    } else {
        let thresholds = default_thresholds(&series, grid_points);
        let curve = precision_delay_curve(&series, truth, &thresholds)?;
        let scores: Vec<f64> = series.iter().flat_map(|s| s.statistics.iter().copied()).collect();
        let auc = frame_auc(&scores, &labels).ok();
        (Some(apd(&curve)), auc, curve)
    };

    let mut by_video: BTreeMap<&str, Vec<&FrameRecord>> = BTreeMap::new();
    for r in records {
        by_video.entry(r.video_id.as_str()).or_default().push(r);
    }
    let mut false_runs = 0;
    for (video, recs) in &by_video {
        let events: Vec<&GroundTruthEvent> =
            truth.iter().filter(|e| e.video_id == *video).collect();
        let frames: Vec<u64> = recs.iter().map(|r| r.frame_index).collect();
        false_runs += runs_where(&frames, |i| recs[i].alarm)
            .iter()
            .filter(|run| !events.iter().any(|e| run.overlaps(e)))
            .count();
    }
    let nominal_frames = labels.iter().filter(|&&l| !l).count() as u64;
    let far = measure_far(false_runs, nominal_frames)?;
    Ok(EvalReport {
        apd: apd_value,
        frame_auc: auc,
        empirical_far: far.far,
        false_alarm_period: far.period.is_finite().then_some(far.period),
        false_alarm_runs: false_runs,
        nominal_frames,
        events: truth.len(),
        frames: records.len(),
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(video: &str, start: u64, end: u64, len: u64) -> GroundTruthEvent {
        GroundTruthEvent {
            video_id: video.into(),
            start_frame: start,
            end_frame: end,
            segment_length: len,
        }
    }

    fn curve(pts: &[(f64, f64)]) -> PrecisionDelayCurve {
        PrecisionDelayCurve {
            points: pts
                .iter()
                .map(|&(gamma, precision)| CurvePoint {
                    threshold: 0.0,
                    gamma,
                    precision,
                })
                .collect(),
        }
    }

    #[test]
    fn apd_examples() {
        assert_eq!(apd(&curve(&[(0.0, 1.0), (1.0, 1.0)])), 1.0);
        let c = curve(&[(0.0, 0.8), (0.5, 0.8), (1.0, 0.6)]);
        assert!((apd(&c) - 0.75).abs() < 1e-12);
        assert_eq!(apd(&PrecisionDelayCurve::default()), 0.0);
        assert!((apd(&curve(&[(0.3, 0.4)])) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn perfect_detector_single_point() {
        let mut stats = vec![0.0; 110];
        for s in &mut stats[10..30] {
            *s = 5.0;
        }
        let series = vec![VideoSeries::contiguous("v", stats)];
        let truth = vec![event("v", 10, 29, 110)];
        let c = precision_delay_curve(&series, &truth, &default_thresholds(&series, 200)).unwrap();
        assert_eq!(c.points.len(), 1);
        assert_eq!((c.points[0].gamma, c.points[0].precision), (0.0, 1.0));
        assert!((apd(&c) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn silent_detector_empty_curve() {
        let series = vec![VideoSeries::contiguous("v", vec![0.0; 50])];
        let truth = vec![event("v", 10, 20, 50)];
        let c = precision_delay_curve(&series, &truth, &[1.0, 2.0]).unwrap();
        assert!(c.is_empty());
        assert_eq!(apd(&c), 0.0);
    }

    #[test]
    fn hand_computed_point() {
        // event [10, 60] in a 110-frame segment; alarm run from 35; false run at 80
        let mut stats = vec![0.0; 110];
        for s in &mut stats[35..45] {
            *s = 1.0;
        }
        for s in &mut stats[80..83] {
            *s = 1.0;
        }
        let series = vec![VideoSeries::contiguous("v", stats)];
        let truth = vec![event("v", 10, 60, 110)];
        let c = precision_delay_curve(&series, &truth, &[1.0]).unwrap();
        assert_eq!(c.points.len(), 1);
        assert!((c.points[0].gamma - 0.25).abs() < 1e-15);
        assert_eq!(c.points[0].precision, 0.5);
    }

    #[test]
    fn run_before_event_has_zero_delay() {
        let mut stats = vec![0.0; 100];
        for s in &mut stats[5..15] {
            *s = 1.0;
        }
        let series = vec![VideoSeries::contiguous("v", stats)];
        let o = evaluate_threshold(&series, &[event("v", 10, 20, 100)], 1.0);
        assert_eq!((o.total_runs, o.true_runs, o.gamma), (1, 1, 0.0));
    }

    #[test]
    fn missing_series_is_an_error() {
        let series = vec![VideoSeries::contiguous("a", vec![0.0])];
        assert!(precision_delay_curve(&series, &[event("b", 0, 0, 1)], &[1.0]).is_err());
        assert!(precision_delay_curve(&series, &[], &[]).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(frame_auc(&[0.1, 0.9], &[false, true]).unwrap(), 1.0);
        assert_eq!(frame_auc(&[0.9, 0.1], &[false, true]).unwrap(), 0.0);
        assert_eq!(frame_auc(&[0.5, 0.5], &[false, true]).unwrap(), 0.5);
        assert!(frame_auc(&[0.5, 0.5], &[true, true]).is_err());
        assert!(frame_auc(&[0.5], &[true, false]).is_err());
    }

    #[test]
    fn far_examples() {
        let f = measure_far(0, 10_000).unwrap();
        assert_eq!(f.far, 0.0);
        assert!(f.period.is_infinite());
        let f = measure_far(5, 10_000).unwrap();
        assert_eq!(f.far, 5e-4);
        assert_eq!(f.period, 2000.0);
        assert!((f.far * f.period - 1.0).abs() < 1e-15);
        assert!(measure_far(1, 0).is_err());
    }

    #[test]
    fn runs_split_on_gaps_in_flags() {
        let frames = [3, 4, 5, 6, 7, 8];
        let flags = [true, true, false, true, false, true];
        let runs = runs_where(&frames, |i| flags[i]);
        assert_eq!(
            runs,
            vec![
                AlarmRun { start_frame: 3, end_frame: 4 },
                AlarmRun { start_frame: 6, end_frame: 6 },
                AlarmRun { start_frame: 8, end_frame: 8 },
            ]
        );
    }

    #[test]
    fn thinning_keeps_extremes() {
        let v: Vec<f64> = (0..1000).map(f64::from).collect();
        let t = thin(&v, 200);
        assert_eq!(t.len(), 200);
        assert_eq!((t[0], t[199]), (0.0, 999.0));
    }
}
