//! Accumulated statistic against per-frame scoring on a scenario with weak
//! anomalies and isolated nominal outliers.

use std::collections::BTreeMap;

use seqvad::calibrate;
use seqvad::detector::{drift, statistic_series};
use seqvad::metrics::{apd, default_thresholds, precision_delay_curve, VideoSeries};
use seqvad::synth::{generate_scenario, ScenarioConfig};

fn main() -> seqvad::Result<()> {
    let m = 18;
    let mut config = ScenarioConfig::standard(m, 12);
    config.anomaly_shift = (0..m).map(|d| if d % 2 == 0 { 0.1 } else { -0.1 }).collect();
    config.outlier_shift = (0..m).map(|d| if d % 2 == 0 { -0.3 } else { 0.3 }).collect();
    config.outlier_rate = 0.02;
    let scenario = generate_scenario(&config)?;
    let model = calibrate(&scenario.train, 0.05, 0.05, 10)?;
    let offset = model.drift_offset();

    let mut videos: BTreeMap<&str, Vec<_>> = BTreeMap::new();
    for f in &scenario.test {
        videos.entry(f.video_id.as_str()).or_default().push(f.clone());
    }
    let (mut seq, mut single) = (Vec::new(), Vec::new());
    for (id, frames) in &videos {
        let e = model.evidences(frames)?;
        seq.push(VideoSeries::contiguous(*id, statistic_series(&e, m, offset)));
        single.push(VideoSeries::contiguous(*id, e.iter().map(|&d| drift(d, m, offset)).collect()));
    }
    for (name, series) in [("sequential", &seq), ("single-shot", &single)] {
        let curve = precision_delay_curve(series, &scenario.truth, &default_thresholds(series, 200))?;
        println!("{name:<12} APD {:.4}", apd(&curve));
    }
    Ok(())
}
