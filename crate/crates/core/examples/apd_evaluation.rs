//! Event-level evaluation: precision-delay curve, its area (APD), frame AUC
//! and the empirical false alarm rate of a detector run.

use seqvad::detector::detect_video;
use seqvad::metrics::evaluate_records;
use seqvad::synth::{generate_scenario, video_id, ScenarioConfig};
use seqvad::{calibrate, FrameObservation};

fn main() -> seqvad::Result<()> {
    let config = ScenarioConfig::standard(4, 9);
    let scenario = generate_scenario(&config)?;
    let model = calibrate(&scenario.train, 0.05, 0.05, 10)?;

    let mut records = Vec::new();
    for v in 0..config.n_videos {
        let id = video_id(v);
        let frames: Vec<&FrameObservation> =
            scenario.test.iter().filter(|f| f.video_id == id).collect();
        records.extend(detect_video(&model, &id, &frames, 5)?.records);
    }
    let report = evaluate_records(&records, &scenario.truth, 200)?;
    println!("APD {:.4}", report.apd.unwrap_or(f64::NAN));
    println!("frame AUC {:.4}", report.frame_auc.unwrap_or(f64::NAN));
    println!(
        "false alarm runs {} over {} nominal frames",
        report.false_alarm_runs, report.nominal_frames
    );
    for p in report.curve.points.iter().step_by(20) {
        println!("  h={:<10.4} gamma={:.4} precision={:.4}", p.threshold, p.gamma, p.precision);
    }
    Ok(())
}
