//! Calibrate on synthetic nominal frames, then run the online detector over
//! each test video and print the localized events next to the truth.

use seqvad::detector::detect_video;
use seqvad::synth::{generate_scenario, video_id, ScenarioConfig};
use seqvad::{calibrate, FrameObservation};

fn main() -> seqvad::Result<()> {
    let config = ScenarioConfig::standard(4, 7);
    let scenario = generate_scenario(&config)?;
    let model = calibrate(&scenario.train, 0.05, 0.05, 10)?;
    let c = &model.calibration;
    println!(
        "D_alpha={:.4} phi={:.4} omega0={:.4} h={:.4}",
        c.d_alpha, c.phi, c.omega0, c.h
    );

    for v in 0..config.n_videos {
        let id = video_id(v);
        let frames: Vec<&FrameObservation> =
            scenario.test.iter().filter(|f| f.video_id == id).collect();
        let out = detect_video(&model, &id, &frames, 5)?;
        let truth = scenario.truth.iter().find(|e| e.video_id == id).unwrap();
        println!("{id}: truth {}..={}", truth.start_frame, truth.end_frame);
        for ev in &out.events {
            println!(
                "  alarm at {} -> event {}..={} (peak {:.3})",
                ev.alarm_frame, ev.start_frame, ev.end_frame, ev.peak_statistic
            );
        }
    }
    Ok(())
}
