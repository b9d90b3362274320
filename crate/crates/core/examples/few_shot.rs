//! Few-shot recalibration for a new scene from K shots of ten frames each.

use seqvad::calibrate;
use seqvad::detector::{adapt_few_shot, FRAMES_PER_SHOT};
use seqvad::synth::{generate_nominal_stream, generate_scenario, NominalComponent, ScenarioConfig};

fn main() -> seqvad::Result<()> {
    let m = 4;
    let config = ScenarioConfig::standard(m, 13);
    let base = calibrate(&generate_scenario(&config)?.train, 0.05, 0.05, 10)?;

    // The new scene: same clusters, moved and widened.
    let mut scene = config.clone();
    scene.nominal_components = vec![
        NominalComponent { mean: vec![0.4; m], scale: 0.2 },
        NominalComponent { mean: vec![0.8; m], scale: 0.1 },
    ];
    let shots = generate_nominal_stream(&scene, 20 * FRAMES_PER_SHOT, 14)?;

    let b = &base.calibration;
    println!("base    D_alpha={:.4} phi={:.4} h={:.4}", b.d_alpha, b.phi, b.h);
    for k in [0, 5, 10, 20] {
        let adapted = adapt_few_shot(&base, &shots, k, 0.05)?;
        let c = &adapted.calibration;
        println!(
            "K={k:<3}   D_alpha={:.4} phi={:.4} h={:.4} reference={}",
            c.d_alpha,
            c.phi,
            c.h,
            adapted.training.len()
        );
    }
    Ok(())
}
