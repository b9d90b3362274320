//! Monte Carlo check of the false alarm bound: count alarms on a long
//! nominal stream, restarting the statistic after each one.

use seqvad::calibrate;
use seqvad::detector::count_restart_alarms;
use seqvad::synth::{generate_nominal_stream, generate_scenario, ScenarioConfig};

fn main() -> seqvad::Result<()> {
    let m = 4;
    let mut config = ScenarioConfig::standard(m, 11);
    config.n_train_frames = 10_000;
    let model = calibrate(&generate_scenario(&config)?.train, 0.05, 0.05, 10)?;
    let stream = generate_nominal_stream(&config, 200_000, 3)?;
    let evidences = model.evidences(&stream)?;

    println!("beta      h          bound      empirical");
    for beta in [0.1, 0.05, 0.01] {
        let c = model.calibration.with_beta(beta)?;
        let alarms = count_restart_alarms(&evidences, m, model.drift_offset(), c.h);
        let far = alarms as f64 / evidences.len() as f64;
        println!("{beta:<9} {:<10.4} {:<10.3e} {far:.3e}", c.h, c.far_bound());
    }
    Ok(())
}
