//! Train the neural distance regressor on leave-one-out kNN distances and
//! compare its predictions with exact distances on held-out objects.

use seqvad::calibration::{calibrate_with, CalibrateOptions, RegressorTraining};
use seqvad::evidence::{knn_distance, RegressorConfig};
use seqvad::synth::{generate_nominal_stream, generate_scenario, ScenarioConfig};

fn main() -> seqvad::Result<()> {
    let config = ScenarioConfig::standard(8, 3);
    let train = generate_scenario(&config)?.train;
    let opts = CalibrateOptions {
        regressor: Some(RegressorTraining {
            config: RegressorConfig {
                epochs: 100,
                ..RegressorConfig::default()
            },
            lambda: 1e-6,
            seed: 1,
            enable: true,
        }),
        ..CalibrateOptions::default()
    };
    let model = calibrate_with(&train, &opts)?;
    let net = model.regressor.as_ref().expect("regressor trained");

    let held_out = generate_nominal_stream(&config, 500, 99)?;
    let (mut se, mut sum, mut n) = (0.0, 0.0, 0.0);
    for object in held_out.iter().flat_map(|f| &f.objects) {
        let x = model.project(object)?;
        let exact = knn_distance(&x, &model.training)?;
        se += (net.predict(&x.0)? - exact).powi(2);
        sum += exact;
        n += 1.0;
    }
    let rmse = (se / n).sqrt();
    println!("held-out objects: {n}");
    println!("RMSE {rmse:.5}, mean distance {:.5}, ratio {:.4}", sum / n, rmse / (sum / n));
    Ok(())
}
