//! The fixed-weight recurrent unit reproduces the CUSUM statistic; training
//! adjusts its three weights on nominal plus synthetic anomalous evidence.

use seqvad::calibrate;
use seqvad::detector::{statistic_series, train_rnn_detector, RnnDetector, RnnTrainConfig};
use seqvad::synth::{generate_nominal_stream, generate_scenario, ScenarioConfig};

fn main() -> seqvad::Result<()> {
    let m = 4;
    let config = ScenarioConfig::standard(m, 5);
    let model = calibrate(&generate_scenario(&config)?.train, 0.05, 0.05, 10)?;
    let evidences = model.evidences(&generate_nominal_stream(&config, 2000, 8)?)?;

    let fixed = RnnDetector::fixed_weight(&model);
    let same = fixed.run(&evidences) == statistic_series(&evidences, m, model.drift_offset());
    println!("fixed-weight unit matches statistic: {same}");

    let (trained, report) = train_rnn_detector(&evidences, &model, &RnnTrainConfig::default(), 2)?;
    println!("loss {:.5} -> {:.5}", report.initial_loss, report.final_loss);
    println!("weights before {:?}", fixed.params());
    println!("weights after  {:?}", trained.params());
    Ok(())
}
