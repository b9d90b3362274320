use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::NominalModel;

/// Draws `n` anomalous evidences uniformly on the open interval
/// `(D_α, 2·D_max)`.
pub fn generate_synthetic_evidence(model: &NominalModel, n: usize, seed: u64) -> Result<Vec<f64>> {
    let lo = model.calibration.d_alpha;
    let hi = 2.0 * model.calibration.d_max;
    if !(model.calibration.d_max > lo) {
        return Err(Error::Degenerate(format!(
            "D_max = {} does not exceed D_alpha = {lo}",
            model.calibration.d_max
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| loop {
            let v = rng.random_range(lo..hi);
            if v > lo {
                break v;
            }
        })
        .collect())
}
