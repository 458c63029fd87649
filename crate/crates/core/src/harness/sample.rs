use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::SessionRecord;

/// Drops each record independently with probability `rate`, keeping order.
pub fn random_drop(records: &[SessionRecord], rate: f64, seed: u64) -> Result<Vec<SessionRecord>> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Domain(format!(
            "drop rate must be in [0, 1], got {rate}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(records
        .iter()
        .filter(|_| rng.random::<f64>() >= rate)
        .cloned()
        .collect())
}
