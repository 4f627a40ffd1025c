use rand::seq::SliceRandom;

use super::{Dataset, SplitTag};
use crate::error::{Error, Result};
use crate::rng;

/// Randomly partitions `data` into train/dev/test parts.
///
/// Sizes are `round(f0 * n)`, `round(f1 * n)` and the remainder, so each
/// part is within one row of its requested share. Row order inside each part
/// follows the seeded permutation.
pub fn split_dataset(data: &Dataset, fractions: [f64; 3], seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(Error::Argument(format!(
            "split fractions must be non-negative, got {fractions:?}"
        )));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!(
            "split fractions must sum to 1, got {sum}"
        )));
    }
    let n = data.len();
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_dev = ((fractions[1] * n as f64).round() as usize).min(n - n_train);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, rng::streams::SPLIT));

    let part = |idx: &[usize], tag: SplitTag| Dataset {
        schema: data.schema.clone(),
        observations: idx.iter().map(|&i| data.observations[i].clone()).collect(),
        split: tag,
    };
    Ok((
        part(&order[..n_train], SplitTag::Train),
        part(&order[n_train..n_train + n_dev], SplitTag::Dev),
        part(&order[n_train + n_dev..], SplitTag::Test),
    ))
}
