use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitAssignment {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

pub const DEFAULT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];

/// Part sizes for `n` items: floor each share, hand the remainder out to
/// test, then val, then train, and finally move one item from train into
/// any part left empty.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<(usize, usize, usize)> {
    let total: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!(
            "split ratios must be positive and sum to 1, got {ratios:?}"
        )));
    }
    if n < 3 {
        return Err(Error::Precondition(format!(
            "need at least 3 labeled nodes to split, found {n}"
        )));
    }
    let mut sizes: Vec<usize> = ratios.iter().map(|r| (r * n as f64 + 1e-9).floor() as usize).collect();
    let mut remainder = n - sizes.iter().sum::<usize>();
    for part in [2, 1, 0].into_iter().cycle() {
        if remainder == 0 {
            break;
        }
        sizes[part] += 1;
        remainder -= 1;
    }
    for part in [1, 2] {
        if sizes[part] == 0 {
            sizes[part] = 1;
            sizes[0] -= 1;
        }
    }
    Ok((sizes[0], sizes[1], sizes[2]))
}

/// Seeded shuffle then contiguous cut; each part is returned sorted.
pub fn split(labeled_ids: &[usize], ratios: [f64; 3], seed: u64) -> Result<SplitAssignment> {
    let (n_train, n_val, _) = split_sizes(labeled_ids.len(), ratios)?;
    let mut ids = labeled_ids.to_vec();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = ids.split_off(n_train + n_val);
    let mut val = ids.split_off(n_train);
    let mut train = ids;
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitAssignment { train, val, test })
}
