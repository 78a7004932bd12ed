use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_TAIL: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub xmin: u64,
    pub n_tail: usize,
    /// KS distance between the tail's empirical CCDF and the fitted law.
    pub ks_distance: f64,
}

/// Continuous approximation of the discrete MLE over `tail` (sorted, all `>= xmin`).
fn alpha_mle(tail: &[u64], xmin: u64) -> f64 {
    let shift = xmin as f64 - 0.5;
    let s: f64 = tail.iter().map(|&x| (x as f64 / shift).ln()).sum();
    1.0 + tail.len() as f64 / s
}

fn ks_distance(tail: &[u64], xmin: u64, alpha: f64) -> f64 {
    let n = tail.len() as f64;
    let shift = xmin as f64 - 0.5;
    let mut worst: f64 = 0.0;
    let mut i = 0;
    while i < tail.len() {
        let v = tail[i];
        let empirical = (tail.len() - i) as f64 / n;
        let model = ((v as f64 - 0.5) / shift).powf(1.0 - alpha);
        worst = worst.max((empirical - model).abs());
        while i < tail.len() && tail[i] == v {
            i += 1;
        }
    }
    worst
}

fn fit_at(sorted: &[u64], xmin: u64) -> Result<PowerLawFit> {
    let start = sorted.partition_point(|&x| x < xmin);
    let tail = &sorted[start..];
    if tail.len() < MIN_TAIL {
        return Err(Error::Precondition(format!(
            "power-law fit needs at least {MIN_TAIL} values >= {xmin}, found {}",
            tail.len()
        )));
    }
    let alpha = alpha_mle(tail, xmin);
    Ok(PowerLawFit {
        alpha,
        xmin,
        n_tail: tail.len(),
        ks_distance: ks_distance(tail, xmin, alpha),
    })
}

/// Discrete power-law fit. Without `xmin`, every observed value leaving at
/// least [`MIN_TAIL`] points is tried and the smallest KS distance wins
/// (ties to the lower `xmin`). Zeros never enter a tail.
pub fn powerlaw_fit(values: &[u64], xmin: Option<u64>) -> Result<PowerLawFit> {
    let mut sorted: Vec<u64> = values.iter().copied().filter(|&x| x > 0).collect();
    sorted.sort_unstable();
    if sorted.first() == sorted.last() {
        return Err(Error::Precondition(
            "power-law fit needs at least two distinct positive values".into(),
        ));
    }
    if let Some(x) = xmin {
        if x == 0 {
            return Err(Error::Precondition("xmin must be positive".into()));
        }
        return fit_at(&sorted, x);
    }
    let mut candidates = sorted.clone();
    candidates.dedup();
    let mut best: Option<PowerLawFit> = None;
    for x in candidates {
        let start = sorted.partition_point(|&v| v < x);
        let tail = &sorted[start..];
        if tail.len() < MIN_TAIL {
            break;
        }
        if tail[0] == tail[tail.len() - 1] {
            continue;
        }
        let fit = fit_at(&sorted, x)?;
        if best.is_none_or(|b| fit.ks_distance < b.ks_distance) {
            best = Some(fit);
        }
    }
    best.ok_or_else(|| Error::Precondition(format!("fewer than {MIN_TAIL} values in any non-degenerate tail")))
}

/// Exact draw from `P(x) ∝ x^-alpha` on `x >= xmin`, by rejection from a
/// floored continuous Pareto.
pub fn sample_discrete_power_law<R: Rng + ?Sized>(rng: &mut R, alpha: f64, xmin: u64) -> u64 {
    assert!(alpha > 1.0 && xmin >= 1, "need alpha > 1 and xmin >= 1");
    let a1 = alpha - 1.0;
    let x0 = xmin as f64;
    let bound = ((x0 + 1.0) / x0).powf(alpha);
    loop {
        let u: f64 = rng.random();
        let y = x0 * (1.0 - u).powf(-1.0 / a1);
        if !y.is_finite() || y >= u64::MAX as f64 {
            continue;
        }
        let k = y.floor();
        let target = k.powf(-alpha);
        let proposal = (k.powf(-a1) - (k + 1.0).powf(-a1)) / a1;
        if rng.random::<f64>() * bound * proposal <= target {
            return k as u64;
        }
    }
}

/// `(x, count)` for every distinct positive value, ascending.
pub fn frequency_table(values: &[u64]) -> Vec<(u64, usize)> {
    let mut sorted: Vec<u64> = values.iter().copied().filter(|&x| x > 0).collect();
    sorted.sort_unstable();
    let mut out: Vec<(u64, usize)> = Vec::new();
    for x in sorted {
        match out.last_mut() {
            Some((v, c)) if *v == x => *c += 1,
            _ => out.push((x, 1)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn draw(alpha: f64, xmin: u64, n: usize, seed: u64) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| sample_discrete_power_law(&mut rng, alpha, xmin)).collect()
    }

    #[test]
    fn sampler_matches_pmf_head() {
        // P(1) = 1/zeta(2.5) for alpha 2.5, xmin 1
        let v = draw(2.5, 1, 200_000, 9);
        let ones = v.iter().filter(|&&x| x == 1).count() as f64 / v.len() as f64;
        let zeta: f64 = (1..200_000).map(|k| (k as f64).powf(-2.5)).sum::<f64>() + 200_000f64.powf(-1.5) / 1.5;
        assert!((ones - 1.0 / zeta).abs() < 0.005, "{ones}");
    }

    #[test]
    fn recovers_alpha_from_unit_xmin_sample() {
        let fit = powerlaw_fit(&draw(2.5, 1, 10_000, 1), None).unwrap();
        assert!((2.4..=2.6).contains(&fit.alpha), "{fit:?}");
    }

    #[test]
    fn fixed_xmin_hand_value() {
        // tail {2, 4}: 1 + 2 / (ln(2/1.5) + ln(4/1.5))
        let mut v = vec![2, 4];
        v.extend([1; 3]);
        let sorted = {
            let mut s = v.clone();
            s.sort_unstable();
            s
        };
        let a = alpha_mle(&sorted[3..], 2);
        assert!((a - (1.0 + 2.0 / ((2.0f64 / 1.5).ln() + (4.0f64 / 1.5).ln()))).abs() < 1e-12);
    }

    #[test]
    fn guards() {
        assert!(powerlaw_fit(&[7; 50], None).is_err());
        assert!(powerlaw_fit(&[1, 2, 3], None).is_err());
        assert!(powerlaw_fit(&(1..100).collect::<Vec<_>>(), Some(95)).is_err());
        assert!(powerlaw_fit(&(1..100).collect::<Vec<_>>(), Some(0)).is_err());
    }

    #[test]
    fn doubling_values_and_xmin_barely_moves_alpha() {
        let v = draw(2.5, 50, 10_000, 3);
        let a = powerlaw_fit(&v, Some(50)).unwrap().alpha;
        let doubled: Vec<u64> = v.iter().map(|x| x * 2).collect();
        let b = powerlaw_fit(&doubled, Some(100)).unwrap().alpha;
        assert!((a - b).abs() < 0.05, "{a} {b}");
    }

    #[test]
    fn frequency_table_counts() {
        assert_eq!(frequency_table(&[3, 1, 0, 3, 2, 3]), vec![(1, 1), (2, 1), (3, 3)]);
    }
}
