use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::BenchError;

pub const DEFAULT_RESAMPLES: usize = 10_000;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Linear-interpolation quantile of sorted data (the "type 7" definition).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap of the mean: `resamples` draws of `n` items with replacement.
/// The interval is widened if needed so it contains the sample mean.
pub fn bootstrap_ci(scores: &[f64], level: f64, resamples: usize, seed: u64) -> Result<(f64, f64), BenchError> {
    if scores.len() < 2 {
        return Err(BenchError::InsufficientData(scores.len()));
    }
    let n = scores.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples.max(1))
        .map(|_| {
            let mut s = 0.0;
            for _ in 0..n {
                s += scores[rng.random_range(0..n)];
            }
            s / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level.clamp(0.0, 1.0)) / 2.0;
    let m = mean(scores);
    let low = quantile_sorted(&means, alpha).min(m);
    let high = quantile_sorted(&means, 1.0 - alpha).max(m);
    Ok((low, high))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_distribution() {
        let (l, h) = bootstrap_ci(&[0.9; 12], 0.95, 2000, 1).unwrap();
        assert!((l - 0.9).abs() < 1e-12 && (h - 0.9).abs() < 1e-12);
    }

    #[test]
    fn deterministic_under_seed() {
        let xs: Vec<f64> = (0..40).map(|i| (i % 7) as f64 / 7.0).collect();
        assert_eq!(bootstrap_ci(&xs, 0.95, 3000, 42).unwrap(), bootstrap_ci(&xs, 0.95, 3000, 42).unwrap());
        assert_ne!(bootstrap_ci(&xs, 0.95, 3000, 42).unwrap(), bootstrap_ci(&xs, 0.95, 3000, 43).unwrap());
    }

    #[test]
    fn binomial_band() {
        // Mean of 100 fair coin flips: sd 0.05, so the 95% interval is about 0.5 ± 0.098.
        let xs: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let (l, h) = bootstrap_ci(&xs, 0.95, DEFAULT_RESAMPLES, 7).unwrap();
        assert!((l - 0.40).abs() <= 0.03, "{l}");
        assert!((h - 0.60).abs() <= 0.03, "{h}");
    }

    #[test]
    fn too_few() {
        assert_eq!(bootstrap_ci(&[1.0], 0.95, 10, 0), Err(BenchError::InsufficientData(1)));
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile_sorted(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(quantile_sorted(&[1.0, 2.0, 3.0, 4.0], 0.0), 1.0);
        assert_eq!(quantile_sorted(&[1.0, 2.0, 3.0, 4.0], 1.0), 4.0);
    }
}
