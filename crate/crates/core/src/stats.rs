//! Small statistical helpers shared by the estimators.
//!
//! Every reduction over paths goes through [`ordered_sum`], which splits the
//! input into fixed-size chunks, reduces each chunk sequentially and then
//! folds the partial sums in chunk order. The result therefore does not depend
//! on how many worker threads rayon happens to use.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

/// Chunk length for ordered parallel reductions.
pub const REDUCTION_CHUNK: usize = 8192;

/// Monte Carlo point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn new(value: f64, std_error: f64) -> Self {
        Self { value, std_error }
    }

    pub fn exact(value: f64) -> Self {
        Self {
            value,
            std_error: 0.0,
        }
    }
}

impl std::ops::Neg for Estimate {
    type Output = Self;

    fn neg(self) -> Self {
        Self {
            value: -self.value,
            std_error: self.std_error,
        }
    }
}

/// Sum that is bit-identical regardless of the rayon pool size.
pub fn ordered_sum(values: &[f64]) -> f64 {
    ordered_map_sum(values.len(), |i| values[i])
}

/// Ordered reduction of `f(i)` for `i in 0..n`.
pub fn ordered_map_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let chunks = n.div_ceil(REDUCTION_CHUNK);
    let partials: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * REDUCTION_CHUNK;
            let hi = (lo + REDUCTION_CHUNK).min(n);
            (lo..hi).map(&f).sum::<f64>()
        })
        .collect();
    partials.into_iter().sum()
}

/// Sample mean and standard error of the mean of `f(i)`, `i in 0..n`.
///
/// Uses the two-pass formula for the variance.
pub fn mean_and_se<F>(n: usize, f: F) -> Estimate
where
    F: Fn(usize) -> f64 + Sync,
{
    if n == 0 {
        return Estimate::new(f64::NAN, f64::NAN);
    }
    // Shifting by the first sample keeps constant inputs exact.
    let pivot = f(0);
    let mean = pivot + ordered_map_sum(n, |i| f(i) - pivot) / n as f64;
    if n == 1 {
        return Estimate::new(mean, 0.0);
    }
    let ss = ordered_map_sum(n, |i| {
        let d = f(i) - mean;
        d * d
    });
    let var = ss / (n - 1) as f64;
    Estimate::new(mean, (var / n as f64).sqrt())
}

/// Three standard errors of the difference of two independent-style estimates.
pub fn pooled_tolerance(se_a: f64, se_b: f64) -> f64 {
    3.0 * (se_a * se_a + se_b * se_b).sqrt()
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    // Normal::new(0, 1) cannot fail.
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// `|a - b| <= max(rel * max(|a|, |b|), abs_tol)`
pub fn within(a: f64, b: f64, rel: f64, abs_tol: f64) -> bool {
    (a - b).abs() <= (rel * a.abs().max(b.abs())).max(abs_tol)
}
