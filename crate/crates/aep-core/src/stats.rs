//! Replica-ensemble statistics: means, variances, batch-means standard
//! errors and the delta-method error for variance estimates.
//!
//! Replicas are i.i.d. by construction, so standard errors come from
//! replica-level batch means with a fixed batch count; summation order is
//! fixed by replica index for bit-reproducibility.

use serde::{Deserialize, Serialize};

/// Number of batches used for batch-means standard errors.
pub const DEFAULT_BATCHES: usize = 40;

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub value: f64,
    pub se: f64,
    pub n: usize,
}

impl EstimateWithCI {
    pub fn new(value: f64, se: f64, n: usize) -> Self {
        EstimateWithCI { value, se, n }
    }

    /// `sqrt(se_a^2 + se_b^2)` for comparing two independent estimates.
    pub fn combined_se(&self, other: &EstimateWithCI) -> f64 {
        (self.se * self.se + other.se * other.se).sqrt()
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Mean with standard error of the mean.
pub fn mean_with_se(xs: &[f64]) -> EstimateWithCI {
    let n = xs.len();
    let m = mean(xs);
    let se = (sample_variance(xs) / n as f64).sqrt();
    EstimateWithCI::new(m, se, n)
}

/// Sample variance with the delta-method standard error
/// `sqrt((m4 - s^4) / n)` based on the fourth central moment.
pub fn variance_with_se(xs: &[f64]) -> EstimateWithCI {
    let n = xs.len();
    let m = mean(xs);
    let s2 = sample_variance(xs);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n as f64;
    let var_of_var = (m4 - s2 * s2).max(0.0) / n as f64;
    EstimateWithCI::new(s2, var_of_var.sqrt(), n)
}

/// Splits `0..n` into `batches` contiguous index ranges of near-equal size.
pub fn batch_ranges(n: usize, batches: usize) -> Vec<std::ops::Range<usize>> {
    let batches = batches.min(n).max(1);
    let base = n / batches;
    let extra = n % batches;
    let mut out = Vec::with_capacity(batches);
    let mut start = 0;
    for b in 0..batches {
        let len = base + usize::from(b < extra);
        out.push(start..start + len);
        start += len;
    }
    out
}

/// Batch-means estimate of an arbitrary statistic: evaluates `stat` on the
/// full sample for the point estimate and on each contiguous batch for the
/// standard error.
pub fn batch_means<T, F>(data: &[T], batches: usize, stat: F) -> EstimateWithCI
where
    F: Fn(&[T]) -> f64,
{
    let n = data.len();
    let full = stat(data);
    let ranges = batch_ranges(n, batches);
    let b = ranges.len();
    if b < 2 {
        return EstimateWithCI::new(full, f64::NAN, n);
    }
    let vals: Vec<f64> = ranges.iter().map(|r| stat(&data[r.clone()])).collect();
    let se = (sample_variance(&vals) / b as f64).sqrt();
    EstimateWithCI::new(full, se, n)
}

/// Batch-means standard error from precomputed per-batch values, with the
/// point estimate supplied separately (used by streaming accumulators).
pub fn se_from_batch_values(batch_values: &[f64]) -> f64 {
    let b = batch_values.len();
    if b < 2 {
        return f64::NAN;
    }
    (sample_variance(batch_values) / b as f64).sqrt()
}
