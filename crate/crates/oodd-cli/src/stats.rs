//! Iteration-count statistics with Tukey-fence outlier removal.

use oodd::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationStats {
    pub mean: f64,
    pub std: f64,
    pub n_outliers: usize,
}

/// Linear-interpolation quantile of a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Mean and population standard deviation after removing samples outside
/// the Tukey fence [Q1 - 1.5 IQR, Q3 + 1.5 IQR].
pub fn iteration_stats(rows: &[f64]) -> Result<IterationStats> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("iteration statistics over zero rows"));
    }
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("iteration counts are finite"));
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let lo = q1 - 1.5 * iqr;
    let hi = q3 + 1.5 * iqr;
    let kept: Vec<f64> = sorted.iter().copied().filter(|&v| v >= lo && v <= hi).collect();
    let n_outliers = sorted.len() - kept.len();
    let mean = kept.iter().sum::<f64>() / kept.len() as f64;
    let var = kept.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / kept.len() as f64;
    Ok(IterationStats {
        mean,
        std: var.sqrt(),
        n_outliers,
    })
}
