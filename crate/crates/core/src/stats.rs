//! Sample statistics shared by the sampler summaries and capital estimates.

use serde::{Deserialize, Serialize};

/// Empirical quantile of an ascending-sorted sample.
///
/// Uses rank `h = q (n + 1)` clamped to `[1, n]` and interpolates linearly
/// between the adjacent order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let h = (q * (n as f64 + 1.0)).clamp(1.0, n as f64);
    let lo = h.floor();
    let i = lo as usize - 1;
    if i + 1 >= n {
        return sorted[n - 1];
    }
    sorted[i] + (h - lo) * (sorted[i + 1] - sorted[i])
}

/// Sorts a copy of `values` and returns its empirical `q`-quantile.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

/// Location, spread and shape of one posterior column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub count: usize,
    pub mean: f64,
    /// Midpoint of the tallest Freedman–Diaconis histogram bin.
    pub mode: f64,
    pub stdev: f64,
    /// Standardized third moment; `None` for a constant column.
    pub skewness: Option<f64>,
    /// Standardized fourth moment (3 for a normal law); `None` for a
    /// constant column.
    pub kurtosis: Option<f64>,
    /// `stdev / mean`; `None` when the mean is zero and the spread is not.
    pub cv: Option<f64>,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

impl ColumnSummary {
    /// Summarizes a non-empty sample. Returns `None` for an empty one.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for v in values {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        m2 /= n;
        m3 /= n;
        m4 /= n;
        let stdev = m2.sqrt();
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let constant = sorted[0] == sorted[sorted.len() - 1];
        let (skewness, kurtosis) = if constant || m2 == 0.0 {
            (None, None)
        } else {
            (Some(m3 / m2.powf(1.5)), Some(m4 / (m2 * m2)))
        };
        let cv = if constant {
            Some(0.0)
        } else if mean != 0.0 {
            Some(stdev / mean)
        } else {
            None
        };
        Some(Self {
            count: values.len(),
            mean: if constant { sorted[0] } else { mean },
            mode: histogram_mode(&sorted),
            stdev: if constant { 0.0 } else { stdev },
            skewness,
            kurtosis,
            cv,
            q25: quantile_sorted(&sorted, 0.25),
            q50: quantile_sorted(&sorted, 0.5),
            q75: quantile_sorted(&sorted, 0.75),
        })
    }
}

const MAX_BINS: usize = 100_000;

/// Mode as the midpoint of the tallest bin of a Freedman–Diaconis histogram.
pub fn histogram_mode(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    let (min, max) = (sorted[0], sorted[n - 1]);
    if min == max {
        return min;
    }
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let mut width = 2.0 * iqr / (n as f64).cbrt();
    if !(width > 0.0) {
        // heavy ties in the middle half; fall back to the square-root rule
        width = (max - min) / (n as f64).sqrt();
    }
    let bins = (((max - min) / width).ceil() as usize).clamp(1, MAX_BINS);
    let width = (max - min) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in sorted {
        let k = (((v - min) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let (best, _) = counts
        .iter()
        .enumerate()
        .fold((0, 0), |acc, (k, &c)| if c > acc.1 { (k, c) } else { acc });
    min + (best as f64 + 0.5) * width
}

/// One-sample Kolmogorov–Smirnov test against a continuous distribution
/// function. Returns `(statistic, asymptotic p-value)`.
pub fn ks_test(values: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max);
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    (d, kolmogorov_survival(lambda))
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
