//! Standard normal distribution helpers.
//!
//! `cdf` is built on the complementary error function so both tails keep
//! full relative precision; `quantile` polishes the inverse error function
//! with one Halley step against the same `cdf`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

/// `ln(sqrt(2 * pi))`.
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density.
#[inline]
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Log of the standard normal density.
#[inline]
pub fn ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal distribution function `Phi(x)`.
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// `ln Phi(x)`, accurate far into the lower tail where `Phi` underflows.
pub fn ln_cdf(x: f64) -> f64 {
    if x > -30.0 {
        return cdf(x).ln();
    }
    // Asymptotic series of the Mills ratio.
    let inv_x2 = 1.0 / (x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=8 {
        term *= -((2 * k - 1) as f64) * inv_x2;
        sum += term;
    }
    -0.5 * x * x - (-x).ln() - LN_SQRT_2PI + sum.ln()
}

/// Inverse of the standard normal distribution function.
///
/// Fails with a domain error unless `q` lies strictly inside `(0, 1)`.
pub fn quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile requires a level in (0, 1), got {q}"
        )));
    }
    let mut x = -SQRT_2 * erfc_inv(2.0 * q);
    // Halley refinement; work on the smaller tail to avoid cancellation.
    let density = pdf(x);
    if density > 0.0 && x.is_finite() {
        let err = if x < 0.0 {
            cdf(x) - q
        } else {
            (1.0 - q) - cdf(-x)
        };
        let u = err / density;
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}
