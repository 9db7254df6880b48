//! Gauss–Hermite rules for integrals against `exp(-x^2)`.

use std::f64::consts::PI;

/// Nodes and weights of an `n`-point Gauss–Hermite rule.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Computes the rule from the roots of the orthonormal Hermite function,
    /// bracketed on a grid finer than the smallest root gap and polished by
    /// Newton steps.
    pub fn new(n: usize) -> Self {
        assert!((1..=600).contains(&n), "Gauss-Hermite rule size must lie in 1..=600");
        let nf = n as f64;
        let upper = (2.0 * nf + 1.0).sqrt() + 0.5;
        let step = PI / (2.0 * nf + 1.0).sqrt() / 16.0;
        let mut roots = Vec::with_capacity(n.div_ceil(2));
        if n % 2 == 1 {
            roots.push(0.0);
        }
        let mut lo = if n % 2 == 1 { step * 0.5 } else { 0.0 };
        let mut f_lo = hermite(n, lo).0;
        while lo < upper && roots.len() < n.div_ceil(2) {
            let hi = lo + step;
            let f_hi = hermite(n, hi).0;
            if f_lo == 0.0 || f_lo.signum() != f_hi.signum() {
                roots.push(polish_root(n, lo, hi));
            }
            lo = hi;
            f_lo = f_hi;
        }
        assert_eq!(roots.len(), n.div_ceil(2), "failed to bracket every Hermite root");
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for &z in roots.iter().rev() {
            let deriv = hermite(n, z).1;
            nodes.push(z);
            weights.push(2.0 / (deriv * deriv));
        }
        let skip = n % 2;
        for i in (0..roots.len() - skip).rev() {
            nodes.push(-nodes[i]);
            weights.push(weights[i]);
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `ln E[exp(g(X))]` for `X ~ N(0, 1)`, evaluated in log space with the
    /// max-shift trick. `log_integrand` receives the factor value `x`.
    pub fn ln_normal_expectation(&self, mut log_integrand: impl FnMut(f64) -> f64) -> f64 {
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&u, &w)| w.ln() + log_integrand(std::f64::consts::SQRT_2 * u))
            .collect();
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
        max + sum.ln() - 0.5 * PI.ln()
    }
}

/// Orthonormal Hermite value `h_n(z)` and derivative, without the Gaussian
/// factor.
fn hermite(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = PI.powf(-0.25);
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}

fn polish_root(n: usize, mut lo: f64, mut hi: f64) -> f64 {
    let sign_lo = hermite(n, lo).0.signum();
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if hermite(n, mid).0.signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut z = 0.5 * (lo + hi);
    for _ in 0..5 {
        let (value, deriv) = hermite(n, z);
        let next = z - value / deriv;
        if !(next > lo - (hi - lo) && next < hi + (hi - lo)) {
            break;
        }
        z = next;
    }
    z
}
