//! Model parameters and the closed-form conditional quantities of the
//! one-factor default/recovery model.
//!
//! A firm defaults when `C = sqrt(rho) X + sqrt(1 - rho) Z_c` falls below
//! `Phi^-1(p)`; its recovery is `R = mu + sigma sqrt(omega) X + sigma
//! sqrt(1 - omega) Z`. Losses per defaulted loan are `max(1 - R, 0)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// The five model parameters `(p, rho, mu, sigma, omega)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    p: f64,
    rho: f64,
    mu: f64,
    sigma: f64,
    omega: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    p: f64,
    rho: f64,
    mu: f64,
    sigma: f64,
    omega: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        ModelParams::new(raw.p, raw.rho, raw.mu, raw.sigma, raw.omega)
    }
}

impl From<ModelParams> for RawParams {
    fn from(m: ModelParams) -> Self {
        RawParams {
            p: m.p,
            rho: m.rho,
            mu: m.mu,
            sigma: m.sigma,
            omega: m.omega,
        }
    }
}

fn check_open(name: &'static str, value: f64, lo: f64, hi: f64, bounds: &'static str) -> Result<()> {
    if value > lo && value < hi {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, value, bounds })
    }
}

impl ModelParams {
    pub fn new(p: f64, rho: f64, mu: f64, sigma: f64, omega: f64) -> Result<Self> {
        check_open("p", p, 0.0, 1.0, "(0, 1)")?;
        check_open("rho", rho, 0.0, 1.0, "(0, 1)")?;
        check_open("mu", mu, 0.0, 1.0, "(0, 1)")?;
        check_open("sigma", sigma, 0.01, 1.0, "(0.01, 1)")?;
        if !(0.0..=1.0).contains(&omega) {
            return Err(Error::InvalidParameter {
                name: "omega",
                value: omega,
                bounds: "[0, 1]",
            });
        }
        Ok(Self {
            p,
            rho,
            mu,
            sigma,
            omega,
        })
    }

    /// Builds parameters from the default threshold `Phi^-1(p)` instead of `p`.
    pub fn from_threshold(threshold: f64, rho: f64, mu: f64, sigma: f64, omega: f64) -> Result<Self> {
        Self::new(normal::cdf(threshold), rho, mu, sigma, omega)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Default threshold `Phi^-1(p)`.
    pub fn threshold(&self) -> f64 {
        normal::quantile(self.p).expect("p is inside (0, 1) by construction")
    }

    /// Systematic recovery loading `sigma * sqrt(omega)`.
    pub fn sigma1(&self) -> f64 {
        self.sigma * self.omega.sqrt()
    }

    /// Idiosyncratic recovery loading `sigma * sqrt(1 - omega)`.
    pub fn sigma2(&self) -> f64 {
        self.sigma * (1.0 - self.omega).sqrt()
    }
}

/// How the conditional expected loss given default is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SMode {
    /// `E[max(1 - R, 0) | X]`, the model's true conditional expectation.
    #[default]
    Exact,
    /// `E[1 - R | X]`, ignoring the cap on recoveries above one.
    Linear,
}

impl std::str::FromStr for SMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SMode::Exact),
            "linear" => Ok(SMode::Linear),
            other => Err(Error::Domain(format!("unknown S mode '{other}'"))),
        }
    }
}

/// Loan weights of a finite portfolio.
#[derive(Debug, Clone, PartialEq)]
pub enum PortfolioSpec {
    /// `count` loans of equal weight.
    Homogeneous(usize),
    /// Explicit nonnegative weights summing to one.
    Weighted(Vec<f64>),
}

impl PortfolioSpec {
    pub fn homogeneous(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::Domain("portfolio needs at least one loan".into()));
        }
        Ok(PortfolioSpec::Homogeneous(count))
    }

    pub fn weighted(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Domain("portfolio needs at least one loan".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Domain("loan weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("loan weights sum to {total}, expected 1")));
        }
        Ok(PortfolioSpec::Weighted(weights))
    }

    /// Builds normalized weights from principal amounts.
    pub fn from_principals(amounts: &[f64]) -> Result<Self> {
        let total: f64 = amounts.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Domain("principal amounts must have a positive total".into()));
        }
        let weights: Vec<f64> = amounts.iter().map(|a| a / total).collect();
        let sum: f64 = weights.iter().sum();
        // absorb rounding so the sum invariant holds
        let weights = weights.into_iter().map(|w| w / sum).collect();
        Self::weighted(weights)
    }

    pub fn len(&self) -> usize {
        match self {
            PortfolioSpec::Homogeneous(n) => *n,
            PortfolioSpec::Weighted(w) => w.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weight(&self, j: usize) -> f64 {
        match self {
            PortfolioSpec::Homogeneous(n) => 1.0 / *n as f64,
            PortfolioSpec::Weighted(w) => w[j],
        }
    }
}

/// Stressed PD, stressed LGD and their product at quantile level `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressedDecomposition {
    pub stressed_pd: f64,
    pub stressed_lgd: f64,
    pub ec: f64,
    pub q: f64,
}

/// Conditional default probability `Lambda(x)` given the factor value.
pub fn conditional_default_prob(params: &ModelParams, x: f64) -> f64 {
    conditional_default_prob_from_threshold(params.threshold(), params.rho(), x)
}

pub(crate) fn conditional_default_prob_from_threshold(threshold: f64, rho: f64, x: f64) -> f64 {
    normal::cdf(default_score(threshold, rho, x))
}

/// Argument of `Phi` in `Lambda(x)`.
#[inline]
pub(crate) fn default_score(threshold: f64, rho: f64, x: f64) -> f64 {
    (threshold - rho.sqrt() * x) / (1.0 - rho).sqrt()
}

/// Conditional expected loss given default `S(x)`.
pub fn conditional_expected_loss(params: &ModelParams, x: f64, mode: SMode) -> Result<f64> {
    let centre = 1.0 - params.mu() - params.sigma1() * x;
    match mode {
        SMode::Linear => Ok(centre),
        SMode::Exact => {
            let spread = params.sigma2();
            if !(spread > 0.0) {
                return Err(Error::Degenerate(
                    "exact conditional loss needs omega < 1; use linear mode".into(),
                ));
            }
            let zc = centre / spread;
            Ok(centre * normal::cdf(zc) + spread * normal::pdf(zc))
        }
    }
}

/// Limiting-portfolio loss `Lambda(x) * S(x)`.
pub fn limiting_loss(params: &ModelParams, x: f64, mode: SMode) -> Result<f64> {
    Ok(conditional_default_prob(params, x) * conditional_expected_loss(params, x, mode)?)
}

/// Quantile of the limiting loss at level `q`, split into stressed PD and LGD.
pub fn limiting_quantile(params: &ModelParams, q: f64, mode: SMode) -> Result<StressedDecomposition> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {q}")));
    }
    let x = normal::quantile(1.0 - q)?;
    let stressed_pd = conditional_default_prob(params, x);
    let stressed_lgd = conditional_expected_loss(params, x, mode)?;
    Ok(StressedDecomposition {
        stressed_pd,
        stressed_lgd,
        ec: stressed_pd * stressed_lgd,
        q,
    })
}
