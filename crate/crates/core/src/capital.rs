//! Economic capital as a high quantile of the portfolio loss.
//!
//! Quantiles are estimated from simulated losses, either for a fixed
//! parameter set or for the full predictive law that mixes over posterior
//! draws, and in closed form for the infinitely granular portfolio.
//!
//! Draw `i` of a simulation always uses its own ChaCha stream `i` under the
//! master seed, so results do not depend on how draws are spread across
//! threads.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{limiting_loss, limiting_quantile, ModelParams, PortfolioSpec, SMode, StressedDecomposition};
use crate::normal;
use crate::stats::{self, ColumnSummary};

/// A finite portfolio or its infinitely granular limit.
#[derive(Debug, Clone, PartialEq)]
pub enum Portfolio {
    Finite(PortfolioSpec),
    Limiting,
}

impl Portfolio {
    pub fn homogeneous(count: usize) -> Result<Self> {
        Ok(Portfolio::Finite(PortfolioSpec::homogeneous(count)?))
    }
}

impl fmt::Display for Portfolio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Portfolio::Limiting => write!(f, "inf"),
            Portfolio::Finite(PortfolioSpec::Homogeneous(n)) => write!(f, "{n}"),
            Portfolio::Finite(PortfolioSpec::Weighted(w)) => write!(f, "weighted({})", w.len()),
        }
    }
}

impl FromStr for Portfolio {
    type Err = Error;

    /// Parses a loan count or `inf`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") {
            return Ok(Portfolio::Limiting);
        }
        let n: usize = s
            .parse()
            .map_err(|_| Error::Domain(format!("portfolio size '{s}' is neither a count nor 'inf'")))?;
        Portfolio::homogeneous(n)
    }
}

/// RNG for draw `index` of a simulation seeded with `seed`.
pub fn draw_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One draw of the portfolio loss rate for a finite portfolio.
///
/// Draws the systematic factor, then for each loan its idiosyncratic
/// default shock and, only if the loan defaults, its idiosyncratic recovery
/// shock. Loss is `sum_j w_j I_j max(1 - R_j, 0)`.
pub fn simulate_loss<R: Rng + ?Sized>(params: &ModelParams, portfolio: &PortfolioSpec, rng: &mut R) -> f64 {
    let x: f64 = rng.sample(StandardNormal);
    let threshold = params.threshold();
    let (a, b) = (params.rho().sqrt(), (1.0 - params.rho()).sqrt());
    let systematic = a * x;
    let recovery_centre = params.mu() + params.sigma1() * x;
    let sigma2 = params.sigma2();
    let loan_loss = |rng: &mut R| -> f64 {
        let zc: f64 = rng.sample(StandardNormal);
        if systematic + b * zc < threshold {
            let z: f64 = rng.sample(StandardNormal);
            (1.0 - recovery_centre - sigma2 * z).max(0.0)
        } else {
            0.0
        }
    };
    match portfolio {
        PortfolioSpec::Homogeneous(n) => {
            let total: f64 = (0..*n).map(|_| loan_loss(rng)).sum();
            total / *n as f64
        }
        PortfolioSpec::Weighted(w) => w.iter().map(|&wj| wj * loan_loss(rng)).sum(),
    }
}

fn simulate_one<R: Rng + ?Sized>(params: &ModelParams, portfolio: &Portfolio, mode: SMode, rng: &mut R) -> Result<f64> {
    match portfolio {
        Portfolio::Finite(spec) => Ok(simulate_loss(params, spec, rng)),
        Portfolio::Limiting => {
            let x: f64 = rng.sample(StandardNormal);
            limiting_loss(params, x, mode)
        }
    }
}

/// Settings shared by the Monte Carlo quantile estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub n_draws: usize,
    pub seed: u64,
    /// Conditional-loss evaluation for the limiting portfolio.
    pub s_mode: SMode,
}

/// A Monte Carlo quantile with an optional precision warning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileEstimate {
    pub value: f64,
    pub n_draws: usize,
    pub warning: Option<String>,
}

/// Fewest expected exceedances above the quantile before a warning.
const MIN_TAIL_DRAWS: f64 = 100.0;

fn check_level(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("quantile level must lie in (0, 1), got {q}")))
    }
}

fn estimate(mut losses: Vec<f64>, q: f64) -> QuantileEstimate {
    losses.sort_by(f64::total_cmp);
    let n = losses.len();
    let tail = n as f64 * (1.0 - q);
    let warning = (tail < MIN_TAIL_DRAWS).then(|| {
        format!("only {tail:.0} expected draws beyond the {q} quantile; estimate is imprecise")
    });
    QuantileEstimate {
        value: stats::quantile_sorted(&losses, q),
        n_draws: n,
        warning,
    }
}

/// Simulated losses for one parameter set.
pub fn simulate_losses(params: &ModelParams, portfolio: &Portfolio, sim: &Simulation) -> Result<Vec<f64>> {
    (0..sim.n_draws as u64)
        .into_par_iter()
        .map(|i| simulate_one(params, portfolio, sim.s_mode, &mut draw_rng(sim.seed, i)))
        .collect()
}

/// Monte Carlo quantile of the loss given fixed parameters.
pub fn quantile_given_params(
    params: &ModelParams,
    portfolio: &Portfolio,
    q: f64,
    sim: &Simulation,
) -> Result<QuantileEstimate> {
    check_level(q)?;
    if sim.n_draws == 0 {
        return Err(Error::Domain("at least one draw is required".into()));
    }
    Ok(estimate(simulate_losses(params, portfolio, sim)?, q))
}

/// Quantile of the full predictive loss: each draw picks a parameter set
/// uniformly from `posterior` and simulates one loss with a fresh factor.
pub fn predictive_quantile(
    posterior: &[ModelParams],
    portfolio: &Portfolio,
    q: f64,
    sim: &Simulation,
) -> Result<QuantileEstimate> {
    check_level(q)?;
    if posterior.is_empty() {
        return Err(Error::Domain("posterior sample is empty".into()));
    }
    if sim.n_draws == 0 {
        return Err(Error::Domain("at least one draw is required".into()));
    }
    let losses = (0..sim.n_draws as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = draw_rng(sim.seed, i);
            let row = rng.random_range(0..posterior.len());
            simulate_one(&posterior[row], portfolio, sim.s_mode, &mut rng)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(estimate(losses, q))
}

/// Posterior sample of the parameter-conditional quantile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantilePosterior {
    pub q: f64,
    pub portfolio: String,
    /// One quantile per posterior row.
    pub samples: Vec<f64>,
    /// Stressed PD and LGD per row; limiting portfolio only.
    pub stressed_pd: Option<Vec<f64>>,
    pub stressed_lgd: Option<Vec<f64>>,
}

impl QuantilePosterior {
    pub fn summary(&self) -> Option<ColumnSummary> {
        ColumnSummary::from_values(&self.samples)
    }

    pub fn mean(&self) -> Option<f64> {
        self.summary().map(|s| s.mean)
    }
}

/// Quantile `Q_q(theta)` for every row of `posterior`: closed form for the
/// limiting portfolio, Monte Carlo (with per-row seeds derived from
/// `sim.seed`) otherwise.
pub fn quantile_posterior(
    posterior: &[ModelParams],
    q: f64,
    portfolio: &Portfolio,
    sim: &Simulation,
) -> Result<QuantilePosterior> {
    check_level(q)?;
    match portfolio {
        Portfolio::Limiting => {
            let rows = posterior
                .iter()
                .map(|p| limiting_quantile(p, q, sim.s_mode))
                .collect::<Result<Vec<StressedDecomposition>>>()?;
            Ok(QuantilePosterior {
                q,
                portfolio: portfolio.to_string(),
                samples: rows.iter().map(|d| d.ec).collect(),
                stressed_pd: Some(rows.iter().map(|d| d.stressed_pd).collect()),
                stressed_lgd: Some(rows.iter().map(|d| d.stressed_lgd).collect()),
            })
        }
        Portfolio::Finite(_) => {
            let samples = posterior
                .par_iter()
                .enumerate()
                .map(|(i, p)| {
                    let row_sim = Simulation {
                        seed: row_seed(sim.seed, i as u64),
                        ..*sim
                    };
                    quantile_given_params(p, portfolio, q, &row_sim).map(|e| e.value)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(QuantilePosterior {
                q,
                portfolio: portfolio.to_string(),
                samples,
                stressed_pd: None,
                stressed_lgd: None,
            })
        }
    }
}

/// SplitMix64 mix of a master seed and a row index.
fn row_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add((index + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Extra capital for parameter uncertainty: predictive quantile minus the
/// posterior mean of the parameter-conditional quantile. Signed.
pub fn uncertainty_loading(predictive_q: f64, q_posterior_mean: f64) -> f64 {
    predictive_q - q_posterior_mean
}

/// Settings of a capital report.
#[derive(Debug, Clone, PartialEq)]
pub struct CapitalSettings {
    pub q: f64,
    pub portfolios: Vec<Portfolio>,
    pub simulation: Simulation,
}

/// Stressed PD, LGD and EC summaries over the posterior, limiting portfolio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorCapital {
    pub rows: usize,
    pub pd: ColumnSummary,
    pub lgd: ColumnSummary,
    pub ec: ColumnSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveEntry {
    /// Loan count, or `inf` for the limiting portfolio.
    pub portfolio: String,
    pub quantile: f64,
    pub n_draws: usize,
    pub warning: Option<String>,
}

/// Capital figures at one quantile level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapitalReport {
    pub q: f64,
    pub s_mode: SMode,
    /// Closed-form limiting capital at the point estimate.
    pub mle_ec: Option<StressedDecomposition>,
    /// `Q_q(theta)` for each posterior row, limiting portfolio.
    pub posterior_q_samples: Vec<f64>,
    pub posterior_q_summary: Option<PosteriorCapital>,
    /// Predictive quantile per requested portfolio.
    pub predictive_quantile: Vec<PredictiveEntry>,
    /// Limiting-portfolio predictive quantile minus the posterior mean of
    /// `Q_q(theta)`.
    pub uncertainty_loading: Option<f64>,
}

/// Builds a report from a point estimate, posterior draws, or both.
///
/// Predictive quantiles for all portfolio sizes share the master seed, so
/// draw `i` uses the same parameter row and factor value for every size.
pub fn capital_report(
    point: Option<&ModelParams>,
    posterior: Option<&[ModelParams]>,
    settings: &CapitalSettings,
) -> Result<CapitalReport> {
    check_level(settings.q)?;
    let q = settings.q;
    let sim = &settings.simulation;
    let mle_ec = point.map(|p| limiting_quantile(p, q, sim.s_mode)).transpose()?;
    let mut report = CapitalReport {
        q,
        s_mode: sim.s_mode,
        mle_ec,
        posterior_q_samples: Vec::new(),
        posterior_q_summary: None,
        predictive_quantile: Vec::new(),
        uncertainty_loading: None,
    };
    let Some(posterior) = posterior else {
        return Ok(report);
    };
    let limiting = quantile_posterior(posterior, q, &Portfolio::Limiting, sim)?;
    if let (Some(ec), Some(pd), Some(lgd)) = (
        limiting.summary(),
        limiting.stressed_pd.as_deref().and_then(ColumnSummary::from_values),
        limiting.stressed_lgd.as_deref().and_then(ColumnSummary::from_values),
    ) {
        report.posterior_q_summary = Some(PosteriorCapital {
            rows: posterior.len(),
            pd,
            lgd,
            ec,
        });
    }
    for portfolio in &settings.portfolios {
        let est = predictive_quantile(posterior, portfolio, q, sim)?;
        if *portfolio == Portfolio::Limiting {
            if let Some(mean) = limiting.mean() {
                report.uncertainty_loading = Some(uncertainty_loading(est.value, mean));
            }
        }
        report.predictive_quantile.push(PredictiveEntry {
            portfolio: portfolio.to_string(),
            quantile: est.value,
            n_draws: est.n_draws,
            warning: est.warning,
        });
    }
    report.posterior_q_samples = limiting.samples;
    Ok(report)
}

/// Stressed factor value `Phi^-1(1 - q)`.
pub fn stressed_factor(q: f64) -> Result<f64> {
    check_level(q)?;
    normal::quantile(1.0 - q)
}
