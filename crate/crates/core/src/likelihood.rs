//! Likelihoods of annual default counts and average recoveries.
//!
//! Three families live here: the likelihood conditional on the latent factor
//! path (used by the sampler), the default-rate likelihood of the large
//! portfolio approximation (used by the closed-form estimators), and the
//! exact marginal likelihood with the factor integrated out by Gauss–Hermite
//! quadrature (used as a cross-check).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{default_score, ModelParams};
use crate::normal;
use crate::quadrature::GaussHermite;

/// Default count and recovery observation for one year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearObservation {
    pub year: i32,
    pub firms: u64,
    pub defaults: u64,
    /// Average recovery of the defaulted firms; present iff `defaults > 0`.
    pub avg_recovery: Option<f64>,
}

impl YearObservation {
    pub fn default_rate(&self) -> f64 {
        self.defaults as f64 / self.firms as f64
    }
}

/// Validated annual series, ordered by strictly increasing year.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservationSeries {
    years: Vec<YearObservation>,
}

impl ObservationSeries {
    pub fn new(years: Vec<YearObservation>) -> Result<Self> {
        if years.is_empty() {
            return Err(Error::Series("series has no years".into()));
        }
        for w in years.windows(2) {
            if w[1].year <= w[0].year {
                return Err(Error::Series(format!(
                    "years must be strictly increasing ({} follows {})",
                    w[1].year, w[0].year
                )));
            }
        }
        for obs in &years {
            if obs.firms == 0 {
                return Err(Error::Series(format!("year {}: firms must be positive", obs.year)));
            }
            if obs.defaults > obs.firms {
                return Err(Error::Series(format!(
                    "year {}: defaults {} exceed firms {}",
                    obs.year, obs.defaults, obs.firms
                )));
            }
            match (obs.defaults, obs.avg_recovery) {
                (0, Some(_)) => {
                    return Err(Error::Series(format!(
                        "year {}: average recovery given for a year without defaults",
                        obs.year
                    )))
                }
                (d, None) if d > 0 => {
                    return Err(Error::Series(format!(
                        "year {}: average recovery missing with {} defaults",
                        obs.year, d
                    )))
                }
                (_, Some(r)) if !r.is_finite() => {
                    return Err(Error::Series(format!("year {}: average recovery is not finite", obs.year)))
                }
                _ => {}
            }
        }
        Ok(Self { years })
    }

    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    pub fn years(&self) -> &[YearObservation] {
        &self.years
    }

    pub fn iter(&self) -> std::slice::Iter<'_, YearObservation> {
        self.years.iter()
    }

    /// Observed default rates `d_t / J_t`.
    pub fn default_rates(&self) -> Vec<f64> {
        self.years.iter().map(YearObservation::default_rate).collect()
    }
}

/// Realized systematic factor values, one per observed year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPath(Vec<f64>);

impl LatentPath {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("latent path values must be finite".into()));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Conditional law used for the annual default count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountMode {
    #[default]
    Binomial,
    Normal,
}

impl std::str::FromStr for CountMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binomial" => Ok(CountMode::Binomial),
            "normal" => Ok(CountMode::Normal),
            other => Err(Error::Domain(format!("unknown count mode '{other}'"))),
        }
    }
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `ln(n!) - [(n + 1/2) ln n - n + ln sqrt(2 pi)]`.
fn stirling_error(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        return ln_gamma(n + 1.0) - (n + 0.5) * n.ln() + n - normal::LN_SQRT_2PI;
    }
    let nn = n * n;
    if n > 500.0 {
        return (S0 - S1 / nn) / n;
    }
    if n > 80.0 {
        return (S0 - (S1 - S2 / nn) / nn) / n;
    }
    if n > 35.0 {
        return (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n;
    }
    (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
}

/// Deviance term `x ln(x / m) + m - x`, stable when `x` is close to `m`.
fn deviance(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / m).ln() + m - x
    }
}

/// Binomial log-probability with success probability `p` and its complement
/// `q` passed separately so that neither loses precision near 0 or 1.
///
/// Uses the saddle-point form of the binomial mass, which stays accurate for
/// trial counts up to and beyond 10^9 where `ln C(n, k)` computed from three
/// log-gamma values would cancel catastrophically.
pub(crate) fn ln_binomial_pmf(k: u64, n: u64, p: f64, q: f64) -> f64 {
    if p == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if q == 0.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    let (kf, nf) = (k as f64, n as f64);
    if k == 0 {
        if n == 0 {
            return 0.0;
        }
        return if p < 0.1 { -deviance(nf, nf * q) - nf * p } else { nf * q.ln() };
    }
    if k == n {
        return if q < 0.1 { -deviance(nf, nf * p) - nf * q } else { nf * p.ln() };
    }
    let lc = stirling_error(nf)
        - stirling_error(kf)
        - stirling_error(nf - kf)
        - deviance(kf, nf * p)
        - deviance(nf - kf, nf * q);
    let lf = LN_2PI + kf.ln() + (-kf / nf).ln_1p();
    lc - 0.5 * lf
}

/// Binomial log-probability in terms of the score `z` with `p = Phi(z)`.
fn ln_binomial_pmf_from_score(k: u64, n: u64, z: f64) -> f64 {
    let p = normal::cdf(z);
    let q = normal::cdf(-z);
    if p > 1e-280 && q > 1e-280 {
        return ln_binomial_pmf(k, n, p, q);
    }
    // Far tails: log-space form; precision of the constant is immaterial here.
    let (kf, nf) = (k as f64, n as f64);
    let ln_choose = ln_gamma(nf + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(nf - kf + 1.0);
    let mut value = ln_choose;
    if k > 0 {
        value += kf * normal::ln_cdf(z);
    }
    if k < n {
        value += (nf - kf) * normal::ln_cdf(-z);
    }
    value
}

fn ln_normal_count_density(k: u64, n: u64, p: f64, q: f64) -> f64 {
    let nf = n as f64;
    let mean = nf * p;
    let var = nf * p * q;
    if var <= 0.0 {
        return if (k as f64 - mean).abs() == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let dev = k as f64 - mean;
    -0.5 * (2.0 * PI * var).ln() - dev * dev / (2.0 * var)
}

/// Log-likelihood of `d` defaults among `j` firms given conditional default
/// probability `lambda`.
///
/// Impossible outcomes (for example `lambda = 0` with `d > 0`) return
/// `f64::NEG_INFINITY`.
pub fn log_default_count_likelihood(d: u64, j: u64, lambda: f64, mode: CountMode) -> Result<f64> {
    if d > j {
        return Err(Error::Domain(format!("defaults {d} exceed firms {j}")));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Domain(format!("default probability {lambda} outside [0, 1]")));
    }
    let q = 1.0 - lambda;
    Ok(match mode {
        CountMode::Binomial => ln_binomial_pmf(d, j, lambda, q),
        CountMode::Normal => ln_normal_count_density(d, j, lambda, q),
    })
}

/// Log-density of the average recovery `r_bar` over `d` defaults given the
/// factor value `x`: normal with mean `mu + sigma sqrt(omega) x` and variance
/// `sigma^2 (1 - omega) / d`.
pub fn log_avg_recovery_likelihood(r_bar: f64, d: u64, x: f64, params: &ModelParams) -> Result<f64> {
    if d == 0 {
        return Err(Error::Domain(
            "average recovery is undefined for a year without defaults; skip the term".into(),
        ));
    }
    let sigma2 = params.sigma2();
    if !(sigma2 > 0.0) {
        return Err(Error::Degenerate(
            "omega = 1 leaves the average recovery with zero variance".into(),
        ));
    }
    Ok(ln_avg_recovery(r_bar, d, params.mu() + params.sigma1() * x, sigma2))
}

#[inline]
fn ln_avg_recovery(r_bar: f64, d: u64, mean: f64, sigma2: f64) -> f64 {
    let var = sigma2 * sigma2 / d as f64;
    let dev = r_bar - mean;
    -0.5 * (2.0 * PI * var).ln() - dev * dev / (2.0 * var)
}

/// Model parameters pre-processed for repeated per-year evaluation. The
/// default level is carried as its threshold `Phi^-1(p)` so the sampler can
/// work on that scale without a round trip through `p`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct YearKernel {
    threshold: f64,
    rho: f64,
    mu: f64,
    sigma1: f64,
    sigma2: f64,
}

impl YearKernel {
    pub(crate) fn new(threshold: f64, rho: f64, mu: f64, sigma: f64, omega: f64) -> Self {
        Self {
            threshold,
            rho,
            mu,
            sigma1: sigma * omega.sqrt(),
            sigma2: sigma * (1.0 - omega).sqrt(),
        }
    }

    pub(crate) fn from_params(params: &ModelParams) -> Self {
        Self::new(params.threshold(), params.rho(), params.mu(), params.sigma(), params.omega())
    }

    /// Joint log-likelihood of one year's count and average recovery at
    /// factor value `x`. Years without defaults contribute the count term only.
    pub(crate) fn year(&self, obs: &YearObservation, x: f64, mode: CountMode) -> f64 {
        let z = default_score(self.threshold, self.rho, x);
        let count = match mode {
            CountMode::Binomial => ln_binomial_pmf_from_score(obs.defaults, obs.firms, z),
            CountMode::Normal => {
                ln_normal_count_density(obs.defaults, obs.firms, normal::cdf(z), normal::cdf(-z))
            }
        };
        match obs.avg_recovery {
            Some(r) if obs.defaults > 0 => {
                count + ln_avg_recovery(r, obs.defaults, self.mu + self.sigma1 * x, self.sigma2)
            }
            _ => count,
        }
    }
}

fn check_recovery_variance(params: &ModelParams, data: &ObservationSeries) -> Result<()> {
    if params.sigma2() > 0.0 || data.iter().all(|o| o.defaults == 0) {
        Ok(())
    } else {
        Err(Error::Degenerate(
            "omega = 1 leaves the average recovery with zero variance".into(),
        ))
    }
}

/// Log-likelihood of the data conditional on the factor path, summed over
/// years in order.
pub fn log_conditional_joint(
    params: &ModelParams,
    path: &LatentPath,
    data: &ObservationSeries,
    mode: CountMode,
) -> Result<f64> {
    if path.len() != data.len() {
        return Err(Error::Domain(format!(
            "latent path has {} values for {} years",
            path.len(),
            data.len()
        )));
    }
    check_recovery_variance(params, data)?;
    let kernel = YearKernel::from_params(params);
    Ok(data
        .iter()
        .zip(path.as_slice())
        .map(|(obs, &x)| kernel.year(obs, x, mode))
        .sum())
}

fn check_rate_inputs(p: f64, rho: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("p must lie in (0, 1), got {p}")));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Domain(format!("rho must lie in (0, 1), got {rho}")));
    }
    Ok(())
}

/// Log-density of the conditional default probability at `psi` under the
/// large-portfolio approximation.
///
/// With `delta = Phi^-1(psi)` the factor value is
/// `x(delta) = (Phi^-1(p) - sqrt(1 - rho) delta) / sqrt(rho)`. Changing
/// variables from `x ~ N(0, 1)` to `psi` composes two Jacobians,
/// `|dx/ddelta| = sqrt((1 - rho) / rho)` and `ddelta/dpsi = 1 / phi(delta)`,
/// so `ln f(psi) = ln phi(x) + 0.5 ln((1 - rho) / rho) - ln phi(delta)`.
pub fn log_default_rate_density(psi: f64, p: f64, rho: f64) -> Result<f64> {
    check_rate_inputs(p, rho)?;
    ln_rate_density(psi, normal::quantile(p)?, rho)
}

fn ln_rate_density(psi: f64, threshold: f64, rho: f64) -> Result<f64> {
    if !(psi > 0.0 && psi < 1.0) {
        return Err(Error::Domain(format!("default rate must lie in (0, 1), got {psi}")));
    }
    let delta = normal::quantile(psi)?;
    let x = (threshold - (1.0 - rho).sqrt() * delta) / rho.sqrt();
    Ok(normal::ln_pdf(x) + 0.5 * ((1.0 - rho) / rho).ln() - normal::ln_pdf(delta))
}

/// Sum over years of [`log_default_rate_density`].
pub fn log_default_rate_series_likelihood(psi: &[f64], p: f64, rho: f64) -> Result<f64> {
    check_rate_inputs(p, rho)?;
    let threshold = normal::quantile(p)?;
    psi.iter().map(|&v| ln_rate_density(v, threshold, rho)).sum()
}

/// Smallest rule accepted by [`log_marginal_joint_quadrature`].
pub const MIN_QUADRATURE_NODES: usize = 16;

/// Default Gauss–Hermite rule size for the marginal likelihood.
pub const DEFAULT_QUADRATURE_NODES: usize = 128;

/// Tolerance on the node-doubling change beyond which a result is flagged.
pub const QUADRATURE_TOLERANCE: f64 = 1e-4;

/// Marginal log-likelihood with accuracy metadata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureEstimate {
    pub log_density: f64,
    pub nodes: usize,
    /// Absolute change when the rule is doubled.
    pub doubling_delta: f64,
    /// Set when `doubling_delta` exceeds [`QUADRATURE_TOLERANCE`].
    pub warning: Option<String>,
}

fn marginal_with_rule(
    rule: &GaussHermite,
    kernel: &YearKernel,
    data: &ObservationSeries,
    mode: CountMode,
) -> f64 {
    data.iter()
        .map(|obs| rule.ln_normal_expectation(|x| kernel.year(obs, x, mode)))
        .sum()
}

/// Log of the exact marginal likelihood, integrating each year's factor
/// against its standard normal law with an `nodes`-point Gauss–Hermite rule.
pub fn log_marginal_joint_quadrature(
    params: &ModelParams,
    data: &ObservationSeries,
    nodes: usize,
    mode: CountMode,
) -> Result<QuadratureEstimate> {
    if nodes < MIN_QUADRATURE_NODES {
        return Err(Error::Domain(format!(
            "quadrature needs at least {MIN_QUADRATURE_NODES} nodes, got {nodes}"
        )));
    }
    check_recovery_variance(params, data)?;
    let kernel = YearKernel::from_params(params);
    let value = marginal_with_rule(&GaussHermite::new(nodes), &kernel, data, mode);
    let refined = marginal_with_rule(&GaussHermite::new(2 * nodes), &kernel, data, mode);
    let doubling_delta = (refined - value).abs();
    let warning = (!(doubling_delta <= QUADRATURE_TOLERANCE)).then(|| {
        format!("quadrature not converged: doubling {nodes} nodes moved the result by {doubling_delta:.3e}")
    });
    Ok(QuadratureEstimate {
        log_density: value,
        nodes,
        doubling_delta,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(year: i32, firms: u64, defaults: u64, r: Option<f64>) -> YearObservation {
        YearObservation {
            year,
            firms,
            defaults,
            avg_recovery: r,
        }
    }

    /// Log-probability from exact integer combinatorics.
    fn binomial_by_products(k: u64, n: u64, p: f64) -> f64 {
        let mut ln_choose = 0.0;
        for i in 0..k {
            ln_choose += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
        }
        ln_choose + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()
    }

    #[test]
    fn binomial_single_term_and_combinatorics() {
        let v = log_default_count_likelihood(0, 100, 0.02, CountMode::Binomial).unwrap();
        assert!((v - 100.0 * 0.98f64.ln()).abs() < 1e-13);
        let v = log_default_count_likelihood(3, 50, 0.05, CountMode::Binomial).unwrap();
        assert!((v - binomial_by_products(3, 50, 0.05)).abs() < 1e-12);
        assert!((v - -1.514_696_811_658_239_5).abs() < 1e-12);
        for (k, n, p) in [(17, 1000, 0.02), (250, 400, 0.6), (1, 2, 0.3), (999, 1000, 0.99)] {
            let got = log_default_count_likelihood(k, n, p, CountMode::Binomial).unwrap();
            assert!((got - binomial_by_products(k, n, p)).abs() < 1e-10, "{k} {n} {p}");
        }
    }

    #[test]
    fn binomial_large_trials_stay_finite() {
        let n = 1_000_000_000u64;
        let v = log_default_count_likelihood(20_000_000, n, 0.02, CountMode::Binomial).unwrap();
        // at the mean the mass is about 1 / sqrt(2 pi n p q)
        let approx = -0.5 * (2.0 * PI * n as f64 * 0.02 * 0.98).ln();
        assert!((v - approx).abs() < 1e-6, "{v} vs {approx}");
    }

    #[test]
    fn impossible_counts_are_log_zero() {
        assert_eq!(
            log_default_count_likelihood(2, 10, 0.0, CountMode::Binomial).unwrap(),
            f64::NEG_INFINITY
        );
        assert_eq!(
            log_default_count_likelihood(9, 10, 1.0, CountMode::Binomial).unwrap(),
            f64::NEG_INFINITY
        );
        assert_eq!(log_default_count_likelihood(0, 10, 0.0, CountMode::Binomial).unwrap(), 0.0);
        assert!(log_default_count_likelihood(11, 10, 0.5, CountMode::Binomial).is_err());
    }

    #[test]
    fn normal_count_at_mean() {
        let v = log_default_count_likelihood(20, 400, 0.05, CountMode::Normal).unwrap();
        assert!((v - -0.5 * (2.0 * PI * 400.0 * 0.05 * 0.95).ln()).abs() < 1e-14);
    }

    #[test]
    fn count_modes_agree_for_large_variance() {
        for (n, lambda) in [(1000u64, 0.05), (5000, 0.02), (2500, 0.3)] {
            let mean = n as f64 * lambda;
            let sd = (mean * (1.0 - lambda)).sqrt();
            assert!(sd * sd >= 25.0);
            let lo = (mean - 2.0 * sd).ceil() as u64;
            let hi = (mean + 2.0 * sd).floor() as u64;
            for d in lo..=hi {
                let b = log_default_count_likelihood(d, n, lambda, CountMode::Binomial).unwrap();
                let g = log_default_count_likelihood(d, n, lambda, CountMode::Normal).unwrap();
                assert!(((b - g) / b).abs() <= 0.02, "n={n} d={d}: {b} vs {g}");
            }
        }
    }

    fn params(p: f64, rho: f64, mu: f64, sigma: f64, omega: f64) -> ModelParams {
        ModelParams::new(p, rho, mu, sigma, omega).unwrap()
    }

    #[test]
    fn recovery_density_values() {
        let prm = params(0.02, 0.1, 0.4, 0.5, 0.25);
        // mode of the density
        let mean = 0.4 + 0.5 * 0.5 * 0.7;
        let at_mode = log_avg_recovery_likelihood(mean, 9, 0.7, &prm).unwrap();
        let var = 0.25 * 0.75 / 9.0;
        assert!((at_mode - -0.5 * (2.0 * PI * var).ln()).abs() < 1e-14);

        // mu_R = 0.15, sigma_R = sqrt(0.25 * 0.75 / 4)
        let v = log_avg_recovery_likelihood(0.2, 4, -1.0, &prm).unwrap();
        let sd = (0.25f64 * 0.75 / 4.0).sqrt();
        assert!((sd - 0.216_506_350_946_109_66).abs() < 1e-15);
        let expected = -(sd * (2.0 * PI).sqrt()).ln() - 0.05f64.powi(2) / (2.0 * sd * sd);
        assert!((v - expected).abs() < 1e-14);

        let doubled = log_avg_recovery_likelihood(mean, 18, 0.7, &prm).unwrap();
        assert!((doubled - at_mode - 0.5 * 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn recovery_density_errors() {
        let prm = params(0.02, 0.1, 0.4, 0.5, 0.25);
        assert!(matches!(log_avg_recovery_likelihood(0.4, 0, 0.0, &prm), Err(Error::Domain(_))));
        let one = params(0.02, 0.1, 0.4, 0.5, 1.0);
        assert!(matches!(
            log_avg_recovery_likelihood(0.4, 3, 0.0, &one),
            Err(Error::Degenerate(_))
        ));
    }

    fn fixture() -> ObservationSeries {
        ObservationSeries::new(vec![
            obs(2001, 1200, 31, Some(0.38)),
            obs(2002, 1300, 12, Some(0.52)),
            obs(2003, 1250, 0, None),
            obs(2004, 1100, 45, Some(0.29)),
            obs(2005, 1400, 20, Some(0.44)),
        ])
        .unwrap()
    }

    #[test]
    fn conditional_joint_single_year_is_sum_of_terms() {
        let prm = params(0.02, 0.1, 0.4, 0.5, 0.25);
        let data = ObservationSeries::new(vec![obs(1, 500, 7, Some(0.35))]).unwrap();
        let path = LatentPath::new(vec![-0.4]).unwrap();
        let joint = log_conditional_joint(&prm, &path, &data, CountMode::Binomial).unwrap();
        let lambda = crate::model::conditional_default_prob(&prm, -0.4);
        let expected = log_default_count_likelihood(7, 500, lambda, CountMode::Binomial).unwrap()
            + log_avg_recovery_likelihood(0.35, 7, -0.4, &prm).unwrap();
        assert!((joint - expected).abs() < 1e-11);
    }

    #[test]
    fn conditional_joint_matches_straight_line_sum() {
        let prm = params(0.025, 0.08, 0.42, 0.45, 0.1);
        let data = fixture();
        let xs = [0.3, 1.1, 2.0, -1.7, 0.0];
        let path = LatentPath::new(xs.to_vec()).unwrap();
        let joint = log_conditional_joint(&prm, &path, &data, CountMode::Binomial).unwrap();

        let a = normal::quantile(0.025).unwrap();
        let mut expected = 0.0;
        for (o, &x) in data.iter().zip(&xs) {
            let lambda = normal::cdf((a - 0.08f64.sqrt() * x) / 0.92f64.sqrt());
            expected += binomial_by_products(o.defaults, o.firms, lambda);
            if let Some(r) = o.avg_recovery {
                let mean = 0.42 + 0.45 * 0.1f64.sqrt() * x;
                let var = 0.45 * 0.45 * 0.9 / o.defaults as f64;
                expected += -0.5 * (2.0 * PI * var).ln() - (r - mean).powi(2) / (2.0 * var);
            }
        }
        assert!((joint - expected).abs() < 1e-9, "{joint} vs {expected}");
    }

    #[test]
    fn conditional_joint_is_exchangeable() {
        let prm = params(0.025, 0.08, 0.42, 0.45, 0.1);
        let data = fixture();
        let xs = vec![0.3, 1.1, 2.0, -1.7, 0.0];
        let joint = log_conditional_joint(&prm, &LatentPath::new(xs.clone()).unwrap(), &data, CountMode::Binomial)
            .unwrap();
        let order = [3, 0, 4, 2, 1];
        let permuted: Vec<YearObservation> = order
            .iter()
            .enumerate()
            .map(|(i, &k)| YearObservation {
                year: i as i32,
                ..data.years()[k].clone()
            })
            .collect();
        let permuted = ObservationSeries::new(permuted).unwrap();
        let path = LatentPath::new(order.iter().map(|&k| xs[k]).collect()).unwrap();
        let other = log_conditional_joint(&prm, &path, &permuted, CountMode::Binomial).unwrap();
        assert!((joint - other).abs() < 1e-10);
    }

    #[test]
    fn conditional_joint_checks_lengths() {
        let prm = params(0.025, 0.08, 0.42, 0.45, 0.1);
        let path = LatentPath::new(vec![0.0; 3]).unwrap();
        assert!(log_conditional_joint(&prm, &path, &fixture(), CountMode::Binomial).is_err());
    }

    #[test]
    fn rate_density_special_points() {
        let (p, rho): (f64, f64) = (0.03, 0.12);
        let delta = normal::quantile(p).unwrap() / (1.0 - rho).sqrt();
        let psi = normal::cdf(delta);
        let got = log_default_rate_density(psi, p, rho).unwrap();
        let expected = 0.5 * ((1.0 - rho) / rho).ln() - normal::ln_pdf(delta) + normal::ln_pdf(0.0);
        assert!((got - expected).abs() < 1e-8);

        let half = log_default_rate_density(0.2, 0.1, 0.5).unwrap();
        let d = normal::quantile(0.2).unwrap();
        let x = (normal::quantile(0.1).unwrap() - 0.5f64.sqrt() * d) / 0.5f64.sqrt();
        assert!((half - (normal::ln_pdf(x) - normal::ln_pdf(d))).abs() < 1e-12);

        assert!(log_default_rate_density(0.0, p, rho).is_err());
        assert!(log_default_rate_density(1.0, p, rho).is_err());
    }

    #[test]
    fn rate_series_sums_densities() {
        let psi = [0.01, 0.025, 0.04, 0.017, 0.009];
        let total = log_default_rate_series_likelihood(&psi, 0.02, 0.07).unwrap();
        let direct: f64 = psi
            .iter()
            .map(|&v| {
                let d = normal::quantile(v).unwrap();
                let x = (normal::quantile(0.02).unwrap() - 0.93f64.sqrt() * d) / 0.07f64.sqrt();
                (-0.5 * x * x).exp() / (2.0 * PI).sqrt() * (0.93f64 / 0.07).sqrt()
                    / ((-0.5 * d * d).exp() / (2.0 * PI).sqrt())
            })
            .map(f64::ln)
            .sum();
        assert!((total - direct).abs() < 1e-10);
        let reversed: Vec<f64> = psi.iter().rev().copied().collect();
        let rev = log_default_rate_series_likelihood(&reversed, 0.02, 0.07).unwrap();
        assert!((total - rev).abs() < 1e-12);
    }

    #[test]
    fn series_validation() {
        assert!(ObservationSeries::new(vec![]).is_err());
        assert!(ObservationSeries::new(vec![obs(2, 10, 1, Some(0.3)), obs(1, 10, 1, Some(0.3))]).is_err());
        assert!(ObservationSeries::new(vec![obs(1, 10, 11, Some(0.3))]).is_err());
        assert!(ObservationSeries::new(vec![obs(1, 10, 2, None)]).is_err());
        assert!(ObservationSeries::new(vec![obs(1, 10, 0, Some(0.4))]).is_err());
        assert!(ObservationSeries::new(vec![obs(1, 0, 0, None)]).is_err());
        assert!(ObservationSeries::new(vec![obs(1, 10, 0, None)]).is_ok());
    }

    #[test]
    fn quadrature_rejects_small_rules() {
        let prm = params(0.025, 0.08, 0.42, 0.45, 0.1);
        assert!(log_marginal_joint_quadrature(&prm, &fixture(), 8, CountMode::Binomial).is_err());
    }
}
