//! Two-stage closed-form maximum likelihood.
//!
//! Default parameters come from the default-rate likelihood of the large
//! portfolio approximation, the factor path from inverting the conditional
//! default probability, and the recovery parameters from a default-weighted
//! least-squares regression of average recoveries on the estimated path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{LatentPath, ObservationSeries};
use crate::model::ModelParams;
use crate::normal;

/// Maximum likelihood estimates of the default parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefaultMle {
    pub p: f64,
    pub rho: f64,
    /// `Phi^-1` of each default rate.
    pub deltas: Vec<f64>,
    pub delta_mean: f64,
    /// Population (divide-by-T) variance of `deltas`.
    pub delta_var: f64,
    /// Set when the rates are constant, so `rho = 0` and no factor path exists.
    pub degenerate: bool,
}

/// Maximum likelihood estimates of the recovery parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryMle {
    pub mu: f64,
    pub sigma: f64,
    pub omega: f64,
    /// Regression slope on the factor; signed.
    pub sigma1: f64,
    pub sigma2: f64,
    /// Set when the regression fits exactly (`sigma2 = 0`, `omega = 1`).
    pub degenerate: bool,
}

/// Full two-stage fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleFit {
    pub default: DefaultMle,
    pub path: Option<LatentPath>,
    pub recovery: Option<RecoveryMle>,
    /// `None` when the estimates cannot form a valid parameter set.
    pub params: Option<ModelParams>,
    pub warnings: Vec<String>,
}

/// Closed-form default-rate MLE of `(p, rho)`.
pub fn fit_default_mle(psi: &[f64]) -> Result<DefaultMle> {
    if psi.len() < 2 {
        return Err(Error::Domain(format!(
            "default-rate fit needs at least 2 years, got {}",
            psi.len()
        )));
    }
    let deltas = psi
        .iter()
        .enumerate()
        .map(|(t, &v)| {
            if v > 0.0 && v < 1.0 {
                normal::quantile(v)
            } else {
                Err(Error::Domain(format!(
                    "default rate {v} at position {} is not strictly inside (0, 1)",
                    t + 1
                )))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = deltas.len() as f64;
    let delta_mean = deltas.iter().sum::<f64>() / n;
    let delta_var = deltas.iter().map(|d| (d - delta_mean).powi(2)).sum::<f64>() / n;
    let rho = delta_var / (1.0 + delta_var);
    let p = normal::cdf(delta_mean / (1.0 + delta_var).sqrt());
    Ok(DefaultMle {
        p,
        rho,
        deltas,
        delta_mean,
        delta_var,
        degenerate: rho == 0.0,
    })
}

/// Factor values implied by the default rates at given `(p, rho)`.
pub fn estimate_latent_path(psi: &[f64], p: f64, rho: f64) -> Result<LatentPath> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Degenerate(format!(
            "factor path needs rho in (0, 1), got {rho}"
        )));
    }
    let threshold = normal::quantile(p)?;
    let deltas = psi.iter().map(|&v| normal::quantile(v)).collect::<Result<Vec<f64>>>()?;
    path_from_deltas(&deltas, threshold, rho)
}

fn path_from_deltas(deltas: &[f64], threshold: f64, rho: f64) -> Result<LatentPath> {
    let (a, b) = ((1.0 - rho).sqrt(), rho.sqrt());
    LatentPath::new(deltas.iter().map(|d| (threshold - a * d) / b).collect())
}

/// Weighted least-squares MLE of the recovery parameters given a factor path.
///
/// Solves the 2x2 normal equations of `sum_t d_t (r_t - mu - s1 x_t)^2`,
/// which stays defined when `sum_t d_t x_t = 0`.
pub fn fit_recovery_mle(r_bar: &[f64], defaults: &[u64], path: &[f64]) -> Result<RecoveryMle> {
    let t = r_bar.len();
    if defaults.len() != t || path.len() != t {
        return Err(Error::Domain("recovery fit inputs differ in length".into()));
    }
    if t < 3 {
        return Err(Error::Domain(format!("recovery fit needs at least 3 years, got {t}")));
    }
    if defaults.contains(&0) {
        return Err(Error::Domain("recovery fit needs defaults in every included year".into()));
    }
    let (mut sw, mut sx, mut sxx, mut sr, mut sxr, mut srr) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&r, &d), &x) in r_bar.iter().zip(defaults).zip(path) {
        let w = d as f64;
        sw += w;
        sx += w * x;
        sxx += w * x * x;
        sr += w * r;
        sxr += w * x * r;
        srr += w * r * r;
    }
    let det = sxx * sw - sx * sx;
    if !(det > 1e-12 * sxx * sw) {
        return Err(Error::Degenerate(
            "factor path is constant; recovery regression is singular".into(),
        ));
    }
    let sigma1 = (sxr * sw - sr * sx) / det;
    let mu = (sr - sigma1 * sx) / sw;
    let ss: f64 = r_bar
        .iter()
        .zip(defaults)
        .zip(path)
        .map(|((&r, &d), &x)| d as f64 * (r - mu - sigma1 * x).powi(2))
        .sum();
    let mut sigma2 = (ss / t as f64).sqrt();
    let scale = (srr / t as f64).sqrt();
    let degenerate = sigma2 <= 1e-10 * scale;
    if degenerate {
        sigma2 = 0.0;
    }
    let total = sigma1 * sigma1 + sigma2 * sigma2;
    let omega = if total > 0.0 { sigma1 * sigma1 / total } else { 0.0 };
    Ok(RecoveryMle {
        mu,
        sigma: total.sqrt(),
        omega,
        sigma1,
        sigma2,
        degenerate,
    })
}

/// Two-stage fit of all five parameters.
///
/// Every year must have a default rate strictly inside `(0, 1)`; series with
/// zero-default years need the sampler, whose binomial likelihood handles
/// them directly.
pub fn fit_mle(data: &ObservationSeries) -> Result<MleFit> {
    if data.len() < 3 {
        return Err(Error::Series("fitting needs at least 3 years".into()));
    }
    for obs in data.iter() {
        if obs.defaults == 0 || obs.defaults == obs.firms {
            return Err(Error::Series(format!(
                "year {}: default rate {} is not strictly inside (0, 1); the closed-form fit is undefined, use MCMC",
                obs.year,
                obs.default_rate()
            )));
        }
    }
    let psi = data.default_rates();
    let default = fit_default_mle(&psi)?;
    let mut warnings = Vec::new();
    if default.degenerate {
        warnings.push(
            "default rates are constant: rho = 0 and the factor path cannot be estimated".to_string(),
        );
        return Ok(MleFit {
            default,
            path: None,
            recovery: None,
            params: None,
            warnings,
        });
    }
    let path = path_from_deltas(&default.deltas, normal::quantile(default.p)?, default.rho)?;
    let r_bar: Vec<f64> = data.iter().map(|o| o.avg_recovery.unwrap_or(f64::NAN)).collect();
    let defaults: Vec<u64> = data.iter().map(|o| o.defaults).collect();
    let recovery = fit_recovery_mle(&r_bar, &defaults, path.as_slice())?;
    if recovery.degenerate {
        warnings.push(
            "recovery regression fits exactly: omega = 1, exact-S and MCMC modes are unavailable".to_string(),
        );
    }
    if recovery.sigma1 < 0.0 {
        warnings.push(format!(
            "negative systematic recovery loading {:.4}: recoveries fall as the factor rises, inconsistent with the model; its sign is dropped in the parameter set",
            recovery.sigma1
        ));
    }
    let params = match ModelParams::new(default.p, default.rho, recovery.mu, recovery.sigma, recovery.omega) {
        Ok(p) => Some(p),
        Err(e) => {
            warnings.push(format!("estimates do not form a valid parameter set: {e}"));
            None
        }
    };
    Ok(MleFit {
        default,
        path: Some(path),
        recovery: Some(recovery),
        params,
        warnings,
    })
}
