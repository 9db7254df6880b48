use downturn::data::generate_synthetic;
use downturn::likelihood::{
    log_avg_recovery_likelihood, log_conditional_joint, log_default_count_likelihood, log_default_rate_density,
    log_default_rate_series_likelihood, log_marginal_joint_quadrature,
};
use downturn::model::conditional_default_prob;
use downturn::normal;
use downturn::{CountMode, LatentPath, ModelParams, ObservationSeries, YearObservation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

fn one_year(firms: u64, defaults: u64, r: Option<f64>) -> ObservationSeries {
    ObservationSeries::new(vec![YearObservation {
        year: 2000,
        firms,
        defaults,
        avg_recovery: r,
    }])
    .unwrap()
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

#[test]
fn quadrature_matches_trapezoid_on_small_case() {
    let params = ModelParams::new(0.05, 0.2, 0.45, 0.3, 0.25).unwrap();
    let data = one_year(20, 2, Some(0.38));
    let n = 1_000_000;
    let (a, b) = (-8.0, 8.0);
    let h = (b - a) / n as f64;
    let terms: Vec<f64> = (0..=n)
        .map(|i| {
            let x = a + h * i as f64;
            let w = if i == 0 || i == n { 0.5f64 } else { 1.0 };
            let path = LatentPath::new(vec![x]).unwrap();
            log_conditional_joint(&params, &path, &data, CountMode::Binomial).unwrap() + normal::ln_pdf(x) + w.ln()
        })
        .collect();
    let oracle = log_sum_exp(&terms) + h.ln();
    let est = log_marginal_joint_quadrature(&params, &data, 128, CountMode::Binomial).unwrap();
    assert!((est.log_density - oracle).abs() <= 1e-7, "{} vs {oracle}", est.log_density);
    assert!(est.warning.is_none());
}

#[test]
fn quadrature_is_stable_beyond_64_nodes() {
    let params = ModelParams::new(0.03, 0.1, 0.42, 0.35, 0.2).unwrap();
    let data = generate_synthetic(&params, 10, 50, 21).unwrap().series;
    let values: Vec<f64> = [64, 128, 256]
        .iter()
        .map(|&n| log_marginal_joint_quadrature(&params, &data, n, CountMode::Binomial).unwrap().log_density)
        .collect();
    for v in &values[1..] {
        assert!((v - values[0]).abs() <= 1e-8, "{values:?}");
    }
}

#[test]
fn quadrature_rejects_too_few_nodes() {
    let params = ModelParams::new(0.03, 0.1, 0.42, 0.35, 0.2).unwrap();
    let data = one_year(20, 2, Some(0.4));
    assert!(log_marginal_joint_quadrature(&params, &data, 8, CountMode::Binomial).is_err());
}

#[test]
fn marginal_equals_conditional_when_factor_decouples() {
    let params = ModelParams::new(0.04, 1e-16, 0.4, 0.3, 0.0).unwrap();
    let data = ObservationSeries::new(vec![
        YearObservation { year: 1, firms: 300, defaults: 9, avg_recovery: Some(0.35) },
        YearObservation { year: 2, firms: 250, defaults: 0, avg_recovery: None },
        YearObservation { year: 3, firms: 280, defaults: 14, avg_recovery: Some(0.47) },
    ])
    .unwrap();
    let marginal = log_marginal_joint_quadrature(&params, &data, 64, CountMode::Binomial).unwrap().log_density;
    for x in [-2.0, 0.0, 1.3] {
        let path = LatentPath::new(vec![x; 3]).unwrap();
        let conditional = log_conditional_joint(&params, &path, &data, CountMode::Binomial).unwrap();
        assert!((marginal - conditional).abs() < 1e-6, "x={x}: {marginal} vs {conditional}");
    }
}

#[test]
fn rate_density_integrates_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..20 {
        let p: f64 = rng.random_range(0.001..0.2);
        let rho: f64 = rng.random_range(0.01..0.5);
        let t = normal::quantile(p).unwrap();
        // integrate in delta = Phi^-1(psi), where d psi = phi(delta) d delta
        let delta_at = |x: f64| (t - rho.sqrt() * x) / (1.0 - rho).sqrt();
        let (lo, hi) = (delta_at(8.0), delta_at(-8.0));
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let delta = lo + h * i as f64;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let psi = normal::cdf(delta);
            total += w * (log_default_rate_density(psi, p, rho).unwrap() + normal::ln_pdf(delta)).exp();
        }
        total *= h;
        assert!((total - 1.0).abs() <= 1e-6, "p={p} rho={rho}: {total}");
    }
}

#[test]
fn rate_density_at_zero_factor() {
    let (p, rho) = (0.03f64, 0.12f64);
    let delta = normal::quantile(p).unwrap() / (1.0 - rho).sqrt();
    let got = log_default_rate_density(normal::cdf(delta), p, rho).unwrap();
    let want = 0.5 * ((1.0 - rho) / rho).ln() - normal::ln_pdf(delta) + normal::ln_pdf(0.0);
    assert!((got - want).abs() < 1e-9);
    assert!(log_default_rate_density(0.0, p, rho).is_err());
    assert!(log_default_rate_density(1.0, p, rho).is_err());
}

#[test]
fn rate_series_is_additive_and_exchangeable() {
    let psi = [0.012, 0.031, 0.02, 0.008, 0.045];
    let (p, rho) = (0.02, 0.07);
    let total = log_default_rate_series_likelihood(&psi, p, rho).unwrap();
    let sum: f64 = psi.iter().map(|&v| log_default_rate_density(v, p, rho).unwrap()).sum();
    assert!((total - sum).abs() < 1e-12);
    let shuffled = [0.045, 0.008, 0.012, 0.02, 0.031];
    let other = log_default_rate_series_likelihood(&shuffled, p, rho).unwrap();
    assert!((total - other).abs() < 1e-12);
}

/// Straight-line evaluation of one year's conditional log-likelihood.
fn scalar_year(params: &ModelParams, obs: &YearObservation, x: f64) -> f64 {
    let (p, rho, mu, sigma, omega) = (params.p(), params.rho(), params.mu(), params.sigma(), params.omega());
    let lambda = normal::cdf((normal::quantile(p).unwrap() - rho.sqrt() * x) / (1.0 - rho).sqrt());
    let (d, j) = (obs.defaults as f64, obs.firms as f64);
    let mut v = ln_gamma(j + 1.0) - ln_gamma(d + 1.0) - ln_gamma(j - d + 1.0) + d * lambda.ln() + (j - d) * (1.0 - lambda).ln();
    if let Some(r) = obs.avg_recovery {
        let mean = mu + sigma * omega.sqrt() * x;
        let var = sigma * sigma * (1.0 - omega) / d;
        v += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (r - mean).powi(2) / (2.0 * var);
    }
    v
}

#[test]
fn conditional_joint_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let params = ModelParams::new(
            rng.random_range(0.005..0.1),
            rng.random_range(0.02..0.4),
            rng.random_range(0.2..0.7),
            rng.random_range(0.1..0.6),
            rng.random_range(0.0..0.8),
        )
        .unwrap();
        let truth = generate_synthetic(&params, 5, rng.random_range(50..500), rng.random()).unwrap();
        let path: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let got = log_conditional_joint(&params, &LatentPath::new(path.clone()).unwrap(), &truth.series, CountMode::Binomial)
            .unwrap();
        let want: f64 = truth.series.iter().zip(&path).map(|(o, &x)| scalar_year(&params, o, x)).sum();
        assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn conditional_joint_is_sum_of_single_year_terms() {
    let params = ModelParams::new(0.03, 0.1, 0.42, 0.35, 0.2).unwrap();
    let x = 0.7;
    let data = one_year(400, 11, Some(0.44));
    let joint = log_conditional_joint(&params, &LatentPath::new(vec![x]).unwrap(), &data, CountMode::Binomial).unwrap();
    let lambda = conditional_default_prob(&params, x);
    let parts = log_default_count_likelihood(11, 400, lambda, CountMode::Binomial).unwrap()
        + log_avg_recovery_likelihood(0.44, 11, x, &params).unwrap();
    assert!((joint - parts).abs() < 1e-12);
}

#[test]
fn conditional_joint_is_exchangeable_across_years() {
    let params = ModelParams::new(0.03, 0.1, 0.42, 0.35, 0.2).unwrap();
    let truth = generate_synthetic(&params, 6, 300, 5).unwrap();
    let path = truth.path.as_slice().to_vec();
    let base = log_conditional_joint(&params, &truth.path, &truth.series, CountMode::Binomial).unwrap();
    let order = [3, 0, 5, 1, 4, 2];
    let permuted: Vec<YearObservation> = order
        .iter()
        .enumerate()
        .map(|(i, &k)| YearObservation { year: i as i32, ..truth.series.years()[k].clone() })
        .collect();
    let permuted_path: Vec<f64> = order.iter().map(|&k| path[k]).collect();
    let other = log_conditional_joint(
        &params,
        &LatentPath::new(permuted_path).unwrap(),
        &ObservationSeries::new(permuted).unwrap(),
        CountMode::Binomial,
    )
    .unwrap();
    assert!((base - other).abs() < 1e-9);
}

#[test]
fn count_modes_agree_when_binomial_is_near_normal() {
    for (j, lambda) in [(2500u64, 0.02f64), (1000, 0.05), (10_000, 0.01), (400, 0.2)] {
        let m = j as f64 * lambda;
        let sd = (m * (1.0 - lambda)).sqrt();
        assert!(sd * sd >= 25.0);
        let lo = (m - 2.0 * sd).ceil() as u64;
        let hi = (m + 2.0 * sd).floor() as u64;
        for d in lo..=hi {
            let b = log_default_count_likelihood(d, j, lambda, CountMode::Binomial).unwrap();
            let n = log_default_count_likelihood(d, j, lambda, CountMode::Normal).unwrap();
            assert!((b - n).abs() <= 0.02 * b.abs(), "J={j} lambda={lambda} d={d}: {b} vs {n}");
        }
    }
}

#[test]
fn conditional_joint_rises_toward_each_factor_mode() {
    let params = ModelParams::new(0.03, 0.1, 0.42, 0.35, 0.2).unwrap();
    let truth = generate_synthetic(&params, 8, 2000, 17).unwrap();
    let data = &truth.series;
    let fit = downturn::mle::fit_mle(data).unwrap();
    let start = fit.path.unwrap().into_inner();
    let eval = |path: &[f64]| {
        log_conditional_joint(&params, &LatentPath::new(path.to_vec()).unwrap(), data, CountMode::Binomial).unwrap()
    };
    let base = eval(&start);
    assert!(base.is_finite());
    for t in 0..start.len() {
        let mut best = (f64::NEG_INFINITY, start[t]);
        for i in 0..=4000 {
            let mut p = start.clone();
            p[t] = start[t] - 2.0 + 4.0 * i as f64 / 4000.0;
            let v = eval(&p);
            if v > best.0 {
                best = (v, p[t]);
            }
        }
        if (best.1 - start[t]).abs() < 1e-3 {
            continue;
        }
        let mut p = start.clone();
        p[t] += 0.5 * (best.1 - start[t]);
        assert!(eval(&p) > base, "year {t}");
    }
}
