//! Numeric optimisers and fixtures shared by integration tests.
#![allow(dead_code)]

use downturn::data::generate_synthetic;
use downturn::likelihood::log_default_rate_series_likelihood;
use downturn::mle::fit_mle;
use downturn::normal;
use downturn::{ModelParams, ObservationSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximises a unimodal `f` on `[a, b]`; returns the argmax.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Grid search followed by golden-section refinement in the bracketing cell.
pub fn grid_golden(f: impl Fn(f64) -> f64, a: f64, b: f64, cells: usize, tol: f64) -> f64 {
    let h = (b - a) / cells as f64;
    let best = (0..=cells)
        .map(|i| (i, f(a + h * i as f64)))
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let lo = (a + h * (best.0 as f64 - 1.0)).max(a);
    let hi = (a + h * (best.0 as f64 + 1.0)).min(b);
    golden_section(f, lo, hi, tol)
}

/// Nelder–Mead maximisation from `start` with initial step `step`,
/// restarted until a restart no longer improves the optimum.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, start: &[f64], step: f64) -> Vec<f64> {
    let g = |x: &[f64]| -f(x);
    let mut best = start.to_vec();
    let mut best_val = g(&best);
    for _ in 0..20 {
        let x = nelder_mead_once(&g, &best, step);
        let v = g(&x);
        let improved = v < best_val - 1e-15 * best_val.abs().max(1.0);
        if v <= best_val {
            best = x;
            best_val = v;
        }
        if !improved {
            break;
        }
    }
    best
}

fn nelder_mead_once(g: &impl Fn(&[f64]) -> f64, start: &[f64], step: f64) -> Vec<f64> {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += step * v[i].abs().max(0.1);
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|v| g(v)).collect();
    for _ in 0..20_000 {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let size = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if size < 1e-12 {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|k| centroid[k] + t * (simplex[n][k] - centroid[k])).collect() };
        let xr = along(-1.0);
        let fr = g(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = g(&xe);
            if fe < fr {
                simplex[n] = xe;
                vals[n] = fe;
            } else {
                simplex[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            simplex[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let x = along(-0.5);
                let v = g(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = g(&x);
                (x, v)
            };
            if fc < vals[n].min(fr) {
                simplex[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = (0..n).map(|k| simplex[0][k] + 0.5 * (simplex[i][k] - simplex[0][k])).collect();
                    vals[i] = g(&simplex[i]);
                }
            }
        }
    }
    let i = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    simplex[i].clone()
}

/// Numeric maximiser of the default-rate likelihood over `(p, rho)`:
/// profile over `Phi^-1(p)` for each `rho`, golden-section on both levels.
pub fn default_mle_oracle(psi: &[f64]) -> (f64, f64) {
    let profile = |rho: f64| -> (f64, f64) {
        let f = |t: f64| log_default_rate_series_likelihood(psi, normal::cdf(t), rho).unwrap_or(f64::NEG_INFINITY);
        let t = grid_golden(f, -6.0, 0.0, 30, 1e-12);
        (t, f(t))
    };
    let rho = grid_golden(|r| profile(r).1, 1e-6, 0.95, 100, 1e-12);
    (normal::cdf(profile(rho).0), rho)
}

/// Log-likelihood of average recoveries given the factor path, in
/// `(mu, sigma1, sigma2)`.
pub fn recovery_loglik(r: &[f64], d: &[u64], x: &[f64], mu: f64, s1: f64, s2: f64) -> f64 {
    r.iter()
        .zip(d)
        .zip(x)
        .map(|((&r, &d), &x)| {
            let var = s2 * s2 / d as f64;
            -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (r - mu - s1 * x).powi(2) / (2.0 * var)
        })
        .sum()
}

/// Nelder–Mead maximiser of [`recovery_loglik`]; returns `(mu, sigma1, sigma2)`.
pub fn recovery_mle_oracle(r: &[f64], d: &[u64], x: &[f64]) -> (f64, f64, f64) {
    let mean_r = r.iter().sum::<f64>() / r.len() as f64;
    let f = |v: &[f64]| recovery_loglik(r, d, x, v[0], v[1], v[2].exp());
    let v = nelder_mead(f, &[mean_r, 0.0, (0.3f64).ln()], 0.5);
    (v[0], v[1], v[2].exp())
}

/// Parameter values used as truth for simulation fixtures.
pub fn reference_params() -> ModelParams {
    ModelParams::new(0.0167, 0.0635, 0.411, 0.499, 0.0192).unwrap()
}

/// Random synthetic series with defaults in every year, so the closed-form
/// fit applies.
pub fn random_fixture(rng: &mut ChaCha8Rng) -> (ModelParams, ObservationSeries) {
    loop {
        let params = ModelParams::new(
            rng.random_range(0.01..0.05),
            rng.random_range(0.03..0.25),
            rng.random_range(0.3..0.6),
            rng.random_range(0.2..0.6),
            rng.random_range(0.01..0.4),
        )
        .unwrap();
        let years = rng.random_range(5..=50);
        let firms = rng.random_range(2000..20_000);
        let truth = generate_synthetic(&params, years, firms, rng.random()).unwrap();
        if fit_mle(&truth.series).is_ok() {
            return (params, truth.series);
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
