//! Component-wise Metropolis–Hastings sampling of the joint posterior of the
//! model parameters and the latent factor path.
//!
//! The chain state is `(Phi^-1(p), rho, mu, sigma, omega, x_1, .., x_T)`.
//! Bounded components get uniform priors and truncated Gaussian random-walk
//! proposals; factor values get standard normal priors and plain Gaussian
//! proposals. Proposal scales adapt during burn-in only.

mod draws;
mod summary;

pub use draws::{ChainMetadata, DrawTable};
pub use summary::{posterior_summary, NamedSummary, PosteriorSummary};

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{CountMode, ObservationSeries, YearKernel};
use crate::mle::fit_mle;
use crate::normal;

/// State index of `Phi^-1(p)`.
pub const THRESHOLD: usize = 0;
pub const RHO: usize = 1;
pub const MU: usize = 2;
pub const SIGMA: usize = 3;
pub const OMEGA: usize = 4;
/// Number of model parameters ahead of the factor values in a state.
pub const N_PARAMS: usize = 5;

pub const PARAM_NAMES: [&str; N_PARAMS] = ["p_threshold", "rho", "mu", "sigma", "omega"];

/// Open interval of a uniform prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::Domain(format!("invalid prior bounds ({lower}, {upper})")));
        }
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, v: f64) -> bool {
        v > self.lower && v < self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Uniform prior bounds on the parameters; factor values are standard normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub p_threshold: Bounds,
    pub rho: Bounds,
    pub mu: Bounds,
    pub sigma: Bounds,
    pub omega: Bounds,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            p_threshold: Bounds { lower: -10.0, upper: 10.0 },
            rho: Bounds { lower: 0.0, upper: 1.0 },
            mu: Bounds { lower: 0.0, upper: 1.0 },
            sigma: Bounds { lower: 0.01, upper: 1.0 },
            omega: Bounds { lower: 0.0, upper: 1.0 },
        }
    }
}

impl PriorSpec {
    pub fn bounds(&self, k: usize) -> Bounds {
        match k {
            THRESHOLD => self.p_threshold,
            RHO => self.rho,
            MU => self.mu,
            SIGMA => self.sigma,
            OMEGA => self.omega,
            _ => panic!("parameter index {k} out of range"),
        }
    }

    /// Replaces the bounds of one parameter. Bounds on `rho`, `mu` and
    /// `omega` must stay within `[0, 1]` and on `sigma` within `[0.01, 1]`
    /// so that every draw is a valid parameter set.
    pub fn with_bounds(mut self, k: usize, bounds: Bounds) -> Result<Self> {
        let (lo, hi) = match k {
            THRESHOLD => (f64::NEG_INFINITY, f64::INFINITY),
            SIGMA => (0.01, 1.0),
            RHO | MU | OMEGA => (0.0, 1.0),
            _ => return Err(Error::Domain(format!("parameter index {k} out of range"))),
        };
        if bounds.lower < lo || bounds.upper > hi {
            return Err(Error::Domain(format!(
                "bounds for {} must lie within [{lo}, {hi}]",
                PARAM_NAMES[k]
            )));
        }
        match k {
            THRESHOLD => self.p_threshold = bounds,
            RHO => self.rho = bounds,
            MU => self.mu = bounds,
            SIGMA => self.sigma = bounds,
            _ => self.omega = bounds,
        }
        Ok(self)
    }

    fn contains(&self, state: &[f64]) -> bool {
        (0..N_PARAMS).all(|k| self.bounds(k).contains(state[k]))
    }
}

/// Run lengths, adaptation settings and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub burn_in: usize,
    pub samples: usize,
    pub target_acceptance: f64,
    /// Sweeps per proposal-scale adaptation during burn-in.
    pub tuning_window: usize,
    /// Gain `kappa` of the log-scale update `s <- s exp(kappa (acc - target))`.
    pub adaptation_rate: f64,
    pub seed: u64,
    pub count_mode: CountMode,
    /// Components held at their initial value.
    #[serde(default)]
    pub fixed_components: Vec<usize>,
    /// Starting state; overrides `start` when present.
    #[serde(default)]
    pub initial_state: Option<Vec<f64>>,
    #[serde(default)]
    pub start: StartPoint,
    /// Follows each sweep with the target's joint moves (for the model
    /// posterior: a translation and a rescaling of the factor path that
    /// leave the likelihood unchanged). Ignored when any component is fixed.
    #[serde(default = "enabled")]
    pub joint_moves: bool,
}

fn enabled() -> bool {
    true
}

/// Where a chain starts when no explicit state is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartPoint {
    /// Independent uniform draws within the bounds, standard normal factors.
    #[default]
    Prior,
    /// The closed-form estimates and estimated factor path; falls back to
    /// the prior when those do not exist.
    Mle,
}

impl FromStr for StartPoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "prior" => Ok(StartPoint::Prior),
            "mle" => Ok(StartPoint::Mle),
            other => Err(Error::Domain(format!("unknown start point '{other}' (expected prior or mle)"))),
        }
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            burn_in: 20_000,
            samples: 100_000,
            target_acceptance: 0.234,
            tuning_window: 200,
            adaptation_rate: 1.0,
            seed: 0,
            count_mode: CountMode::Binomial,
            fixed_components: Vec::new(),
            initial_state: None,
            start: StartPoint::Prior,
            joint_moves: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 1 {
            return Err(Error::Domain("at least one retained sample is required".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::Domain("target acceptance must lie in (0, 1)".into()));
        }
        if self.tuning_window < 1 {
            return Err(Error::Domain("tuning window must be positive".into()));
        }
        Ok(())
    }
}

/// A log-density over a fixed-dimension state that supports cheap
/// single-component updates.
///
/// The sampler calls [`reset`](Self::reset) once, then for each update
/// [`propose`](Self::propose) followed by [`commit`](Self::commit) when the
/// proposal is accepted.
pub trait ComponentTarget {
    fn dim(&self) -> usize;

    /// Support of component `k`; infinite ends mean unbounded.
    fn support(&self, k: usize) -> (f64, f64);

    /// Log-density at `state`; resets any cached terms.
    fn reset(&mut self, state: &[f64]) -> f64;

    /// Log-density at `state` with component `k` replaced by `value`.
    fn propose(&mut self, state: &[f64], k: usize, value: f64) -> f64;

    /// Adopts the most recent proposal.
    fn commit(&mut self);

    /// Number of joint moves offered by [`joint_move`](Self::joint_move).
    fn joint_moves(&self) -> usize {
        0
    }

    /// Writes into `out` the image of `state` under joint move `m` with step
    /// `step` and returns the log-Jacobian of the map, or `None` when the
    /// image is undefined. Move `m` with step `-step` must invert it.
    fn joint_move(&self, _m: usize, _state: &[f64], _step: f64, _out: &mut Vec<f64>) -> Option<f64> {
        None
    }
}

/// Posterior of the parameters and factor path, or the bare prior when no
/// data are attached.
pub struct PosteriorTarget<'a> {
    data: Option<&'a ObservationSeries>,
    years: usize,
    prior: PriorSpec,
    mode: CountMode,
    terms: Vec<f64>,
    scratch: Vec<f64>,
    total: f64,
    pending: Pending,
}

#[derive(Clone, Copy)]
enum Pending {
    None,
    Params(f64),
    Latent { t: usize, term: f64, total: f64 },
}

impl<'a> PosteriorTarget<'a> {
    pub fn new(data: &'a ObservationSeries, prior: PriorSpec, mode: CountMode) -> Self {
        Self::build(Some(data), data.len(), prior, mode)
    }

    /// Constant likelihood over `years` factor values.
    pub fn prior_only(years: usize, prior: PriorSpec) -> Self {
        Self::build(None, years, prior, CountMode::Binomial)
    }

    fn build(data: Option<&'a ObservationSeries>, years: usize, prior: PriorSpec, mode: CountMode) -> Self {
        Self {
            data,
            years,
            prior,
            mode,
            terms: vec![0.0; years],
            scratch: vec![0.0; years],
            total: 0.0,
            pending: Pending::None,
        }
    }

    fn year_term(&self, kernel: &YearKernel, t: usize, x: f64) -> f64 {
        let likelihood = match self.data {
            Some(data) => kernel.year(&data.years()[t], x, self.mode),
            None => 0.0,
        };
        likelihood + normal::ln_pdf(x)
    }

    fn fill_terms(&mut self, params: &[f64], xs: &[f64]) -> f64 {
        let kernel = YearKernel::new(params[0], params[1], params[2], params[3], params[4]);
        let mut scratch = std::mem::take(&mut self.scratch);
        for (t, slot) in scratch.iter_mut().enumerate() {
            *slot = self.year_term(&kernel, t, xs[t]);
        }
        let total = scratch.iter().sum();
        self.scratch = scratch;
        total
    }
}

impl ComponentTarget for PosteriorTarget<'_> {
    fn dim(&self) -> usize {
        N_PARAMS + self.years
    }

    fn support(&self, k: usize) -> (f64, f64) {
        if k < N_PARAMS {
            let b = self.prior.bounds(k);
            (b.lower, b.upper)
        } else {
            (f64::NEG_INFINITY, f64::INFINITY)
        }
    }

    fn reset(&mut self, state: &[f64]) -> f64 {
        self.pending = Pending::None;
        if !self.prior.contains(state) {
            self.total = f64::NEG_INFINITY;
            return self.total;
        }
        self.total = self.fill_terms(&state[..N_PARAMS], &state[N_PARAMS..]);
        std::mem::swap(&mut self.terms, &mut self.scratch);
        self.total
    }

    fn propose(&mut self, state: &[f64], k: usize, value: f64) -> f64 {
        if k < N_PARAMS {
            if !self.prior.bounds(k).contains(value) {
                self.pending = Pending::None;
                return f64::NEG_INFINITY;
            }
            let mut params = [0.0; N_PARAMS];
            params.copy_from_slice(&state[..N_PARAMS]);
            params[k] = value;
            let total = self.fill_terms(&params, &state[N_PARAMS..]);
            self.pending = Pending::Params(total);
            total
        } else {
            let t = k - N_PARAMS;
            let kernel = YearKernel::new(state[0], state[1], state[2], state[3], state[4]);
            let term = self.year_term(&kernel, t, value);
            let total = self.total - self.terms[t] + term;
            self.pending = Pending::Latent { t, term, total };
            total
        }
    }

    fn commit(&mut self) {
        match std::mem::replace(&mut self.pending, Pending::None) {
            Pending::None => {}
            Pending::Params(total) => {
                std::mem::swap(&mut self.terms, &mut self.scratch);
                self.total = total;
            }
            Pending::Latent { t, term, total } => {
                self.terms[t] = term;
                self.total = total;
            }
        }
    }

    fn joint_moves(&self) -> usize {
        2
    }

    /// Move 0 translates: `x_t -> x_t + step`, `Phi^-1(p) -> Phi^-1(p) +
    /// sqrt(rho) step`, `mu -> mu - sigma sqrt(omega) step`.
    ///
    /// Move 1 rescales by `c = exp(step)`: `x_t -> c x_t`,
    /// `rho/(1-rho) -> rho/((1-rho) c^2)`, the threshold by
    /// `sqrt((1-rho')/(1-rho))`, `sigma^2 omega -> sigma^2 omega / c^2` with
    /// `sigma^2 (1-omega)` held fixed.
    ///
    /// Both keep every year's conditional default probability and recovery
    /// law unchanged, so acceptance is decided by the factor prior, the
    /// bounds and the Jacobian.
    fn joint_move(&self, m: usize, state: &[f64], step: f64, out: &mut Vec<f64>) -> Option<f64> {
        out.clear();
        out.extend_from_slice(state);
        let (rho, sigma, omega) = (state[RHO], state[SIGMA], state[OMEGA]);
        match m {
            0 => {
                out[THRESHOLD] += rho.sqrt() * step;
                out[MU] -= sigma * omega.sqrt() * step;
                out[N_PARAMS..].iter_mut().for_each(|x| *x += step);
                Some(0.0)
            }
            1 => {
                let c = step.exp();
                let odds = rho / (1.0 - rho) / (c * c);
                let rho_new = odds / (1.0 + odds);
                let var_u = sigma * sigma * (1.0 - omega);
                let var_v = sigma * sigma * omega / (c * c);
                let sigma_new = (var_u + var_v).sqrt();
                let omega_new = var_v / (var_u + var_v);
                if !(rho_new > 0.0 && rho_new < 1.0 && sigma_new > 0.0 && omega_new.is_finite()) {
                    return None;
                }
                let ratio = (1.0 - rho_new) / (1.0 - rho);
                out[THRESHOLD] = state[THRESHOLD] * ratio.sqrt();
                out[RHO] = rho_new;
                out[SIGMA] = sigma_new;
                out[OMEGA] = omega_new;
                out[N_PARAMS..].iter_mut().for_each(|x| *x *= c);
                let years = (state.len() - N_PARAMS) as f64;
                Some((years - 4.0) * step + 2.5 * ratio.ln() + 3.0 * (sigma / sigma_new).ln())
            }
            _ => None,
        }
    }
}

/// Unnormalized log-posterior of a full state
/// `(Phi^-1(p), rho, mu, sigma, omega, x_1, .., x_T)`.
///
/// Uniform priors contribute a constant and are omitted; states outside the
/// prior bounds return `f64::NEG_INFINITY`.
pub fn log_posterior(state: &[f64], data: &ObservationSeries, prior: &PriorSpec, mode: CountMode) -> Result<f64> {
    if state.len() != N_PARAMS + data.len() {
        return Err(Error::Domain(format!(
            "state has {} components, expected {}",
            state.len(),
            N_PARAMS + data.len()
        )));
    }
    let mut target = PosteriorTarget::new(data, *prior, mode);
    Ok(target.reset(state))
}

/// Draws a starting state: each bounded component uniform on its open
/// interval, each factor value standard normal.
pub fn init_state<R: Rng + ?Sized>(prior: &PriorSpec, years: usize, rng: &mut R) -> Vec<f64> {
    let mut state = Vec::with_capacity(N_PARAMS + years);
    for k in 0..N_PARAMS {
        let b = prior.bounds(k);
        let v = loop {
            let v = rng.random_range(b.lower..b.upper);
            if b.contains(v) {
                break v;
            }
        };
        state.push(v);
    }
    for _ in 0..years {
        state.push(rng.sample::<f64, _>(StandardNormal));
    }
    state
}

const MIN_SCALE: f64 = 1e-6;
const MAX_UNBOUNDED_SCALE: f64 = 10.0;

/// Upper clamp of the proposal scale for a component with the given support.
fn max_scale(support: (f64, f64)) -> f64 {
    let width = support.1 - support.0;
    if width.is_finite() {
        width
    } else {
        MAX_UNBOUNDED_SCALE
    }
}

/// One adaptation step of a proposal scale toward the target acceptance.
pub fn adapt_scale(scale: f64, acceptance: f64, target: f64, rate: f64, max: f64) -> f64 {
    (scale * (rate * (acceptance - target)).exp()).clamp(MIN_SCALE, max)
}

/// The factor mean and spread are known to about `1/sqrt(T)`.
fn initial_joint_scale(dim: usize) -> f64 {
    let years = dim.saturating_sub(N_PARAMS).max(1);
    1.0 / (years as f64).sqrt()
}

fn initial_scale(support: (f64, f64)) -> f64 {
    let width = support.1 - support.0;
    if width.is_finite() {
        0.01 * width
    } else {
        0.1
    }
}

/// In-bounds mass of a normal with the given centre and scale.
fn ln_in_bounds_mass(centre: f64, scale: f64, support: (f64, f64)) -> f64 {
    let upper = if support.1.is_finite() { normal::cdf((support.1 - centre) / scale) } else { 1.0 };
    let lower = if support.0.is_finite() { normal::cdf((support.0 - centre) / scale) } else { 0.0 };
    (upper - lower).ln()
}

/// Mutable state of a running chain.
struct Walker<'t, T: ComponentTarget> {
    target: &'t mut T,
    state: Vec<f64>,
    current: f64,
    scales: Vec<f64>,
    supports: Vec<(f64, f64)>,
    active: Vec<bool>,
    accepted: Vec<u64>,
    attempted: Vec<u64>,
    joint: Vec<JointMove>,
    buffer: Vec<f64>,
}

/// Step scale and counters of one joint move.
struct JointMove {
    scale: f64,
    accepted: u64,
    attempted: u64,
}

impl<T: ComponentTarget> Walker<'_, T> {
    fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for k in 0..self.state.len() {
            if !self.active[k] {
                continue;
            }
            let (lo, hi) = self.supports[k];
            let centre = self.state[k];
            let scale = self.scales[k];
            let proposal = loop {
                let v = centre + scale * rng.sample::<f64, _>(StandardNormal);
                if v > lo && v < hi {
                    break v;
                }
            };
            let u: f64 = rng.random();
            let proposed = self.target.propose(&self.state, k, proposal);
            self.attempted[k] += 1;
            let accept = if proposed == f64::NEG_INFINITY || proposed.is_nan() {
                false
            } else if self.current == f64::NEG_INFINITY {
                true
            } else {
                let mut log_ratio = proposed - self.current;
                if lo.is_finite() || hi.is_finite() {
                    // q(x | x') / q(x' | x) for the truncated proposal
                    log_ratio += ln_in_bounds_mass(centre, scale, (lo, hi))
                        - ln_in_bounds_mass(proposal, scale, (lo, hi));
                }
                u.ln() < log_ratio
            };
            if accept {
                self.target.commit();
                self.state[k] = proposal;
                self.current = proposed;
                self.accepted[k] += 1;
            }
        }
        self.joint_steps(rng);
    }

    fn joint_steps<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for m in 0..self.joint.len() {
            let step = self.joint[m].scale * rng.sample::<f64, _>(StandardNormal);
            let u: f64 = rng.random();
            let mut proposal = std::mem::take(&mut self.buffer);
            self.joint[m].attempted += 1;
            let accept = match self.target.joint_move(m, &self.state, step, &mut proposal) {
                Some(log_jacobian) => {
                    let proposed = self.target.reset(&proposal);
                    if proposed.is_finite() && u.ln() < proposed - self.current + log_jacobian {
                        self.current = proposed;
                        true
                    } else {
                        self.target.reset(&self.state);
                        false
                    }
                }
                None => false,
            };
            if accept {
                self.joint[m].accepted += 1;
                std::mem::swap(&mut self.state, &mut proposal);
            }
            self.buffer = proposal;
        }
    }

    fn reset_counts(&mut self) {
        self.accepted.iter_mut().for_each(|a| *a = 0);
        self.attempted.iter_mut().for_each(|a| *a = 0);
        for mv in &mut self.joint {
            mv.accepted = 0;
            mv.attempted = 0;
        }
    }

    fn joint_acceptance(&self) -> Vec<f64> {
        self.joint
            .iter()
            .map(|mv| mv.accepted as f64 / mv.attempted.max(1) as f64)
            .collect()
    }

    fn acceptance(&self) -> Vec<Option<f64>> {
        self.accepted
            .iter()
            .zip(&self.attempted)
            .map(|(&a, &n)| (n > 0).then(|| a as f64 / n as f64))
            .collect()
    }
}

/// Proposal scales and chain position at the end of burn-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub scales: Vec<f64>,
    pub state: Vec<f64>,
    /// Acceptance rates over the final adaptation window.
    pub last_window_acceptance: Vec<Option<f64>>,
}

fn start<'t, T: ComponentTarget, R: Rng + ?Sized>(
    target: &'t mut T,
    config: &SamplerConfig,
    init: impl FnOnce(&mut R) -> Vec<f64>,
    rng: &mut R,
) -> Result<Walker<'t, T>> {
    config.validate()?;
    let dim = target.dim();
    let state = match &config.initial_state {
        Some(s) => {
            if s.len() != dim {
                return Err(Error::Domain(format!(
                    "initial state has {} components, expected {dim}",
                    s.len()
                )));
            }
            s.clone()
        }
        None => init(rng),
    };
    let supports: Vec<(f64, f64)> = (0..dim).map(|k| target.support(k)).collect();
    for (k, (&v, &(lo, hi))) in state.iter().zip(&supports).enumerate() {
        if !(v > lo && v < hi) {
            return Err(Error::Domain(format!("initial component {k} = {v} outside its support")));
        }
    }
    let mut active = vec![true; dim];
    for &k in &config.fixed_components {
        if k >= dim {
            return Err(Error::Domain(format!("fixed component {k} out of range")));
        }
        active[k] = false;
    }
    let current = target.reset(&state);
    let scales = supports.iter().map(|&s| initial_scale(s)).collect();
    let joint = if config.joint_moves && config.fixed_components.is_empty() {
        (0..target.joint_moves())
            .map(|_| JointMove {
                scale: initial_joint_scale(dim),
                accepted: 0,
                attempted: 0,
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(Walker {
        target,
        state,
        current,
        scales,
        supports,
        active,
        accepted: vec![0; dim],
        attempted: vec![0; dim],
        joint,
        buffer: Vec::with_capacity(dim),
    })
}

fn burn_in<T: ComponentTarget, R: Rng + ?Sized>(walker: &mut Walker<'_, T>, config: &SamplerConfig, rng: &mut R) -> Vec<Option<f64>> {
    let mut last = vec![None; walker.state.len()];
    for i in 0..config.burn_in {
        walker.sweep(rng);
        if (i + 1) % config.tuning_window == 0 {
            last = walker.acceptance();
            for (k, acc) in last.iter().enumerate() {
                if let Some(acc) = acc {
                    walker.scales[k] = adapt_scale(
                        walker.scales[k],
                        *acc,
                        config.target_acceptance,
                        config.adaptation_rate,
                        max_scale(walker.supports[k]),
                    );
                }
            }
            let joint = walker.joint_acceptance();
            for (mv, acc) in walker.joint.iter_mut().zip(joint) {
                mv.scale = adapt_scale(mv.scale, acc, config.target_acceptance, config.adaptation_rate, MAX_UNBOUNDED_SCALE);
            }
            walker.reset_counts();
        }
    }
    walker.reset_counts();
    last
}

/// Runs the burn-in phase: sweeps the chain and, after every tuning window,
/// moves each proposal scale by `exp(kappa (acc - target))`.
pub fn tune_proposals(
    data: &ObservationSeries,
    prior: &PriorSpec,
    config: &SamplerConfig,
    rng: &mut (impl Rng + ?Sized),
) -> Result<TuningResult> {
    let mut target = PosteriorTarget::new(data, *prior, config.count_mode);
    let years = data.len();
    let mut walker = start(&mut target, config, |r| init_state(prior, years, r), rng)?;
    let last = burn_in(&mut walker, config, rng);
    Ok(TuningResult {
        scales: walker.scales.clone(),
        state: walker.state.clone(),
        last_window_acceptance: last,
    })
}

/// Retained draws of a generic target.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerRun {
    /// Row-major, `samples x dim`.
    pub draws: Vec<f64>,
    pub dim: usize,
    /// Per-component acceptance over the retained sweeps; `None` for fixed
    /// components.
    pub acceptance: Vec<Option<f64>>,
    pub scales: Vec<f64>,
    /// Acceptance and frozen step scale of each joint move; empty when off.
    pub joint_acceptance: Vec<f64>,
    pub joint_scales: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Acceptance band outside which tuning is reported as not converged.
pub const TUNING_BAND: (f64, f64) = (0.1, 0.5);

/// Runs burn-in with adaptation followed by `config.samples` retained sweeps
/// with frozen scales. `init` draws the starting state when the config does
/// not supply one.
pub fn sample_target<T: ComponentTarget>(
    target: &mut T,
    config: &SamplerConfig,
    init: impl FnOnce(&mut ChaCha8Rng) -> Vec<f64>,
) -> Result<SamplerRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut walker = start(target, config, init, &mut rng)?;
    burn_in(&mut walker, config, &mut rng);
    let dim = walker.state.len();
    let mut draws = Vec::with_capacity(dim * config.samples);
    for _ in 0..config.samples {
        walker.sweep(&mut rng);
        draws.extend_from_slice(&walker.state);
    }
    let acceptance = walker.acceptance();
    let warnings = acceptance_warnings(&acceptance, |k| format!("component {k}"));
    Ok(SamplerRun {
        draws,
        dim,
        acceptance,
        scales: walker.scales.clone(),
        joint_acceptance: walker.joint_acceptance(),
        joint_scales: walker.joint.iter().map(|mv| mv.scale).collect(),
        warnings,
    })
}

/// One warning listing every component whose retained acceptance rate lies
/// outside [`TUNING_BAND`].
fn acceptance_warnings(acceptance: &[Option<f64>], name: impl Fn(usize) -> String) -> Vec<String> {
    let off: Vec<String> = acceptance
        .iter()
        .enumerate()
        .filter_map(|(k, a)| match a {
            Some(a) if !(TUNING_BAND.0..=TUNING_BAND.1).contains(a) => Some(format!("{} {a:.3}", name(k))),
            _ => None,
        })
        .collect();
    if off.is_empty() {
        Vec::new()
    } else {
        vec![format!(
            "acceptance outside [{}, {}] after tuning (longer burn-in may help): {}",
            TUNING_BAND.0,
            TUNING_BAND.1,
            off.join(", ")
        )]
    }
}

/// Posterior draws with run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub table: DrawTable,
    pub metadata: ChainMetadata,
}

impl ChainOutput {
    pub fn rows(&self) -> usize {
        self.table.rows()
    }
}

/// Samples the posterior of `(theta, x_1..x_T)` given the data.
pub fn run_chain(data: &ObservationSeries, prior: &PriorSpec, config: &SamplerConfig) -> Result<ChainOutput> {
    if data.len() < 2 {
        return Err(Error::Series("sampling needs at least 2 years".into()));
    }
    let mut target = PosteriorTarget::new(data, *prior, config.count_mode);
    if config.initial_state.is_some() || config.start == StartPoint::Prior {
        return run_target(&mut target, data.len(), prior, config, Vec::new());
    }
    match mle_state(data, prior) {
        Ok(state) => {
            let started = SamplerConfig {
                initial_state: Some(state),
                ..config.clone()
            };
            let mut out = run_target(&mut target, data.len(), prior, &started, Vec::new())?;
            out.metadata.config.initial_state = None;
            Ok(out)
        }
        Err(e) => {
            let note = format!("no closed-form starting point ({e}); started from the prior");
            run_target(&mut target, data.len(), prior, config, vec![note])
        }
    }
}

/// Chain state at the closed-form estimates, each bounded component pulled
/// inside its prior bounds.
pub fn mle_state(data: &ObservationSeries, prior: &PriorSpec) -> Result<Vec<f64>> {
    let fit = fit_mle(data)?;
    let (Some(params), Some(path)) = (fit.params, fit.path) else {
        return Err(Error::Degenerate(fit.warnings.join("; ")));
    };
    let theta = [params.threshold(), params.rho(), params.mu(), params.sigma(), params.omega()];
    let mut state: Vec<f64> = theta
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let b = prior.bounds(k);
            let margin = 1e-6 * b.width();
            v.clamp(b.lower + margin, b.upper - margin)
        })
        .collect();
    state.extend_from_slice(path.as_slice());
    Ok(state)
}

/// Samples the bare prior over `years` factor values.
pub fn run_prior_chain(years: usize, prior: &PriorSpec, config: &SamplerConfig) -> Result<ChainOutput> {
    let mut target = PosteriorTarget::prior_only(years, *prior);
    run_target(&mut target, years, prior, config, Vec::new())
}

fn run_target(
    target: &mut PosteriorTarget<'_>,
    years: usize,
    prior: &PriorSpec,
    config: &SamplerConfig,
    mut warnings: Vec<String>,
) -> Result<ChainOutput> {
    let run = sample_target(target, config, |rng| init_state(prior, years, rng))?;
    let table = DrawTable::from_states(&run.draws, run.dim)?;
    warnings.extend(acceptance_warnings(&run.acceptance, |k| table.columns()[k].clone()));
    Ok(ChainOutput {
        table,
        metadata: ChainMetadata {
            seed: config.seed,
            config: config.clone(),
            prior: *prior,
            acceptance: run.acceptance,
            scales: run.scales,
            joint_acceptance: run.joint_acceptance,
            joint_scales: run.joint_scales,
            warnings,
        },
    })
}
