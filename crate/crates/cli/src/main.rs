//! `downturn`: fit the one-factor default/recovery model, sample its
//! posterior, compute economic capital and simulate data.
//!
//! Human-readable tables go to standard output, JSON to `--output`.
//! Exit codes: 0 success, 2 usage, 3 data validation, 4 numeric degeneracy.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use downturn::capital::{capital_report, CapitalSettings, Portfolio, Simulation};
use downturn::data::{generate_synthetic, load_observations, write_observations};
use downturn::mcmc::{posterior_summary, run_chain, Bounds, DrawTable, PriorSpec, SamplerConfig, StartPoint, PARAM_NAMES};
use downturn::mle::{fit_mle, MleFit};
use downturn::report::{self, Report};
use downturn::{CountMode, Error, ModelParams, ObservationSeries, SMode};

#[derive(Parser)]
#[command(name = "downturn", version, about = "One-factor credit model with dependent recoveries")]
struct Cli {
    /// Worker threads for loss simulation (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form maximum likelihood fit.
    FitMle(FitMleArgs),
    /// Metropolis-Hastings posterior sample.
    FitMcmc(FitMcmcArgs),
    /// Economic capital from a chain or a point estimate.
    Capital(CapitalArgs),
    /// Simulate an observation file from given parameters.
    Synth(SynthArgs),
}

#[derive(Args)]
struct FitMleArgs {
    /// Observation CSV (year,firms,defaults,avg_recovery).
    #[arg(long)]
    input: PathBuf,
    /// JSON report destination.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct FitMcmcArgs {
    /// Observation CSV (year,firms,defaults,avg_recovery).
    #[arg(long)]
    input: PathBuf,
    /// JSON report destination.
    #[arg(long)]
    output: PathBuf,
    /// Chain CSV destination [default: <output stem>.chain.csv].
    #[arg(long)]
    chain: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sweeps discarded while proposal scales adapt.
    #[arg(long, default_value_t = 20_000)]
    burn_in: usize,
    /// Retained sweeps.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Default-count likelihood: binomial or normal.
    #[arg(long, default_value = "binomial")]
    count_mode: CountMode,
    /// Uniform prior override NAME=LOWER,UPPER for p_threshold, rho, mu,
    /// sigma or omega; repeatable.
    #[arg(long = "bound", value_name = "NAME=LOWER,UPPER")]
    bounds: Vec<String>,
    /// Starting state: prior (random draw within the bounds) or mle
    /// (closed-form estimates and factor path).
    #[arg(long, default_value = "prior")]
    start: StartPoint,
    /// Use single-component updates only, without the joint translation
    /// and rescaling moves of the factor path.
    #[arg(long)]
    componentwise_only: bool,
}

#[derive(Args)]
struct CapitalArgs {
    /// Chain CSV, JSON report with an MLE fit, or JSON parameter set.
    #[arg(long)]
    input: PathBuf,
    /// Point estimate (JSON report or parameter set) for the MLE column.
    #[arg(long)]
    mle: Option<PathBuf>,
    /// JSON report destination.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Quantile level.
    #[arg(long, default_value_t = 0.999)]
    q: f64,
    /// Portfolio sizes; `inf` is the infinitely granular portfolio.
    #[arg(long, value_delimiter = ',', default_value = "50,500,5000,inf")]
    portfolio_sizes: Vec<Portfolio>,
    /// Monte Carlo draws per predictive quantile.
    #[arg(long, default_value_t = 100_000)]
    draws: usize,
    /// Conditional expected loss given default: exact or linear.
    #[arg(long, default_value = "exact")]
    s_mode: SMode,
    /// Use every STRIDE-th chain row.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0.0167)]
    p: f64,
    #[arg(long, default_value_t = 0.0635)]
    rho: f64,
    #[arg(long, default_value_t = 0.411)]
    mu: f64,
    #[arg(long, default_value_t = 0.499)]
    sigma: f64,
    #[arg(long, default_value_t = 0.0192)]
    omega: f64,
    /// Number of years T.
    #[arg(long, default_value_t = 29)]
    years: usize,
    /// Firms per year J.
    #[arg(long, default_value_t = 2500)]
    firms: u64,
    /// Label of the first simulated year.
    #[arg(long, default_value_t = 1)]
    first_year: i32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Observation CSV destination [default: standard output].
    #[arg(long)]
    output: Option<PathBuf>,
    /// JSON destination for the true parameters and factor path.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Input(PathBuf, std::io::Error),
    Output(PathBuf, std::io::Error),
    Model(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Model(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Input(..) | Failure::Output(..) => 3,
            Failure::Model(e) => match e {
                Error::Domain(_) | Error::InvalidParameter { .. } => 2,
                Error::Degenerate(_) => 4,
                _ => 3,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "{m}"),
            Failure::Input(p, e) => write!(f, "cannot read {}: {e}", p.display()),
            Failure::Output(p, e) => write!(f, "cannot write {}: {e}", p.display()),
            Failure::Model(e) => write!(f, "{e}"),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(path.to_path_buf(), e))
}

fn load_series(path: &Path) -> Result<ObservationSeries, Failure> {
    let text = read_text(path)?;
    load_observations(text.as_bytes()).map_err(|e| match e {
        Error::Data { line, message } => Failure::Model(Error::Series(format!("{}:{line}: {message}", path.display()))),
        e => e.into(),
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CmdResult {
    fs::write(path, bytes).map_err(|e| Failure::Output(path.to_path_buf(), e))
}

fn write_json(path: &Path, report: &Report) -> CmdResult {
    let mut buf = Vec::new();
    report::write_report(report, &mut buf)?;
    write_bytes(path, &buf)
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn fit_mle_cmd(a: FitMleArgs) -> CmdResult {
    let data = load_series(&a.input)?;
    let fit = fit_mle(&data)?;
    warn_all(&fit.warnings);
    print!("{}", report::mle_table(&fit));
    if let Some(out) = &a.output {
        let mut r = Report::new(json!({
            "command": "fit-mle",
            "input": a.input.display().to_string(),
        }));
        r.mle = Some(fit);
        write_json(out, &r)?;
    }
    Ok(())
}

fn parse_bound(spec: &str) -> Result<(usize, Bounds), Failure> {
    let bad = || Failure::Usage(format!("bound '{spec}' is not NAME=LOWER,UPPER"));
    let (name, range) = spec.split_once('=').ok_or_else(bad)?;
    let k = PARAM_NAMES
        .iter()
        .position(|n| *n == name.trim())
        .ok_or_else(|| Failure::Usage(format!("unknown parameter '{name}'; expected one of {}", PARAM_NAMES.join(", "))))?;
    let (lo, hi) = range.split_once(',').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    Ok((k, Bounds::new(lo, hi)?))
}

fn default_chain_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map_or_else(|| "chain".into(), |s| s.to_string_lossy().into_owned());
    output.with_file_name(format!("{stem}.chain.csv"))
}

fn fit_mcmc_cmd(a: FitMcmcArgs) -> CmdResult {
    let data = load_series(&a.input)?;
    let mut prior = PriorSpec::default();
    for spec in &a.bounds {
        let (k, b) = parse_bound(spec)?;
        prior = prior.with_bounds(k, b)?;
    }
    let config = SamplerConfig {
        burn_in: a.burn_in,
        samples: a.samples,
        seed: a.seed,
        count_mode: a.count_mode,
        start: a.start,
        joint_moves: !a.componentwise_only,
        ..SamplerConfig::default()
    };
    let chain = run_chain(&data, &prior, &config)?;
    warn_all(&chain.metadata.warnings);
    let mle = match fit_mle(&data) {
        Ok(fit) => Some(fit),
        Err(e) => {
            eprintln!("note: no closed-form fit ({e})");
            None
        }
    };
    let summary = posterior_summary(&chain);

    let chain_path = a.chain.clone().unwrap_or_else(|| default_chain_path(&a.output));
    let mut csv = Vec::new();
    chain.table.write_csv(&mut csv)?;
    write_bytes(&chain_path, &csv)?;

    let mut r = Report::new(json!({
        "command": "fit-mcmc",
        "input": a.input.display().to_string(),
        "chain": chain_path.display().to_string(),
        "sampler": chain.metadata,
    }));
    r.mle = mle;
    r.posterior_summary = Some(summary);
    write_json(&a.output, &r)?;

    let summary = r.posterior_summary.as_ref().expect("just set");
    print!("{}", report::posterior_table(summary, r.mle.as_ref()));
    println!("\nretained draws: {}", summary.draws);
    let names = chain.table.columns();
    let rates: Vec<String> = chain
        .metadata
        .acceptance
        .iter()
        .zip(names)
        .take(PARAM_NAMES.len())
        .map(|(acc, n)| match acc {
            Some(v) => format!("{n} {v:.3}"),
            None => format!("{n} fixed"),
        })
        .collect();
    println!("acceptance: {}", rates.join(", "));
    Ok(())
}

/// A point estimate from either a report with an MLE fit or a bare
/// parameter set.
fn read_point(text: &str, path: &Path) -> Result<(ModelParams, Option<MleFit>), Failure> {
    if let Ok(r) = report::read_report(text) {
        let fit = r
            .mle
            .ok_or_else(|| Failure::Model(Error::Series(format!("{}: report has no MLE fit", path.display()))))?;
        let params = fit.params.ok_or_else(|| {
            Failure::Model(Error::Degenerate(format!("{}: MLE fit has no valid parameter set", path.display())))
        })?;
        return Ok((params, Some(fit)));
    }
    let params: ModelParams = serde_json::from_str(text)
        .map_err(|e| Failure::Model(Error::Series(format!("{}: not a report or parameter set: {e}", path.display()))))?;
    Ok((params, None))
}

fn capital_cmd(a: CapitalArgs) -> CmdResult {
    if !(a.q > 0.0 && a.q < 1.0) {
        return Err(Failure::Usage(format!("--q must lie in (0, 1), got {}", a.q)));
    }
    if a.draws == 0 || a.stride == 0 {
        return Err(Failure::Usage("--draws and --stride must be positive".into()));
    }
    let text = read_text(&a.input)?;
    let (mut point, mut fit, posterior) = if text.trim_start().starts_with('{') {
        let (p, f) = read_point(&text, &a.input)?;
        (Some(p), f, None)
    } else {
        let table = DrawTable::read_csv(text.as_bytes())?;
        if table.is_empty() {
            return Err(Failure::Model(Error::Series(format!("{}: chain has no rows", a.input.display()))));
        }
        (None, None, Some(table.parameter_draws(a.stride)?))
    };
    if let Some(path) = &a.mle {
        let (p, f) = read_point(&read_text(path)?, path)?;
        point = Some(p);
        fit = f;
    }
    let settings = CapitalSettings {
        q: a.q,
        portfolios: a.portfolio_sizes.clone(),
        simulation: Simulation {
            n_draws: a.draws,
            seed: a.seed,
            s_mode: a.s_mode,
        },
    };
    let capital = capital_report(point.as_ref(), posterior.as_deref(), &settings)?;
    for e in &capital.predictive_quantile {
        if let Some(w) = &e.warning {
            eprintln!("warning: J={}: {w}", e.portfolio);
        }
    }
    print!("{}", report::capital_table(&capital));
    if let Some(out) = &a.output {
        let sizes: Vec<String> = a.portfolio_sizes.iter().map(|p| p.to_string()).collect();
        let mut r = Report::new(json!({
            "command": "capital",
            "input": a.input.display().to_string(),
            "mle_input": a.mle.as_ref().map(|p| p.display().to_string()),
            "q": a.q,
            "portfolio_sizes": sizes,
            "draws": a.draws,
            "s_mode": a.s_mode,
            "stride": a.stride,
            "seed": a.seed,
            "posterior_rows": posterior.as_ref().map(Vec::len),
        }));
        r.mle = fit;
        r.capital = Some(capital);
        write_json(out, &r)?;
    }
    Ok(())
}

fn synth_cmd(a: SynthArgs) -> CmdResult {
    let params = ModelParams::new(a.p, a.rho, a.mu, a.sigma, a.omega)?;
    let mut truth = generate_synthetic(&params, a.years, a.firms, a.seed)?;
    if a.first_year != 1 {
        let shifted = truth
            .series
            .iter()
            .map(|o| downturn::YearObservation {
                year: o.year - 1 + a.first_year,
                ..o.clone()
            })
            .collect();
        truth.series = ObservationSeries::new(shifted)?;
    }
    let mut csv = Vec::new();
    write_observations(&truth.series, &mut csv)?;
    match &a.output {
        Some(path) => write_bytes(path, &csv)?,
        None => print!("{}", String::from_utf8_lossy(&csv)),
    }
    if let Some(path) = &a.truth {
        let mut buf = serde_json::to_vec_pretty(&truth).map_err(Error::from)?;
        buf.push(b'\n');
        write_bytes(path, &buf)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: cannot configure {} threads: {e}", cli.threads);
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::FitMle(a) => fit_mle_cmd(a),
        Command::FitMcmc(a) => fit_mcmc_cmd(a),
        Command::Capital(a) => capital_cmd(a),
        Command::Synth(a) => synth_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
