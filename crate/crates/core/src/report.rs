//! JSON reports and plain-text tables.
//!
//! The JSON document has the top-level keys `schema_version`, `config`,
//! `mle`, `posterior_summary` and `capital`; absent sections are `null`.
//! Field order follows the struct definitions and never varies between runs.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::capital::CapitalReport;
use crate::error::Result;
use crate::mcmc::PosteriorSummary;
use crate::mle::MleFit;
use crate::stats::ColumnSummary;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    /// Echo of the settings that produced the report.
    pub config: serde_json::Value,
    pub mle: Option<MleFit>,
    pub posterior_summary: Option<PosteriorSummary>,
    pub capital: Option<CapitalReport>,
}

impl Report {
    pub fn new(config: serde_json::Value) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config,
            mle: None,
            posterior_summary: None,
            capital: None,
        }
    }
}

/// Writes `report` as pretty-printed JSON followed by a newline.
pub fn write_report<W: Write>(report: &Report, mut sink: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut sink, report)?;
    writeln!(sink)?;
    sink.flush()?;
    Ok(())
}

pub fn read_report(text: &str) -> Result<Report> {
    Ok(serde_json::from_str(text)?)
}

/// Display order of the parameter rows.
const PARAM_ROWS: [(&str, &str); 5] = [("p", "p"), ("rho", "rho"), ("mu", "mu"), ("omega", "omega"), ("sigma", "sigma")];

fn cell(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{v:>10.4}"),
        Some(v) => format!("{v:>10}"),
        None => format!("{:>10}", "-"),
    }
}

/// One-row table of the point estimates.
pub fn mle_table(fit: &MleFit) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<8}", "item");
    for (label, _) in PARAM_ROWS {
        let _ = write!(out, "{label:>10}");
    }
    out.push('\n');
    let rec = fit.recovery.as_ref();
    let values = [
        Some(fit.default.p),
        Some(fit.default.rho),
        rec.map(|r| r.mu),
        rec.map(|r| r.omega),
        rec.map(|r| r.sigma),
    ];
    let _ = write!(out, "{:<8}", "MLE");
    for v in values {
        out.push_str(&cell(v));
    }
    out.push('\n');
    out
}

/// Posterior block: one row per parameter with Mode, Mean, Stdev, Skewness,
/// Kurtosis and CV. `point` adds an MLE column when given.
pub fn posterior_table(summary: &PosteriorSummary, point: Option<&MleFit>) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<8}", "item");
    if point.is_some() {
        let _ = write!(out, "{:>10}", "MLE");
    }
    for h in ["Mode", "Mean", "Stdev", "Skewness", "Kurtosis", "CV"] {
        let _ = write!(out, "{h:>10}");
    }
    out.push('\n');
    for (label, column) in PARAM_ROWS {
        let _ = write!(out, "{label:<8}");
        if let Some(fit) = point {
            let rec = fit.recovery.as_ref();
            let v = match column {
                "p" => Some(fit.default.p),
                "rho" => Some(fit.default.rho),
                "mu" => rec.map(|r| r.mu),
                "omega" => rec.map(|r| r.omega),
                _ => rec.map(|r| r.sigma),
            };
            out.push_str(&cell(v));
        }
        match summary.get(column) {
            Some(s) => {
                for v in [Some(s.mode), Some(s.mean), Some(s.stdev), s.skewness, s.kurtosis, s.cv] {
                    out.push_str(&cell(v));
                }
            }
            None => (0..6).for_each(|_| out.push_str(&cell(None))),
        }
        out.push('\n');
    }
    out
}

fn summary_cells(s: Option<&ColumnSummary>) -> String {
    match s {
        Some(s) => [Some(s.mean), Some(s.stdev), Some(s.q25), Some(s.q50), Some(s.q75), s.cv]
            .into_iter()
            .map(cell)
            .collect(),
        None => (0..6).map(|_| cell(None)).collect(),
    }
}

/// Stressed PD, LGD and EC block (item, MLE, Mean, Stdev, 0.25Q, 0.5Q,
/// 0.75Q, CV), followed by the predictive quantile per portfolio size and
/// the uncertainty loading.
pub fn capital_table(report: &CapitalReport) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<8}", "item");
    for h in ["MLE", "Mean", "Stdev", "0.25Q", "0.5Q", "0.75Q", "CV"] {
        let _ = write!(out, "{h:>10}");
    }
    out.push('\n');
    let post = report.posterior_q_summary.as_ref();
    let mle = report.mle_ec.as_ref();
    let rows = [
        ("PD", mle.map(|d| d.stressed_pd), post.map(|p| &p.pd)),
        ("LGD", mle.map(|d| d.stressed_lgd), post.map(|p| &p.lgd)),
        ("EC", mle.map(|d| d.ec), post.map(|p| &p.ec)),
    ];
    for (label, point, summary) in rows {
        let _ = writeln!(out, "{label:<8}{}{}", cell(point), summary_cells(summary));
    }
    if !report.predictive_quantile.is_empty() {
        out.push('\n');
        let _ = writeln!(out, "{:<8}{:>10}{:>10}", "J", "Q^P", "draws");
        for e in &report.predictive_quantile {
            let _ = writeln!(out, "{:<8}{}{:>10}", e.portfolio, cell(Some(e.quantile)), e.n_draws);
        }
    }
    if let Some(loading) = report.uncertainty_loading {
        let _ = writeln!(out, "\nuncertainty loading (J=inf): {loading:.4}");
    }
    out
}
