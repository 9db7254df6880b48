use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{PriorSpec, SamplerConfig, N_PARAMS, PARAM_NAMES};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::normal;

/// Retained chain rows with named columns
/// `p_threshold, rho, mu, sigma, omega, x_1..x_T, p`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawTable {
    columns: Vec<String>,
    values: Vec<f64>,
}

/// Everything about a run except the draws themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMetadata {
    pub seed: u64,
    pub config: SamplerConfig,
    pub prior: PriorSpec,
    /// Acceptance over retained sweeps, in state order; `null` for fixed
    /// components.
    pub acceptance: Vec<Option<f64>>,
    /// Frozen proposal scales, in state order.
    pub scales: Vec<f64>,
    /// Acceptance and frozen step scale of the joint translation and
    /// rescaling moves; empty when they are off.
    #[serde(default)]
    pub joint_acceptance: Vec<f64>,
    #[serde(default)]
    pub joint_scales: Vec<f64>,
    pub warnings: Vec<String>,
}

impl DrawTable {
    /// Builds the table from row-major sampler states, appending the derived
    /// `p = Phi(p_threshold)` column.
    pub fn from_states(states: &[f64], dim: usize) -> Result<Self> {
        if dim < N_PARAMS || states.len() % dim != 0 {
            return Err(Error::Domain("sampler states do not match the model layout".into()));
        }
        let mut columns: Vec<String> = PARAM_NAMES.iter().map(|s| s.to_string()).collect();
        columns.extend((1..=dim - N_PARAMS).map(|t| format!("x_{t}")));
        columns.push("p".into());
        let mut values = Vec::with_capacity(states.len() / dim * (dim + 1));
        for row in states.chunks(dim) {
            values.extend_from_slice(row);
            values.push(normal::cdf(row[0]));
        }
        Ok(Self { columns, values })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn rows(&self) -> usize {
        self.values.len() / self.width()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, index: usize) -> Vec<f64> {
        self.values.iter().skip(index).step_by(self.width()).copied().collect()
    }

    /// Number of latent factor columns.
    pub fn years(&self) -> usize {
        self.width() - N_PARAMS - 1
    }

    /// Parameter sets of every `stride`-th row.
    pub fn parameter_draws(&self, stride: usize) -> Result<Vec<ModelParams>> {
        let stride = stride.max(1);
        (0..self.rows())
            .step_by(stride)
            .map(|i| {
                let r = self.row(i);
                ModelParams::from_threshold(r[0], r[1], r[2], r[3], r[4])
            })
            .collect()
    }

    /// Writes a header row of column names and one comma-separated row per
    /// draw, using shortest round-trip float formatting.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.columns.join(","))?;
        let mut line = String::new();
        for i in 0..self.rows() {
            line.clear();
            for (k, v) in self.row(i).iter().enumerate() {
                if k > 0 {
                    line.push(',');
                }
                line.push_str(&v.to_string());
            }
            writeln!(out, "{line}")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a table written by [`write_csv`](Self::write_csv).
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::data(1, "chain file is empty"))??;
        let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let valid = columns.len() >= N_PARAMS + 1
            && columns[..N_PARAMS].iter().zip(PARAM_NAMES).all(|(a, b)| a == b)
            && columns.last().is_some_and(|c| c == "p");
        if !valid {
            return Err(Error::data(1, "chain header does not match the model layout"));
        }
        let mut values = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let before = values.len();
            for field in line.split(',') {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::data(i + 2, format!("invalid number '{field}'")))?;
                values.push(v);
            }
            if values.len() - before != columns.len() {
                return Err(Error::data(i + 2, "row width differs from header"));
            }
        }
        Ok(Self { columns, values })
    }
}
