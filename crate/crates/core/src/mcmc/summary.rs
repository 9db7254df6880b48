use serde::{Deserialize, Serialize};

use super::ChainOutput;
use crate::stats::ColumnSummary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSummary {
    pub name: String,
    pub summary: Option<ColumnSummary>,
}

/// Per-column posterior statistics in chain column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub draws: usize,
    pub columns: Vec<NamedSummary>,
}

impl PosteriorSummary {
    pub fn get(&self, name: &str) -> Option<&ColumnSummary> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .and_then(|c| c.summary.as_ref())
    }
}

/// Mean, mode, spread, shape and quartiles of every chain column.
pub fn posterior_summary(chain: &ChainOutput) -> PosteriorSummary {
    let table = &chain.table;
    PosteriorSummary {
        draws: table.rows(),
        columns: table
            .columns()
            .iter()
            .enumerate()
            .map(|(k, name)| NamedSummary {
                name: name.clone(),
                summary: ColumnSummary::from_values(&table.column(k)),
            })
            .collect(),
    }
}
