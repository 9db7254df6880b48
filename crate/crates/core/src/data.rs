//! Reading and writing annual observation files, and simulating series from
//! the model.
//!
//! Files are UTF-8 CSV with the header `year,firms,defaults,avg_recovery`;
//! `avg_recovery` is empty for years without defaults and lines starting
//! with `#` are comments.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::likelihood::{LatentPath, ObservationSeries, YearObservation};
use crate::model::{conditional_default_prob, ModelParams};

pub const HEADER: [&str; 4] = ["year", "firms", "defaults", "avg_recovery"];

fn parse_field<T: std::str::FromStr>(value: &str, name: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::data(line, format!("invalid {name} '{value}'")))
}

/// Parses and validates an observation file. Rows may appear in any year
/// order; duplicates are rejected.
pub fn load_observations<R: Read>(mut source: R) -> Result<ObservationSeries> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    // the csv crate does not count skipped blank or comment lines, so
    // derive line numbers from byte offsets
    let line_at = |pos: Option<&csv::Position>| {
        pos.map_or(0, |p| {
            let mut end = (p.byte() as usize).min(bytes.len());
            // skip blank and comment lines the record position includes
            while end < bytes.len() {
                match bytes[end] {
                    b'\n' | b'\r' => end += 1,
                    b'#' => end += bytes[end..].iter().position(|&b| b == b'\n').map_or(bytes.len() - end, |i| i + 1),
                    _ => break,
                }
            }
            1 + bytes[..end].iter().filter(|&&b| b == b'\n').count()
        })
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let header = reader.headers().map_err(|e| Error::data(1, e.to_string()))?.clone();
    let header_line = line_at(header.position()).max(1);
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::data(
            header_line,
            format!("expected header '{}'", HEADER.join(",")),
        ));
    }
    let mut rows: Vec<(usize, YearObservation)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = line_at(e.position());
            Error::data(line, format!("malformed row: {e}"))
        })?;
        let line = line_at(record.position());
        let year: i32 = parse_field(&record[0], "year", line)?;
        let firms: u64 = parse_field(&record[1], "firms", line)?;
        let defaults: u64 = parse_field(&record[2], "defaults", line)?;
        let avg_recovery = match &record[3] {
            "" => None,
            v => Some(parse_field::<f64>(v, "avg_recovery", line)?),
        };
        if firms == 0 {
            return Err(Error::data(line, "firms must be positive"));
        }
        if defaults > firms {
            return Err(Error::data(line, format!("defaults {defaults} exceed firms {firms}")));
        }
        match avg_recovery {
            None if defaults > 0 => {
                return Err(Error::data(line, "avg_recovery missing for a year with defaults"))
            }
            Some(_) if defaults == 0 => {
                return Err(Error::data(line, "avg_recovery given for a year without defaults"))
            }
            Some(r) if !r.is_finite() => return Err(Error::data(line, "avg_recovery is not finite")),
            _ => {}
        }
        if let Some((first, _)) = rows.iter().find(|(_, o)| o.year == year) {
            return Err(Error::data(line, format!("duplicate year {year} (first on line {first})")));
        }
        rows.push((
            line,
            YearObservation {
                year,
                firms,
                defaults,
                avg_recovery,
            },
        ));
    }
    rows.sort_by_key(|(_, o)| o.year);
    ObservationSeries::new(rows.into_iter().map(|(_, o)| o).collect())
}

/// Writes a series in the format read by [`load_observations`].
pub fn write_observations<W: Write>(series: &ObservationSeries, mut sink: W) -> Result<()> {
    writeln!(sink, "{}", HEADER.join(","))?;
    for o in series.iter() {
        let r = o.avg_recovery.map(|r| r.to_string()).unwrap_or_default();
        writeln!(sink, "{},{},{},{}", o.year, o.firms, o.defaults, r)?;
    }
    sink.flush()?;
    Ok(())
}

/// A simulated series together with the parameters and factor path that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticTruth {
    pub params: ModelParams,
    pub path: LatentPath,
    pub series: ObservationSeries,
    pub seed: u64,
}

/// Simulates `years` annual observations of a portfolio of `firms` firms.
///
/// Each year draws the factor `x_t ~ N(0, 1)`, the default count from
/// `Binomial(firms, Lambda(x_t))` and, when there are defaults, the average
/// recovery directly from its normal law
/// `N(mu + sigma sqrt(omega) x_t, sigma^2 (1 - omega) / d_t)`.
pub fn generate_synthetic(params: &ModelParams, years: usize, firms: u64, seed: u64) -> Result<SyntheticTruth> {
    if years == 0 || firms == 0 {
        return Err(Error::Domain("synthetic series needs at least one year and one firm".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut path = Vec::with_capacity(years);
    let mut obs = Vec::with_capacity(years);
    for t in 0..years {
        let x: f64 = rng.sample(StandardNormal);
        let lambda = conditional_default_prob(params, x);
        let defaults = Binomial::new(firms, lambda)
            .map_err(|e| Error::Domain(format!("binomial draw failed: {e}")))?
            .sample(&mut rng);
        let avg_recovery = (defaults > 0).then(|| {
            let sd = params.sigma2() / (defaults as f64).sqrt();
            let z: f64 = rng.sample(StandardNormal);
            params.mu() + params.sigma1() * x + sd * z
        });
        path.push(x);
        obs.push(YearObservation {
            year: t as i32 + 1,
            firms,
            defaults,
            avg_recovery,
        });
    }
    Ok(SyntheticTruth {
        params: *params,
        path: LatentPath::new(path)?,
        series: ObservationSeries::new(obs)?,
        seed,
    })
}
