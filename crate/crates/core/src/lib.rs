//! One-factor default/recovery credit risk model with dependent recoveries.
//!
//! The crate estimates the model from annual default counts and average
//! recoveries, either by closed-form maximum likelihood ([`mle`]) or by
//! component-wise Metropolis–Hastings ([`mcmc`]), and turns parameters or
//! posterior draws into economic capital ([`capital`]).

pub mod capital;
pub mod data;
pub mod error;
pub mod likelihood;
pub mod mcmc;
pub mod mle;
pub mod model;
pub mod normal;
pub mod quadrature;
pub mod report;
pub mod stats;

pub use error::{Error, Result};
pub use likelihood::{CountMode, LatentPath, ObservationSeries, YearObservation};
pub use model::{ModelParams, PortfolioSpec, SMode, StressedDecomposition};
