use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model parameter violates its support bounds.
    #[error("invalid parameter {name} = {value}: must lie in {bounds}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        bounds: &'static str,
    },

    /// The inputs are valid but the requested quantity is not identifiable
    /// or the computation hits a singular configuration.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Observation data failed validation.
    #[error("line {line}: {message}")]
    Data { line: usize, message: String },

    /// Observation data failed a whole-series check.
    #[error("invalid data: {0}")]
    Series(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn data(line: usize, message: impl Into<String>) -> Self {
        Error::Data {
            line,
            message: message.into(),
        }
    }
}
