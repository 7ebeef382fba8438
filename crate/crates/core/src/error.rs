use thiserror::Error;

/// Errors raised across the crate.
///
/// The CLI maps `Usage`, `Config` and `Io` to exit code 2; everything else
/// that escapes an experiment is reported as a failure.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inputs are individually valid but incompatible with each other.
    #[error("usage error: {0}")]
    Usage(String),
    /// A model or copula parameter violates its constraints.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// The regression design matrix is (numerically) singular.
    #[error("singular design (condition number {condition:.3e})")]
    SingularDesign { condition: f64 },
    /// An iterative fit did not converge.
    #[error("fit failed: {0}")]
    FitFailed(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
