use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("metric K is singular or ill-conditioned on the sample grid (condition number {0:.3e})")]
    SingularMetric(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("deformation too large: {0}")]
    TooLarge(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("divergent fixed-point iteration at |t| = {0:.3e}")]
    Divergent(f64),
    #[error("matching residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    Mismatch { residual: f64, tolerance: f64 },
    #[error("cache: {0}")]
    Cache(String),
}

pub type Result<T> = std::result::Result<T, Error>;
