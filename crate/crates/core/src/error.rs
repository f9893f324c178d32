use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("site {site} out of range 1..={sites}")]
    SiteOutOfRange { site: usize, sites: usize },
    #[error("full Hilbert space d^N = {dim} exceeds the guard {limit}")]
    SpaceTooLarge { dim: usize, limit: usize },
    #[error("spectral-parameter pole: {0}")]
    Pole(String),
    #[error("index range: {0}")]
    Range(String),
    #[error("singular operator on the working sector: {0}")]
    Singular(String),
    #[error("bethe: {0}")]
    Bethe(String),
    #[error("no convergence after {iterations} iterations (best residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("numerical differentiation: {0}")]
    Differentiation(String),
    #[error("integration: {0}")]
    Integration(String),
}

pub type Result<T> = std::result::Result<T, Error>;
