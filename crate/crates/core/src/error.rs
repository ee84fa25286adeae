use thiserror::Error;

/// Errors raised by the exact and Monte Carlo layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("invalid box: length {length} (constraint order {m}, ring size {ring})")]
    InvalidBox { length: usize, m: usize, ring: usize },
    #[error("enumeration limit exceeded: {what} needs {needed} sites, cap is {cap}")]
    EnumerationLimit { what: &'static str, needed: usize, cap: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("density {rho} is not m/(m+1) for m = {m}")]
    WrongDensity { rho: String, m: usize },
    #[error("box contains no mobile cluster")]
    NoCluster,
    #[error("move {index} across bond {bond} is not allowed")]
    IllegalMove { index: usize, bond: i64 },
    #[error("configuration is blocked at time {time}")]
    Blocked { time: f64 },
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("unknown term: {0}")]
    UnknownTerm(String),
}

pub type Result<T> = std::result::Result<T, Error>;
