use thiserror::Error;

/// Crate-wide error type. Budget and config errors map to dedicated CLI exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("ill-conditioned input: {0}")]
    Conditioning(String),
    #[error("outside certified range: {0}")]
    Range(String),
    #[error("not quasimultiplicative on this range at this base: {0}")]
    NotQuasiMultiplicative(String),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
