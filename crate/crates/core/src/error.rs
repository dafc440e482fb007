use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Domain(String),
    #[error("outside the validity regime: {0}")]
    Regime(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("first-order rate formula has a pole at delta2 = {delta2}")]
    Pole { delta2: f64 },
    #[error("no sign change of the {quantity} coefficient for delta2 in [0, {upper}]")]
    RootNotFound { quantity: String, upper: f64 },
    #[error("integration failure: {0}")]
    Integration(String),
    #[error("trajectory step error: {0}")]
    Step(String),
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
