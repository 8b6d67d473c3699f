use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("DC target {target} W is not reachable below the saturation power {saturation} W")]
    InfeasibleTarget { target: f64, saturation: f64 },

    #[error("conic solver failed: {0}")]
    Solver(String),

    #[error("solver failed at bisection trial e = {trial_e:e} J: {reason}")]
    BisectionFailure { trial_e: f64, reason: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}
