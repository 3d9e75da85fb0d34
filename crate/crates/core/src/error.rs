use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("column {0} has (numerically) zero norm")]
    ZeroColumn(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry at position {0}")]
    NonFinite(usize),

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),

    #[error("slack variable left the solve at {0:e}; the big-M cost did not drive it out")]
    SlackStuck(f64),

    #[error("matching pursuit stalled at iteration {0}")]
    NoProgress(usize),

    #[error("moment needs more than two degrees of freedom, got T = {0}")]
    DegreesOfFreedom(usize),

    #[error("reconstruction violates its own measurements (max residual {0:e})")]
    InfeasibleReconstruction(f64),

    #[error("root search did not converge")]
    ConvergenceFailure,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
