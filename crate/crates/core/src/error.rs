use thiserror::Error;

/// Failure modes shared by every module of the lab.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular argument: {0}")]
    SingularArgument(String),

    #[error("accuracy failure: {0}")]
    AccuracyFailure(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("continuation stalled after p = {last_good_p}: {reason}")]
    ContinuationStalled { last_good_p: f64, reason: String },

    #[error("trivial solution: {0}")]
    TrivialSolution(String),

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
