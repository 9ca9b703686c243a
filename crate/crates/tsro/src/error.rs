//! Error taxonomy for the solver library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Instance failed structural validation; each entry names one defect.
    #[error("invalid instance: {}", .0.join("; "))]
    InvalidInstance(Vec<String>),

    /// The deterministic equivalent itself has no feasible first stage.
    #[error("problem infeasible: {0}")]
    ProblemInfeasible(String),

    /// A subproblem that must be solvable came back infeasible/unbounded.
    #[error("internal solver error: {0}")]
    Internal(String),

    /// Big-M derivation needs finite first-stage bounds.
    #[error("cannot derive big-M: {0}")]
    BigMUnavailable(String),

    /// Brute-force enumeration would exceed the candidate cap.
    #[error("instance too large for reference oracle: {0}")]
    TooLargeForReference(String),

    /// Wall-clock or iteration budget exhausted inside a subproblem.
    #[error("resource limit hit: {0}")]
    LimitReached(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
