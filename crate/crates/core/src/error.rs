use thiserror::Error;

use crate::ascent::AscentTrace;

#[derive(Debug, Error)]
pub enum SpmError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The rank rule selected zero singular values.
    #[error("no singular value exceeds the rank threshold {threshold:e}")]
    EmptySubspace { threshold: f64 },

    /// The perturbation bound needs `delta < sigma_k`.
    #[error("perturbation {delta:e} is not below sigma_K = {sigma_k:e}")]
    BoundUndefined { delta: f64, sigma_k: f64 },

    #[error("degenerate ascent step: the update has zero norm")]
    DegenerateStep,

    #[error(
        "no component reached objective {tau} after {restarts} restarts (best objective {})",
        best.final_objective
    )]
    NoComponentFound {
        tau: f64,
        restarts: usize,
        best: Box<AscentTrace>,
    },

    #[error("weight denominator {0:e} is too close to zero")]
    WeightUndefined(f64),

    #[error("grammian is numerically singular (smallest eigenvalue {0:e})")]
    RankDeficient(f64),

    #[error("malformed {kind} data: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SpmError>;

pub(crate) fn invalid(msg: impl Into<String>) -> SpmError {
    SpmError::InvalidArgument(msg.into())
}
