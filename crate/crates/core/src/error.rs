use thiserror::Error;

use crate::expr::ParseError;

/// Errors raised while evaluating fields or geometric constructions at a point.
///
/// Pointwise failures (`Domain`, `Degenerate`, `Singular`, `Rank`) make a
/// verification skip the offending sample point; the rest indicate malformed
/// input.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeomError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate metric: {0}")]
    Degenerate(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("rank condition violated: {0}")]
    Rank(String),
    #[error("jet order {needed} required, only {have} available")]
    OrderTooLow { needed: usize, have: usize },
    #[error("jet order {0} exceeds the supported maximum")]
    OrderTooHigh(usize),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invalid input: {0}")]
    Invalid(String),
}

impl GeomError {
    /// Whether the error is a property of the sample point rather than of the
    /// input as a whole.
    pub fn is_pointwise(&self) -> bool {
        matches!(
            self,
            GeomError::Domain(_) | GeomError::Degenerate(_) | GeomError::Singular(_) | GeomError::Rank(_)
        )
    }
}
