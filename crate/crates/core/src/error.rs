use thiserror::Error;

/// Errors raised by the search toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    /// An argument lies outside the domain of the computation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The sampling budget cannot fund the requested schedule.
    #[error("infeasible schedule: {0}")]
    Infeasible(String),
    /// The requested computation is not defined for this test family.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// A broken internal invariant (a bug, not a user error).
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, SearchError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(SearchError::Domain(msg.into()))
}
