use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The group satisfies the MW+ condition (B_omega non-degenerate for
    /// some omega), so the degenerate-direction reduction does not apply
    /// and the transform operations refuse it.
    #[error("MW+ group out of scope for transform operations: {0}")]
    MwPlusGroup(String),

    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("group definition: {0}")]
    GroupFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn dim(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
