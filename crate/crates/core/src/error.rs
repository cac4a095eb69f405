use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A cell that could influence the estimate is not certified by the
    /// simulated region; the carrier must be enlarged.
    #[error("guard too small: cell of generator at ({x}, {y}) is not certified by the carrier")]
    GuardTooSmall { x: f64, y: f64 },

    #[error("not stabilized: {0}")]
    NotStabilized(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
