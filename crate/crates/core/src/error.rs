use thiserror::Error;

/// Errors raised by samplers, recurrences and the statistics harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("moment of order {k} diverges for shape {theta}")]
    MomentDivergence { theta: f64, k: u32 },
    #[error("point ({n}, {m}) is outside the octant or the grid")]
    OutOfRange { n: usize, m: usize },
    #[error("invalid path: {0}")]
    Path(String),
    #[error("enumeration too large: {0}")]
    TooLarge(String),
    #[error("window does not cover {0}")]
    Window(String),
    #[error("parity or grid violation: {0}")]
    Grid(String),
    #[error("sample error: {0}")]
    Sample(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
