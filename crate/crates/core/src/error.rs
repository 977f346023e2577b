use thiserror::Error;

use crate::detector::CalibrationLog;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or input violated a precondition.
    #[error("invalid parameter: {0}")]
    Param(String),
    /// A measurement could not be taken from the supplied trace.
    #[error("measurement failed: {0}")]
    Measurement(String),
    /// Threshold calibration never produced a valid decode.
    #[error("threshold calibration failed after {} probe steps", .log.rows.len())]
    Calibration { log: CalibrationLog },
    /// Malformed serialized input.
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Param(msg.into()))
}
