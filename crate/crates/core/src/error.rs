use thiserror::Error;

use crate::quadrature::QuadratureError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),

    #[error("diffusion coefficient {sigma} at t = {t} is below the floor {floor}")]
    SigmaBelowFloor { t: f64, sigma: f64, floor: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("inversion failed: {0}")]
    Inversion(String),

    #[error("walk exceeded the step guard of {0} steps")]
    StepLimit(u64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::Io(_) => 4,
            _ => 3,
        }
    }
}
