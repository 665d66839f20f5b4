use thiserror::Error;

use crate::controller::SweepTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value for {0}")]
    NonFinite(&'static str),

    #[error("cascade needs at least one operator")]
    EmptyCascade,

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The closed-form bandwidth expression was evaluated outside its domain.
    #[error("bandwidth formula out of domain: {0}")]
    OutOfDomain(String),

    #[error("degenerate impedances: input and load impedance are equal")]
    DegenerateImpedance,

    #[error("scenario has a surface but no bias setting was given")]
    MissingBias,

    #[error("operation requires a scenario with a surface")]
    NoSurface,

    /// A measurement probe failed mid-sweep. The entries recorded before the
    /// failure are kept in `partial`.
    #[error("probe failed after {} measurements: {message}", partial.entries.len())]
    Probe {
        message: String,
        partial: Box<SweepTrace>,
    },

    #[error("ambiguous sweep: {0}")]
    Ambiguous(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input rather than failures at run time.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InvalidParameter { .. }
                | Error::NonFinite(_)
                | Error::MissingBias
                | Error::NoSurface
        )
    }
}

pub(crate) fn ensure_finite(value: f64, name: &'static str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(name))
    }
}
