use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("arrival times decrease at index {0}")]
    Ordering(usize),

    #[error("metric {0} is undefined (zero denominator)")]
    UndefinedMetric(&'static str),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("degenerate descriptor: {0}")]
    Degenerate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("malformed input: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse error families, used by the command-line front end to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Param(_) | Error::Config(_) => ErrorClass::Config,
            Error::InsufficientData(_)
            | Error::Ordering(_)
            | Error::Degenerate(_)
            | Error::Protocol(_)
            | Error::Data(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorClass::Data,
            Error::UndefinedMetric(_) | Error::Numeric(_) | Error::Diverged { .. } => {
                ErrorClass::Numeric
            }
            Error::Io(_) => ErrorClass::Io,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }
}
