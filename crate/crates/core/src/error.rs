use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure category, used by front ends to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    InvalidParameter,
    InvalidData,
    Format,
    Transport,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("alignment error in trial {trial} at token {token}: {reason}")]
    Alignment {
        trial: i64,
        token: usize,
        reason: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("missing Gen I record for mu={mu}, replicate={replicate}")]
    Linkage { mu: i64, replicate: u32 },

    #[error("missing stage {stage} for mu={mu}")]
    MissingStage { mu: i64, stage: &'static str },

    #[error("transport error ({context}): {message}")]
    Transport { context: String, message: String },

    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_) => ErrorKind::InvalidParameter,
            Error::InvalidData(_)
            | Error::DegenerateData(_)
            | Error::Alignment { .. }
            | Error::Parse(_)
            | Error::Linkage { .. }
            | Error::MissingStage { .. } => ErrorKind::InvalidData,
            Error::Format(_) | Error::Record { .. } | Error::Csv(_) | Error::Json(_) => ErrorKind::Format,
            Error::Transport { .. } => ErrorKind::Transport,
            Error::Io(_) => ErrorKind::Io,
        }
    }
}

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be finite, got {value}"
        )))
    }
}
