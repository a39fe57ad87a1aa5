use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("environment error: {0}")]
    Environment(String),

    #[error("unparseable verdict in message: {raw:?}")]
    UnparseableVerdict { raw: String },

    #[error("malformed transcript: {0}")]
    MalformedTranscript(String),

    #[error("interaction {interaction_id} failed: {reason}")]
    InteractionFailed {
        interaction_id: String,
        reason: String,
    },

    #[error("backend unavailable after {attempts} attempt(s): {last_error}")]
    BackendUnavailable { attempts: u32, last_error: String },

    #[error("request rejected with HTTP {status}: {body}")]
    PermanentRequest { status: u16, body: String },

    #[error("proportions undefined for an empty tally")]
    UndefinedProportion,

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid transcript {interaction_id}: {message}")]
    Validation {
        interaction_id: String,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that come from the environment or a backend rather
    /// than from bad user input.
    pub fn is_environmental(&self) -> bool {
        matches!(
            self,
            Error::Environment(_)
                | Error::BackendUnavailable { .. }
                | Error::PermanentRequest { .. }
                | Error::Io { .. }
        )
    }
}
