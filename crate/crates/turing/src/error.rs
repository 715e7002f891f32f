use std::path::PathBuf;

pub type Result<T, E = TuringError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum TuringError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("session `{0}` is closed")]
    ClosedSession(String),
    #[error("score {0} is outside 1..=6")]
    OutOfRangeScore(i64),
    #[error("case pool has {available} scans, sessions need {needed}")]
    InsufficientPool { needed: usize, available: usize },
    #[error("no completed session to analyse")]
    NoCompletedSessions,
    #[error("session `{0}` already exists")]
    DuplicateSession(String),
    #[error("invalid case pool: {0}")]
    InvalidPool(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unauthorized")]
    Unauthorized,
    #[error("journal is corrupt at line {line}: {message}")]
    CorruptJournal { line: usize, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Analysis(#[from] lesionbench::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl TuringError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TuringError::Io {
            path: path.into(),
            source,
        }
    }
}
