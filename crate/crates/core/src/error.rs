use std::path::PathBuf;

use crate::nifti::NiftiError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Nifti(#[from] NiftiError),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("vote stack is empty")]
    EmptyStack,

    #[error("metric matrix is incomplete: team `{team}` has no value for case `{case}`")]
    IncompleteMatrix { team: String, case: String },

    #[error("ranking needs at least two teams, got {0}")]
    FewerThanTwoTeams(usize),

    #[error("ranking needs at least one case")]
    NoCases,

    #[error("empty input")]
    EmptyInput,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("input is constant; correlation is undefined")]
    ConstantInput,

    #[error("p-value {0} is outside [0, 1]")]
    OutOfRangeP(f64),

    #[error("atlas label {0} is not in the territory legend")]
    UnknownAtlasLabel(i64),

    #[error("unknown vascular territory name `{0}`")]
    UnknownTerritory(String),

    #[error("no lesion load inside any territory; assignment is undefined")]
    NoLesionLoad,

    #[error("label `{0}` is not one of the declared classes")]
    UnknownClass(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("manifest {path}: row {row}, column `{column}`: {message}")]
    Manifest {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("duplicate case_id `{0}` in manifest")]
    DuplicateCase(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
