use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("duplicate annotation for record `{record}` by annotator `{annotator}` (line {line})")]
    DuplicatePair {
        record: String,
        annotator: String,
        line: u64,
    },

    #[error("record `{0}` has no observed annotations")]
    EmptyRecord(String),

    #[error("annotator `{0}` has no observed annotations")]
    EmptyAnnotator(String),

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("feature table is missing record `{0}`")]
    MissingRecord(String),

    #[error("feature table has record `{0}` not present in the annotations")]
    ExtraRecord(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("design matrix is rank deficient; dependent columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("GEVD fit failed: {0}")]
    FitFailed(String),

    #[error("no record has both an estimate and a reference value")]
    EmptyOverlap,

    #[error("a reference label set is required for {0}")]
    NoReference(String),

    #[error("annotator sweep: {0}")]
    SweepExhausted(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::DegenerateSample(_)
            | Error::FitFailed(_)
            | Error::RankDeficient { .. }
            | Error::Numerical(_) => ErrorKind::Numerical,
            _ => ErrorKind::Input,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
