use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },

    #[error(
        "pinv: regularized system is singular (pivot {pivot} at ridge {ridge}); use ridge > 0"
    )]
    RankDeficient { pivot: usize, ridge: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("classifier has not been fitted")]
    NotFitted,

    #[error("total conflict between accumulated evidence 0..={acc} and evidence {next}")]
    Conflict { acc: usize, next: usize },

    #[error("all evidence is vacuous (weight-induced unassigned mass is 1)")]
    DegenerateEvidence,

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("({mode}, {fault}) has {count} sample(s); stratified split needs at least 2")]
    Stratification {
        mode: String,
        fault: String,
        count: usize,
    },

    #[error("weight estimation: classes absent from validation set: {missing:?}")]
    WeightEstimation { missing: Vec<String> },

    #[error("no classifier trained for mode {0}")]
    Routing(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Toml(_) => ErrorKind::Config,
            Error::Parse { .. }
            | Error::Stratification { .. }
            | Error::WeightEstimation { .. }
            | Error::Routing(_)
            | Error::Io { .. }
            | Error::Json(_) => ErrorKind::Data,
            Error::Shape { .. }
            | Error::NonFinite { .. }
            | Error::RankDeficient { .. }
            | Error::Argument(_)
            | Error::NotFitted
            | Error::Conflict { .. }
            | Error::DegenerateEvidence => ErrorKind::Runtime,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
