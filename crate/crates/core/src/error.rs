use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("variance {variance} exceeds mean*(1-mean) bound for mean {mean}")]
    VarianceOutOfBounds { mean: f64, variance: f64 },

    #[error("the improper Beta(0, 0) prior has no moments")]
    ImproperPrior,

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("{detections} detections out of {trials} trials")]
    DetectionsExceedTrials { detections: u64, trials: u64 },

    #[error("hotspot {hotspot} has {available} checklists, at least {required} are required")]
    InsufficientChecklists {
        hotspot: String,
        available: usize,
        required: usize,
    },

    #[error("missing file {}", path.display())]
    MissingFile { path: PathBuf },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Malformed {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{}:{line}: unknown species id `{id}`", path.display())]
    UnknownSpecies {
        path: PathBuf,
        line: u64,
        id: String,
    },

    #[error("{}:{line}: unknown hotspot id `{id}`", path.display())]
    UnknownHotspot {
        path: PathBuf,
        line: u64,
        id: String,
    },

    #[error("{}:{line}: unknown checklist id `{id}`", path.display())]
    UnknownChecklist {
        path: PathBuf,
        line: u64,
        id: String,
    },

    #[error("duplicate checklist id `{id}`")]
    DuplicateChecklist { id: String },

    #[error("duplicate {kind} id `{id}`")]
    Duplicate { kind: &'static str, id: String },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    TrainingDiverged { epoch: usize },

    #[error("hotspot {hotspot}: {source}")]
    Hotspot {
        hotspot: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }

    pub fn at_hotspot(self, hotspot: &str) -> Self {
        Error::Hotspot {
            hotspot: hotspot.to_string(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by reading or parsing input files.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::MissingFile { .. }
            | Error::Malformed { .. }
            | Error::UnknownSpecies { .. }
            | Error::UnknownHotspot { .. }
            | Error::UnknownChecklist { .. }
            | Error::DuplicateChecklist { .. }
            | Error::Duplicate { .. } => true,
            Error::Hotspot { source, .. } => source.is_data_error(),
            _ => false,
        }
    }

    pub fn is_io_error(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Hotspot { source, .. } => source.is_io_error(),
            _ => false,
        }
    }
}
