use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::data::DataError;
use crate::eval::EvalError;
use crate::fusion::FusionError;
use crate::modality::ModalityError;
use crate::models::ModelError;
use crate::stats::StatsError;

/// Coarse failure class, mapped onto CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
    Internal,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Data => "data",
            ErrorCategory::Numeric => "numeric",
            ErrorCategory::Internal => "internal",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Numeric => 4,
            ErrorCategory::Internal => 5,
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Pipeline stage attached to errors raised inside an experiment run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Windowing,
    Weights,
    Training,
    Prediction,
    Fusion,
    Scoring,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Windowing => "windowing",
            Stage::Weights => "weights",
            Stage::Training => "training",
            Stage::Prediction => "prediction",
            Stage::Fusion => "fusion",
            Stage::Scoring => "scoring",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Modality(#[from] ModalityError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{stage} stage: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn at(stage: Stage, err: impl Into<Error>) -> Error {
        Error::Stage {
            stage,
            source: Box::new(err.into()),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Data(DataError::InvalidConfig(_)) => ErrorCategory::Config,
            Error::Data(_) | Error::Stats(_) | Error::Io { .. } => ErrorCategory::Data,
            Error::Modality(ModalityError::UnknownModality(_)) => ErrorCategory::Internal,
            Error::Modality(_) => ErrorCategory::Config,
            Error::Model(e) => e.category(),
            Error::Fusion(_) => ErrorCategory::Internal,
            Error::Eval(e) => e.category(),
            Error::Stage { source, .. } => source.category(),
            Error::Config(_) => ErrorCategory::Config,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
