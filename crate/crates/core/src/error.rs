//! Crate-level error and the exit-code classification used by the CLI.

use std::fmt;
use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::convenc::{EncoderError, WeightError};
use crate::corpus::CorpusError;
use crate::formant::FormantError;
use crate::miest::MiError;
use crate::signal::{AudioError, SignalError};
use crate::svmkit::SvmError;

/// Broad failure class; maps one-to-one onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Convergence,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Convergence => 4,
        }
    }
}

/// Pipeline stage, used to tag errors surfacing from `run_experiment`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Corpus,
    Features,
    Grid,
    Eval,
    Mi,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Corpus => "corpus",
            Stage::Features => "features",
            Stage::Grid => "grid",
            Stage::Eval => "eval",
            Stage::Mi => "mi",
            Stage::Report => "report",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Formant(#[from] FormantError),
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Mi(#[from] MiError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {msg}", path.display())]
    Malformed { path: PathBuf, msg: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("[{stage}] {source}")]
    Stage { stage: Stage, source: Box<Error> },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn malformed(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Corpus(e) => e.kind(),
            Error::Audio(_) => ErrorKind::Data,
            Error::Signal(_) => ErrorKind::Config,
            Error::Formant(_) => ErrorKind::Data,
            Error::Weights(_) => ErrorKind::Data,
            Error::Encoder(_) => ErrorKind::Data,
            Error::Svm(e) => e.kind(),
            Error::Mi(e) => e.kind(),
            Error::Config(_) => ErrorKind::Config,
            Error::Malformed { .. } | Error::Io { .. } => ErrorKind::Data,
            Error::Stage { source, .. } => source.kind(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind().exit_code()
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T, E: Into<Error>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e.into()),
        })
    }
}
