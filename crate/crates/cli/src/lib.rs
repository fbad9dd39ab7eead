//! The `lingua` experiment runner.

pub mod commands;
pub mod config;

use std::path::PathBuf;

pub use commands::{ablate, evaluate, finetune, gen_data, oracle_check, pretrain, FinetuneOptions};
pub use config::{EvalConfig, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("missing checkpoint {0} (run the earlier stage first)")]
    MissingCheckpoint(PathBuf),
    #[error("invariant failed: {0}")]
    Invariant(String),
    #[error(transparent)]
    Train(#[from] lingua_train::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<lingua_model::Error> for Error {
    fn from(e: lingua_model::Error) -> Self {
        Error::Train(e.into())
    }
}

impl From<lingua_core::Error> for Error {
    fn from(e: lingua_core::Error) -> Self {
        Error::Train(e.into())
    }
}

impl From<lingua_eval::Error> for Error {
    fn from(e: lingua_eval::Error) -> Self {
        Error::Train(e.into())
    }
}

impl Error {
    /// 2 for anything the user can fix in the invocation or config, 1 for
    /// failures during the run.
    pub fn exit_code(&self) -> i32 {
        use lingua_train::Error as T;
        match self {
            Error::Usage(_) | Error::Config(_) | Error::MissingCheckpoint(_) => 2,
            Error::Train(T::Config(_) | T::ConfigMismatch(_)) => 2,
            Error::Train(T::Model(
                lingua_model::Error::Precision { .. } | lingua_model::Error::Config(_),
            )) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.into(),
        source,
    }
}
