#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("{what} has {len} tokens, more than max_len {max}")]
    TooLong {
        what: &'static str,
        len: usize,
        max: usize,
    },
    #[error("source sentence is empty")]
    EmptySource,
    #[error("language {lang} out of range for {count} languages")]
    Language { lang: u16, count: usize },
    #[error(transparent)]
    Token(#[from] lingua_core::Error),
    #[error("non-finite loss")]
    NonFiniteLoss,
    #[error("beam size must be at least 1")]
    BeamSize,
    #[error("precision mismatch: config says {config}, model stores {stored}")]
    Precision {
        config: crate::Precision,
        stored: crate::Precision,
    },
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
