use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("vocab too small: max_size must exceed 6, got {0}")]
    VocabTooSmall(usize),
    #[error("duplicate token {0:?} in vocabulary")]
    DuplicateToken(String),
    #[error("vocabulary file must start with the reserved tokens, found {found:?} at id {id}")]
    BadReserved { id: usize, found: String },
    #[error("sequence too short to mask (length {0})")]
    TooShortToMask(usize),
    #[error("line {line} has {len} tokens, exceeding the cap of {cap}")]
    LineTooLong { line: usize, len: usize, cap: usize },
    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: u32, size: usize },
    #[error("parallel corpus languages must differ (both {0})")]
    SameLanguage(String),
    #[error("parallel files have different line counts: {0} vs {1}")]
    UnalignedParallel(usize, usize),
    #[error("invalid language set: {0}")]
    Languages(String),
    #[error("invalid world config: {0}")]
    WorldConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
