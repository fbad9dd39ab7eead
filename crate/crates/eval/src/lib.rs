//! Corpus-level BLEU and the decode-and-score evaluation harness.

pub mod bleu;
pub mod evaluate;

pub use bleu::{corpus_bleu, corpus_bleu_with, BleuReport, Smoothing};
pub use evaluate::{decode_limit, evaluate_pair, write_hypotheses, DecodeMode, Evaluation};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("hypothesis count {hyps} differs from reference count {refs}")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("nothing to score")]
    Empty,
    #[error(transparent)]
    Model(#[from] lingua_model::Error),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
