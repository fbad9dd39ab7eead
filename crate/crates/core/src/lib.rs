//! Data-side building blocks: languages, vocabularies, token sequences,
//! corpora, the synthetic cipher-language world and span masking.

pub mod corpus;
pub mod error;
pub mod lang;
pub mod mask;
pub mod vocab;
pub mod world;

pub use corpus::{MonoCorpus, ParallelCorpus, TokenSeq, DEFAULT_LENGTH_CAP};
pub use error::{Error, Result};
pub use lang::{LanguageId, Languages};
pub use mask::{mass_mask, MaskConfig, MaskedExample};
pub use vocab::{Vocabulary, BOS, EOS, MASK, PAD, UNK};
pub use world::{gen_synthetic_world, TestSet, World, WorldConfig};
