//! The conditional translation model: a shared transformer encoder, a shared
//! decoder conditioned on the target language through additive language
//! embeddings and per-language attention output maps, exact per-token
//! log-probabilities, reverse-mode gradients and greedy/beam decoding.

pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod error;
pub mod float;
pub mod graph;
pub mod model;
pub mod params;
pub mod tensor;

pub use config::ModelConfig;
pub use decode::{beam_decode, greedy_decode, greedy_decode_batch, Hypothesis, StepModel};
pub use error::{Error, Result};
pub use float::{Float, Precision};
pub use graph::{AttnSeg, Graph, Var};
pub use model::{Dropout, LogProb, Model, ScoredTargets};
pub use params::{Gradients, Layout, ParamSpec};
pub use tensor::Mat;
