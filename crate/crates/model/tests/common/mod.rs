#![allow(dead_code)]

use lingua_core::{LanguageId, TokenSeq, EOS};
use lingua_model::{Float, Mat, Model, ModelConfig, Precision, StepModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tiny_config(precision: Precision) -> ModelConfig {
    ModelConfig {
        num_layers: 2,
        hidden_dim: 16,
        ffn_dim: 32,
        num_heads: 2,
        max_len: 12,
        num_languages: 3,
        vocab_size: 20,
        dropout_rate: 0.1,
        precision,
    }
}

pub fn tiny_model<T: Float>(seed: u64) -> Model<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Model::init(tiny_config(T::PRECISION), &mut rng).unwrap()
}

pub fn random_seq(rng: &mut ChaCha8Rng, vocab: u32, min: usize, max: usize) -> TokenSeq {
    let len = rng.gen_range(min..=max);
    TokenSeq::new((0..len).map(|_| rng.gen_range(5..vocab)).collect())
}

pub const L0: LanguageId = LanguageId(0);
pub const L1: LanguageId = LanguageId(1);
pub const L2: LanguageId = LanguageId(2);

/// Forced-logit scorer that copies the source and then emits EOS.
pub struct CopyScorer {
    pub vocab: usize,
}

#[derive(Clone)]
pub struct CopyState {
    src: Vec<u32>,
    pos: usize,
}

impl StepModel<f64> for CopyScorer {
    type State = CopyState;

    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn start(
        &self,
        src: &TokenSeq,
        _: LanguageId,
        _: LanguageId,
    ) -> lingua_model::Result<CopyState> {
        Ok(CopyState {
            src: src.ids().to_vec(),
            pos: 0,
        })
    }

    fn step(&self, states: &mut [CopyState], _tokens: &[u32]) -> Mat<f64> {
        let mut out = Mat::zeros(states.len(), self.vocab);
        for (i, s) in states.iter_mut().enumerate() {
            let want = s.src.get(s.pos).copied().unwrap_or(EOS);
            let mut logits = vec![-10.0; self.vocab];
            logits[want as usize] = 10.0;
            let lse = logits.iter().map(|l: &f64| l.exp()).sum::<f64>().ln();
            for (o, l) in out.row_mut(i).iter_mut().zip(&logits) {
                *o = l - lse;
            }
            s.pos += 1;
        }
        out
    }
}
