#![allow(dead_code)]

use lingua_core::{LanguageId, TokenSeq};
use lingua_model::{Float, Model, ModelConfig, Precision};
use lingua_train::{Objective, Translator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const L0: LanguageId = LanguageId(0);
pub const L1: LanguageId = LanguageId(1);
pub const L2: LanguageId = LanguageId(2);

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
    Model::init(
        tiny_config(T::PRECISION),
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap()
}

pub fn random_seq(rng: &mut ChaCha8Rng, vocab: u32, min: usize, max: usize) -> TokenSeq {
    let len = rng.gen_range(min..=max);
    TokenSeq::new((0..len).map(|_| rng.gen_range(5..vocab)).collect())
}

pub fn random_lines(seed: u64, n: usize) -> Vec<TokenSeq> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_seq(&mut rng, 20, 2, 8)).collect()
}

pub fn random_pairs(seed: u64, n: usize) -> Vec<(TokenSeq, TokenSeq)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (
                random_seq(&mut rng, 20, 2, 8),
                random_seq(&mut rng, 20, 2, 8),
            )
        })
        .collect()
}

/// Translator that returns its input unchanged.
pub struct Copy;

impl<T: Float> Translator<T> for Copy {
    fn translate(
        &self,
        _: &Model<T>,
        srcs: &[&TokenSeq],
        _: LanguageId,
        _: LanguageId,
    ) -> lingua_train::Result<Vec<TokenSeq>> {
        Ok(srcs.iter().map(|s| (*s).clone()).collect())
    }
}

pub fn coordinates<T: Float>(m: &Model<T>, n: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = m.params().iter().map(|p| p.len()).collect();
    let total: usize = sizes.iter().sum();
    (0..n)
        .map(|_| {
            let mut flat = rng.gen_range(0..total);
            let mut p = 0;
            while flat >= sizes[p] {
                flat -= sizes[p];
                p += 1;
            }
            (p, flat)
        })
        .collect()
}

/// Central difference of the objective's value in f64, step
/// `1e-4 * max(1, |theta|)`.
pub fn finite_difference(m: &Model<f64>, obj: &Objective, param: usize, index: usize) -> f64 {
    let theta = m.params()[param].data[index];
    let h = 1e-4 * theta.abs().max(1.0);
    let mut plus = m.clone();
    plus.params_mut()[param].data[index] = theta + h;
    let mut minus = m.clone();
    minus.params_mut()[param].data[index] = theta - h;
    (obj.evaluate(&plus).unwrap().value - obj.evaluate(&minus).unwrap().value) / (2.0 * h)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// As `relative_error`, with the denominator floored at f32 rounding noise:
/// parameters whose true gradient is exactly zero (e.g. attention key
/// biases, which shift every score in a row equally) come out around 1e-9.
pub fn relative_error_f32(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
}
