use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lingua_core::{LanguageId, MonoCorpus, ParallelCorpus, TokenSeq};

#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Mono(MonoCorpus),
    Parallel(ParallelCorpus),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Mono(c) => c.len(),
            Dataset::Parallel(c) => c.pairs().len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn languages(&self) -> Vec<LanguageId> {
        match self {
            Dataset::Mono(c) => vec![c.language],
            Dataset::Parallel(c) => vec![c.src_language, c.tgt_language],
        }
    }
}

// Stream tags; each random decision in training draws from its own stream
// keyed by (seed, tag, index) so that a run can resume from its step count.
pub(crate) const PICK: u64 = 1;
pub(crate) const DROPOUT: u64 = 2;
pub(crate) const BATCH: u64 = 3;

pub(crate) fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 56) ^ index);
    rng
}

/// `k` distinct line indices (all of them if the corpus is smaller).
pub(crate) fn sample_lines<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    index::sample(rng, n, k.min(n)).into_vec()
}

/// Distinct line indices drawn until their source lengths reach `budget`.
pub(crate) fn sample_tokens<R: Rng>(
    rng: &mut R,
    lens: impl Fn(usize) -> usize,
    n: usize,
    budget: usize,
) -> Vec<usize> {
    let order = index::sample(rng, n, n);
    let mut picked = Vec::new();
    let mut total = 0;
    for i in order {
        if total >= budget {
            break;
        }
        total += lens(i);
        picked.push(i);
    }
    picked
}

pub(crate) fn mono_batch(c: &MonoCorpus, ids: &[usize]) -> Vec<TokenSeq> {
    ids.iter().map(|&i| c.lines()[i].clone()).collect()
}

pub(crate) fn parallel_batch(c: &ParallelCorpus, ids: &[usize]) -> Vec<(TokenSeq, TokenSeq)> {
    ids.iter().map(|&i| c.pairs()[i].clone()).collect()
}
