//! Tokenized corpus BLEU with `multi-bleu.pl` semantics: clipped n-gram
//! counts summed over the corpus for n = 1..4, one reference per sentence,
//! no smoothing unless requested.

use std::collections::HashMap;

use serde::Serialize;

use lingua_core::TokenSeq;

use crate::{Error, Result};

pub const MAX_ORDER: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Smoothing {
    #[default]
    None,
    /// Add one to matches and totals for n >= 2.
    AddOne,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BleuReport {
    pub score: f64,
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_length: usize,
    pub ref_length: usize,
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
}

fn ngram_counts(ids: &[u32], n: usize) -> HashMap<&[u32], u64> {
    let mut counts = HashMap::new();
    if ids.len() >= n {
        for w in ids.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

pub fn corpus_bleu(hyps: &[TokenSeq], refs: &[TokenSeq]) -> Result<BleuReport> {
    corpus_bleu_with(hyps, refs, Smoothing::None)
}

pub fn corpus_bleu_with(
    hyps: &[TokenSeq],
    refs: &[TokenSeq],
    smoothing: Smoothing,
) -> Result<BleuReport> {
    if hyps.len() != refs.len() {
        return Err(Error::LengthMismatch {
            hyps: hyps.len(),
            refs: refs.len(),
        });
    }
    if hyps.is_empty() {
        return Err(Error::Empty);
    }
    let mut matches = [0u64; MAX_ORDER];
    let mut totals = [0u64; MAX_ORDER];
    let (mut hyp_length, mut ref_length) = (0, 0);
    for (h, r) in hyps.iter().zip(refs) {
        hyp_length += h.len();
        ref_length += r.len();
        for n in 1..=MAX_ORDER {
            let hc = ngram_counts(h.ids(), n);
            let rc = ngram_counts(r.ids(), n);
            totals[n - 1] += h.len().saturating_sub(n - 1) as u64;
            matches[n - 1] += hc
                .iter()
                .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
                .sum::<u64>();
        }
    }
    let mut precisions = [0.0; MAX_ORDER];
    let mut log_sum = 0.0;
    let mut any_zero = false;
    for n in 0..MAX_ORDER {
        let (m, t) = match smoothing {
            Smoothing::AddOne if n > 0 => (matches[n] as f64 + 1.0, totals[n] as f64 + 1.0),
            _ => (matches[n] as f64, totals[n] as f64),
        };
        precisions[n] = if t > 0.0 { m / t } else { 0.0 };
        if precisions[n] > 0.0 {
            log_sum += precisions[n].ln();
        } else {
            any_zero = true;
        }
    }
    let brevity_penalty = if hyp_length == 0 {
        0.0
    } else if hyp_length >= ref_length {
        1.0
    } else {
        (1.0 - ref_length as f64 / hyp_length as f64).exp()
    };
    let score = if any_zero {
        0.0
    } else {
        100.0 * brevity_penalty * (log_sum / MAX_ORDER as f64).exp()
    };
    Ok(BleuReport {
        score,
        precisions,
        brevity_penalty,
        hyp_length,
        ref_length,
        matches,
        totals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(ids: &[u32]) -> TokenSeq {
        TokenSeq::new(ids.to_vec())
    }

    #[test]
    fn identical_corpora_score_100() {
        let c = vec![s(&[5, 6, 7, 8, 9]), s(&[9, 8, 7, 6])];
        let r = corpus_bleu(&c, &c).unwrap();
        assert!((r.score - 100.0).abs() < 1e-9);
        assert_eq!(r.brevity_penalty, 1.0);
    }

    #[test]
    fn short_hypothesis_pays_brevity_penalty() {
        let r = corpus_bleu(&[s(&[1, 2, 3, 4])], &[s(&[1, 2, 3, 4, 5])]).unwrap();
        assert_eq!(r.precisions, [1.0; 4]);
        let bp = (1.0f64 - 5.0 / 4.0).exp();
        assert!((r.brevity_penalty - bp).abs() < 1e-12);
        assert!((r.score - 77.880).abs() < 1e-3, "{}", r.score);
    }

    #[test]
    fn disjoint_tokens_score_zero() {
        let r = corpus_bleu(&[s(&[1, 2, 3, 4])], &[s(&[5, 6, 7, 8])]).unwrap();
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn clipping() {
        // "the the the the" against "the cat": unigram matches clipped to 1
        let r = corpus_bleu(&[s(&[1, 1, 1, 1])], &[s(&[1, 2])]).unwrap();
        assert_eq!(r.matches[0], 1);
        assert_eq!(r.totals[0], 4);
    }

    #[test]
    fn smoothing_rescues_missing_orders() {
        let h = [s(&[1, 2, 9, 4])];
        let r = [s(&[1, 2, 3, 4])];
        assert_eq!(corpus_bleu(&h, &r).unwrap().score, 0.0);
        assert!(corpus_bleu_with(&h, &r, Smoothing::AddOne).unwrap().score > 0.0);
    }

    #[test]
    fn input_errors() {
        assert!(matches!(corpus_bleu(&[], &[]), Err(Error::Empty)));
        assert!(matches!(
            corpus_bleu(&[s(&[1])], &[]),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
