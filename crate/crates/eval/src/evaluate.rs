use std::io::Write;
use std::path::Path;

use lingua_core::{LanguageId, TokenSeq, Vocabulary};
use lingua_model::{beam_decode, greedy_decode_batch, Float, StepModel};

use crate::{corpus_bleu, BleuReport, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Beam(usize),
}

/// Decoding budget for a source of `src_len` tokens: half again its length
/// plus four, capped by the model's `max_len`.
pub fn decode_limit(src_len: usize, max_len: usize) -> usize {
    (src_len + src_len / 2 + 4).min(max_len)
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: BleuReport,
    pub hypotheses: Vec<TokenSeq>,
}

const CHUNK: usize = 64;

/// Decodes every source of `testset` and scores against the gold targets.
pub fn evaluate_pair<T: Float, M: StepModel<T>>(
    model: &M,
    testset: &[(TokenSeq, TokenSeq)],
    src_lang: LanguageId,
    tgt_lang: LanguageId,
    mode: DecodeMode,
    max_len: usize,
) -> Result<Evaluation> {
    if testset.is_empty() {
        return Err(Error::Empty);
    }
    let mut hypotheses = Vec::with_capacity(testset.len());
    for chunk in testset.chunks(CHUNK) {
        let limits: Vec<usize> = chunk
            .iter()
            .map(|(s, _)| decode_limit(s.len(), max_len))
            .collect();
        match mode {
            DecodeMode::Greedy => {
                let srcs: Vec<&TokenSeq> = chunk.iter().map(|p| &p.0).collect();
                let hyps = greedy_decode_batch(model, &srcs, src_lang, tgt_lang, &limits)?;
                hypotheses.extend(hyps.into_iter().map(|h| h.tokens));
            }
            DecodeMode::Beam(k) => {
                for ((src, _), &limit) in chunk.iter().zip(&limits) {
                    hypotheses.push(beam_decode(model, src, src_lang, tgt_lang, limit, k)?.tokens);
                }
            }
        }
    }
    let refs: Vec<TokenSeq> = testset.iter().map(|p| p.1.clone()).collect();
    let report = corpus_bleu(&hypotheses, &refs)?;
    Ok(Evaluation { report, hypotheses })
}

/// One decoded sentence per line, aligned with the test sources.
pub fn write_hypotheses(
    path: impl AsRef<Path>,
    hyps: &[TokenSeq],
    vocab: &Vocabulary,
) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::Io {
        path: path.into(),
        source: e,
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for h in hyps {
        writeln!(f, "{}", vocab.decode(h)).map_err(io)?;
    }
    f.flush().map_err(io)
}
