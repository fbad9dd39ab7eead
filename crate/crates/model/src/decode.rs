//! Incremental decoding with cached keys/values, greedy and beam search.

use std::sync::Arc;

use lingua_core::{LanguageId, TokenSeq, BOS, EOS};

use crate::graph::{dot, softmax_in_place};
use crate::params::{Linear, Norm};
use crate::tensor::{gelu, gemm, layer_norm, log_softmax_row, Mat};
use crate::{Error, Float, Model, Result};

/// A decoded sentence. `tokens` never contains EOS; `complete` records
/// whether EOS was emitted, in which case its log-probability is part of
/// `score`.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub tokens: TokenSeq,
    pub score: f64,
    pub complete: bool,
}

/// Anything that yields next-token log-probabilities one step at a time.
pub trait StepModel<T: Float> {
    type State: Clone;

    fn vocab_size(&self) -> usize;

    fn start(
        &self,
        src: &TokenSeq,
        src_lang: LanguageId,
        tgt_lang: LanguageId,
    ) -> Result<Self::State>;

    /// Feeds `tokens[i]` to `states[i]` and returns one row of next-token
    /// log-probabilities per state.
    fn step(&self, states: &mut [Self::State], tokens: &[u32]) -> Mat<T>;
}

/// Cross-attention keys and values of one encoded source, per layer.
pub struct Memory<T> {
    keys: Vec<Mat<T>>,
    values: Vec<Mat<T>>,
}

#[derive(Clone)]
pub struct DecoderState<T> {
    memory: Arc<Memory<T>>,
    /// Per layer, flattened `t x d` self-attention keys and values.
    keys: Vec<Vec<T>>,
    values: Vec<Vec<T>>,
    pos: usize,
    lang: LanguageId,
}

fn affine<T: Float>(x: &Mat<T>, params: &[Mat<T>], lin: Linear) -> Mat<T> {
    let w = &params[lin.w];
    let b = &params[lin.b].data;
    let mut y = Mat::zeros(x.rows, w.cols);
    gemm(T::one(), x, false, w, false, T::zero(), &mut y);
    for row in y.data.chunks_mut(w.cols) {
        for (o, &bi) in row.iter_mut().zip(b) {
            *o += bi;
        }
    }
    y
}

fn normed<T: Float>(x: &Mat<T>, params: &[Mat<T>], n: Norm) -> Mat<T> {
    layer_norm(x, &params[n.gain].data, &params[n.bias].data).0
}

/// Single-query multi-head attention over `len` cached rows.
fn attend<T: Float>(q: &[T], keys: &[T], values: &[T], len: usize, heads: usize, out: &mut [T]) {
    let d = q.len();
    let dh = d / heads;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let mut scores = Vec::with_capacity(len);
    for h in 0..heads {
        let c0 = h * dh;
        scores.clear();
        for j in 0..len {
            scores.push(dot(&q[c0..c0 + dh], &keys[j * d + c0..j * d + c0 + dh]) * scale);
        }
        softmax_in_place(&mut scores);
        let o = &mut out[c0..c0 + dh];
        o.iter_mut().for_each(|v| *v = T::zero());
        for (j, &p) in scores.iter().enumerate() {
            for (ov, &vv) in o.iter_mut().zip(&values[j * d + c0..j * d + c0 + dh]) {
                *ov += p * vv;
            }
        }
    }
}

impl<T: Float> StepModel<T> for Model<T> {
    type State = DecoderState<T>;

    fn vocab_size(&self) -> usize {
        self.config().vocab_size
    }

    fn start(
        &self,
        src: &TokenSeq,
        src_lang: LanguageId,
        tgt_lang: LanguageId,
    ) -> Result<DecoderState<T>> {
        self.check_language(src_lang)?;
        self.check_language(tgt_lang)?;
        let enc = self.encoder_output(src)?;
        let params = self.params();
        let lay = self.layout();
        let memory = Memory {
            keys: lay
                .decoder
                .iter()
                .map(|l| affine(&enc, params, l.cross_k))
                .collect(),
            values: lay
                .decoder
                .iter()
                .map(|l| affine(&enc, params, l.cross_v))
                .collect(),
        };
        let layers = lay.decoder.len();
        Ok(DecoderState {
            memory: Arc::new(memory),
            keys: vec![Vec::new(); layers],
            values: vec![Vec::new(); layers],
            pos: 0,
            lang: tgt_lang,
        })
    }

    fn step(&self, states: &mut [DecoderState<T>], tokens: &[u32]) -> Mat<T> {
        assert_eq!(states.len(), tokens.len());
        let b = states.len();
        if b == 0 {
            return Mat::zeros(0, self.vocab_size());
        }
        let lang = states[0].lang;
        assert!(
            states.iter().all(|s| s.lang == lang),
            "one target language per step"
        );
        let li = lang.index();
        let cfg = self.config();
        let (d, heads) = (cfg.hidden_dim, cfg.num_heads);
        let params = self.params();
        let lay = self.layout();

        let mut x = Mat::zeros(b, d);
        for (i, (s, &tok)) in states.iter().zip(tokens).enumerate() {
            assert!(s.pos <= cfg.max_len, "decoder ran past max_len");
            let row = x.row_mut(i);
            let te = params[lay.tok_emb].row(tok as usize);
            let pe = params[lay.pos_emb].row(s.pos);
            let le = params[lay.lang_emb].row(li);
            for j in 0..d {
                row[j] = te[j] + pe[j] + le[j];
            }
        }

        let mut att = Mat::zeros(b, d);
        for (l, layer) in lay.decoder.iter().enumerate() {
            let a = normed(&x, params, layer.ln_self);
            let q = affine(&a, params, layer.self_q);
            let k = affine(&a, params, layer.self_k);
            let v = affine(&a, params, layer.self_v);
            for (i, s) in states.iter_mut().enumerate() {
                s.keys[l].extend_from_slice(k.row(i));
                s.values[l].extend_from_slice(v.row(i));
                let len = s.pos + 1;
                attend(
                    q.row(i),
                    &s.keys[l],
                    &s.values[l],
                    len,
                    heads,
                    att.row_mut(i),
                );
            }
            x.add_assign(&affine(&att, params, layer.self_o[li]));

            let c = normed(&x, params, layer.ln_cross);
            let q = affine(&c, params, layer.cross_q);
            for (i, s) in states.iter().enumerate() {
                let mk = &s.memory.keys[l];
                let mv = &s.memory.values[l];
                attend(q.row(i), &mk.data, &mv.data, mk.rows, heads, att.row_mut(i));
            }
            x.add_assign(&affine(&att, params, layer.cross_o[li]));

            let f = normed(&x, params, layer.ln_ffn);
            let mut h = affine(&f, params, layer.ffn_in);
            for v in &mut h.data {
                *v = gelu(*v);
            }
            x.add_assign(&affine(&h, params, layer.ffn_out));
        }
        for s in states.iter_mut() {
            s.pos += 1;
        }
        let h = normed(&x, params, lay.dec_final);
        let mut logits = Mat::zeros(b, cfg.vocab_size);
        gemm(
            T::one(),
            &h,
            false,
            &params[lay.tok_emb],
            true,
            T::zero(),
            &mut logits,
        );
        let bias = &params[lay.out_bias].data;
        for i in 0..b {
            let row = logits.row_mut(i);
            for (o, &bi) in row.iter_mut().zip(bias) {
                *o += bi;
            }
            log_softmax_row(row);
        }
        logits
    }
}

/// Greedy decoding of one sentence; at most `max_len` steps, EOS included.
pub fn greedy_decode<T: Float, M: StepModel<T>>(
    model: &M,
    src: &TokenSeq,
    src_lang: LanguageId,
    tgt_lang: LanguageId,
    max_len: usize,
) -> Result<Hypothesis> {
    Ok(greedy_decode_batch(model, &[src], src_lang, tgt_lang, &[max_len])?.remove(0))
}

/// Greedy decoding of several sentences stepped together. Ties go to the
/// lowest token id.
pub fn greedy_decode_batch<T: Float, M: StepModel<T>>(
    model: &M,
    srcs: &[&TokenSeq],
    src_lang: LanguageId,
    tgt_lang: LanguageId,
    max_lens: &[usize],
) -> Result<Vec<Hypothesis>> {
    assert_eq!(srcs.len(), max_lens.len());
    let mut hyps: Vec<Hypothesis> = srcs
        .iter()
        .map(|_| Hypothesis {
            tokens: TokenSeq::default(),
            score: 0.0,
            complete: false,
        })
        .collect();
    let mut states = Vec::new();
    let mut owners = Vec::new();
    for (i, src) in srcs.iter().enumerate() {
        let state = model.start(src, src_lang, tgt_lang)?;
        if max_lens[i] > 0 {
            states.push(state);
            owners.push(i);
        }
    }
    let mut tokens: Vec<Vec<u32>> = vec![Vec::new(); srcs.len()];
    let mut last: Vec<u32> = vec![BOS; states.len()];
    while !states.is_empty() {
        let lp = model.step(&mut states, &last);
        let mut keep = vec![true; states.len()];
        for (row, &owner) in owners.iter().enumerate() {
            let dist = lp.row(row);
            let best = crate::tensor::argmax(dist) as u32;
            hyps[owner].score += dist[best as usize].f64();
            if best == EOS {
                hyps[owner].complete = true;
                keep[row] = false;
            } else {
                tokens[owner].push(best);
                last[row] = best;
                if tokens[owner].len() >= max_lens[owner] {
                    keep[row] = false;
                }
            }
        }
        let mut it = keep.iter();
        states.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        owners.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        last.retain(|_| *it.next().unwrap());
    }
    for (h, t) in hyps.iter_mut().zip(tokens) {
        h.tokens = TokenSeq::new(t);
    }
    Ok(hyps)
}

/// Length-unnormalized beam search.
///
/// Each step keeps the `beam` best expansions over all live hypotheses;
/// expansions ending in EOS retire into the finished pool. The greedy
/// hypothesis seeds the pool, so the result never scores below greedy
/// decoding, and `beam == 1` reproduces it exactly.
pub fn beam_decode<T: Float, M: StepModel<T>>(
    model: &M,
    src: &TokenSeq,
    src_lang: LanguageId,
    tgt_lang: LanguageId,
    max_len: usize,
    beam: usize,
) -> Result<Hypothesis> {
    if beam < 1 {
        return Err(Error::BeamSize);
    }
    let mut finished = vec![greedy_decode(model, src, src_lang, tgt_lang, max_len)?];
    let mut states = vec![model.start(src, src_lang, tgt_lang)?];
    let mut live: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 0.0)];
    let mut last = vec![BOS];
    for _ in 0..max_len {
        if live.is_empty() {
            break;
        }
        let best_done = finished
            .iter()
            .map(|h| h.score)
            .fold(f64::NEG_INFINITY, f64::max);
        if live.iter().all(|(_, s)| *s < best_done) {
            break;
        }
        let lp = model.step(&mut states, &last);
        let mut cands: Vec<(f64, usize, u32)> = Vec::with_capacity(live.len() * lp.cols);
        for (b, (_, score)) in live.iter().enumerate() {
            for (w, &l) in lp.row(b).iter().enumerate() {
                cands.push((score + l.f64(), b, w as u32));
            }
        }
        cands.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        cands.truncate(beam);
        let mut next_states = Vec::new();
        let mut next_live = Vec::new();
        let mut next_last = Vec::new();
        for (score, b, w) in cands {
            if w == EOS {
                finished.push(Hypothesis {
                    tokens: TokenSeq::new(live[b].0.clone()),
                    score,
                    complete: true,
                });
            } else {
                let mut toks = live[b].0.clone();
                toks.push(w);
                next_states.push(states[b].clone());
                next_live.push((toks, score));
                next_last.push(w);
            }
        }
        states = next_states;
        live = next_live;
        last = next_last;
    }
    for (toks, score) in live {
        finished.push(Hypothesis {
            tokens: TokenSeq::new(toks),
            score,
            complete: false,
        });
    }
    let mut best = 0;
    for (i, h) in finished.iter().enumerate() {
        if h.score > finished[best].score {
            best = i;
        }
    }
    Ok(finished.swap_remove(best))
}
