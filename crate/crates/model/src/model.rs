use rand::{Rng, RngCore};

use lingua_core::{LanguageId, TokenSeq, BOS, EOS};

use crate::graph::{AttnSeg, Graph, Var};
use crate::params::{Gradients, Layout, Linear, Norm};
use crate::{Error, Float, Mat, ModelConfig, Result};

/// Inverted dropout, active only when constructed with a random stream.
pub struct Dropout<'r> {
    rate: f64,
    rng: Option<&'r mut dyn RngCore>,
}

impl<'r> Dropout<'r> {
    pub fn off() -> Self {
        Self {
            rate: 0.0,
            rng: None,
        }
    }

    pub fn on(rate: f64, rng: &'r mut dyn RngCore) -> Self {
        Self {
            rate,
            rng: Some(rng),
        }
    }

    fn apply<T: Float>(&mut self, g: &mut Graph<'_, T>, x: Var) -> Var {
        let Some(rng) = self.rng.as_deref_mut() else {
            return x;
        };
        if self.rate <= 0.0 {
            return x;
        }
        let keep = T::of(1.0 / (1.0 - self.rate));
        let mask = (0..g.value(x).len())
            .map(|_| {
                if rng.gen::<f64>() < self.rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        g.mask(x, mask)
    }
}

/// Log-probability of a target sentence (including the closing EOS).
#[derive(Clone, Debug, PartialEq)]
pub struct LogProb {
    pub total: f64,
    pub per_token: Vec<f64>,
}

/// Teacher-forced target log-probabilities inside a graph.
pub struct ScoredTargets {
    /// `N x 1` log-probabilities, all target sentences concatenated.
    pub per_token: Var,
    /// `(offset, length)` of each sentence's rows in `per_token`.
    pub spans: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    cfg: ModelConfig,
    layout: Layout,
    params: Vec<Mat<T>>,
}

fn linear<T: Float>(g: &mut Graph<'_, T>, x: Var, lin: Linear) -> Var {
    let (w, b) = (g.param(lin.w), g.param(lin.b));
    let y = g.matmul(x, w);
    g.add_row(y, b)
}

fn norm<T: Float>(g: &mut Graph<'_, T>, x: Var, n: Norm) -> Var {
    let (gain, bias) = (g.param(n.gain), g.param(n.bias));
    g.layer_norm(x, gain, bias)
}

fn packed(seqs: &[&[u32]]) -> (Vec<u32>, Vec<u32>, Vec<(usize, usize)>) {
    let mut ids = Vec::new();
    let mut positions = Vec::new();
    let mut spans = Vec::with_capacity(seqs.len());
    for s in seqs {
        spans.push((ids.len(), s.len()));
        ids.extend_from_slice(s);
        positions.extend(0..s.len() as u32);
    }
    (ids, positions, spans)
}

impl<T: Float> Model<T> {
    pub fn init<R: Rng + ?Sized>(cfg: ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if cfg.precision != T::PRECISION {
            return Err(Error::Precision {
                config: cfg.precision,
                stored: T::PRECISION,
            });
        }
        let layout = Layout::new(&cfg);
        let params = layout.init(rng);
        Ok(Self {
            cfg,
            layout,
            params,
        })
    }

    pub fn from_params(cfg: ModelConfig, params: Vec<Mat<T>>) -> Result<Self> {
        cfg.validate()?;
        if cfg.precision != T::PRECISION {
            return Err(Error::Precision {
                config: cfg.precision,
                stored: T::PRECISION,
            });
        }
        let layout = Layout::new(&cfg);
        if params.len() != layout.len() {
            return Err(Error::ConfigMismatch(format!(
                "{} parameter tensors, layout expects {}",
                params.len(),
                layout.len()
            )));
        }
        for (p, s) in params.iter().zip(&layout.specs) {
            if p.shape() != (s.rows, s.cols) {
                return Err(Error::ConfigMismatch(format!(
                    "{} has shape {:?}, expected {:?}",
                    s.name,
                    p.shape(),
                    (s.rows, s.cols)
                )));
            }
        }
        Ok(Self {
            cfg,
            layout,
            params,
        })
    }

    /// Same parameters at another precision.
    pub fn cast<U: Float>(&self) -> Model<U> {
        let mut cfg = self.cfg.clone();
        cfg.precision = U::PRECISION;
        Model {
            cfg,
            layout: self.layout.clone(),
            params: self
                .params
                .iter()
                .map(|p| {
                    Mat::from_vec(
                        p.rows,
                        p.cols,
                        p.data.iter().map(|&x| U::of(x.f64())).collect(),
                    )
                })
                .collect(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[Mat<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Mat<T>] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Mat::len).sum()
    }

    pub fn check_language(&self, lang: LanguageId) -> Result<()> {
        if lang.index() >= self.cfg.num_languages {
            return Err(Error::Language {
                lang: lang.0,
                count: self.cfg.num_languages,
            });
        }
        Ok(())
    }

    pub(crate) fn check_source(&self, src: &TokenSeq) -> Result<()> {
        if src.is_empty() {
            return Err(Error::EmptySource);
        }
        if src.len() > self.cfg.max_len {
            return Err(Error::TooLong {
                what: "source",
                len: src.len(),
                max: self.cfg.max_len,
            });
        }
        src.check_vocab(self.cfg.vocab_size)?;
        Ok(())
    }

    fn check_target(&self, tgt: &TokenSeq) -> Result<()> {
        if tgt.len() > self.cfg.max_len {
            return Err(Error::TooLong {
                what: "target",
                len: tgt.len(),
                max: self.cfg.max_len,
            });
        }
        tgt.check_vocab(self.cfg.vocab_size)?;
        Ok(())
    }

    /// Encodes a batch of sources. The encoder has no language input, so
    /// its output depends on the source tokens alone.
    pub fn encode_graph(
        &self,
        g: &mut Graph<'_, T>,
        srcs: &[&TokenSeq],
        dropout: &mut Dropout<'_>,
    ) -> Result<(Var, Vec<(usize, usize)>)> {
        for s in srcs {
            self.check_source(s)?;
        }
        let seqs: Vec<&[u32]> = srcs.iter().map(|s| s.ids()).collect();
        let (ids, positions, spans) = packed(&seqs);
        let lay = &self.layout;
        let tok = g.param(lay.tok_emb);
        let pos = g.param(lay.pos_emb);
        let te = g.gather(tok, ids);
        let pe = g.gather(pos, positions);
        let x = g.add(te, pe);
        let mut x = dropout.apply(g, x);
        let segs: Vec<AttnSeg> = spans
            .iter()
            .map(|&(off, len)| AttnSeg {
                q_off: off,
                q_len: len,
                k_off: off,
                k_len: len,
            })
            .collect();
        let heads = self.cfg.num_heads;
        for layer in &lay.encoder {
            let a = norm(g, x, layer.ln_attn);
            let q = linear(g, a, layer.q);
            let k = linear(g, a, layer.k);
            let v = linear(g, a, layer.v);
            let att = g.attention(q, k, v, segs.clone(), heads, false);
            let o = linear(g, att, layer.o);
            let o = dropout.apply(g, o);
            x = g.add(x, o);
            x = self.ffn(g, x, layer.ln_ffn, layer.ffn_in, layer.ffn_out, dropout);
        }
        Ok((norm(g, x, lay.enc_final), spans))
    }

    fn ffn(
        &self,
        g: &mut Graph<'_, T>,
        x: Var,
        ln: Norm,
        w_in: Linear,
        w_out: Linear,
        dropout: &mut Dropout<'_>,
    ) -> Var {
        let f = norm(g, x, ln);
        let h = linear(g, f, w_in);
        let h = g.gelu(h);
        let h = linear(g, h, w_out);
        let h = dropout.apply(g, h);
        g.add(x, h)
    }

    /// Decoder logits for teacher-forced inputs (each starting with BOS).
    pub fn decode_graph(
        &self,
        g: &mut Graph<'_, T>,
        memory: Var,
        memory_spans: &[(usize, usize)],
        inputs: &[&[u32]],
        tgt_lang: LanguageId,
        dropout: &mut Dropout<'_>,
    ) -> Result<Var> {
        self.check_language(tgt_lang)?;
        assert_eq!(memory_spans.len(), inputs.len());
        let (ids, positions, spans) = packed(inputs);
        let lay = &self.layout;
        let li = tgt_lang.index();
        let tok = g.param(lay.tok_emb);
        let pos = g.param(lay.pos_emb);
        let lang_table = g.param(lay.lang_emb);
        let te = g.gather(tok, ids);
        let pe = g.gather(pos, positions);
        let le = g.gather(lang_table, vec![tgt_lang.0 as u32]);
        let x = g.add(te, pe);
        let x = g.add_row(x, le);
        let mut x = dropout.apply(g, x);
        let self_segs: Vec<AttnSeg> = spans
            .iter()
            .map(|&(off, len)| AttnSeg {
                q_off: off,
                q_len: len,
                k_off: off,
                k_len: len,
            })
            .collect();
        let cross_segs: Vec<AttnSeg> = spans
            .iter()
            .zip(memory_spans)
            .map(|(&(qo, ql), &(ko, kl))| AttnSeg {
                q_off: qo,
                q_len: ql,
                k_off: ko,
                k_len: kl,
            })
            .collect();
        let heads = self.cfg.num_heads;
        for layer in &lay.decoder {
            let a = norm(g, x, layer.ln_self);
            let q = linear(g, a, layer.self_q);
            let k = linear(g, a, layer.self_k);
            let v = linear(g, a, layer.self_v);
            let att = g.attention(q, k, v, self_segs.clone(), heads, true);
            let o = linear(g, att, layer.self_o[li]);
            let o = dropout.apply(g, o);
            x = g.add(x, o);

            let c = norm(g, x, layer.ln_cross);
            let q = linear(g, c, layer.cross_q);
            let k = linear(g, memory, layer.cross_k);
            let v = linear(g, memory, layer.cross_v);
            let att = g.attention(q, k, v, cross_segs.clone(), heads, false);
            let o = linear(g, att, layer.cross_o[li]);
            let o = dropout.apply(g, o);
            x = g.add(x, o);

            x = self.ffn(g, x, layer.ln_ffn, layer.ffn_in, layer.ffn_out, dropout);
        }
        let h = norm(g, x, lay.dec_final);
        let tok = g.param(lay.tok_emb);
        let bias = g.param(lay.out_bias);
        let logits = g.matmul_t(h, false, tok, true);
        Ok(g.add_row(logits, bias))
    }

    /// Teacher-forced log-probabilities of `tgt` given `src` for a batch of
    /// pairs sharing the language direction.
    pub fn score_targets(
        &self,
        g: &mut Graph<'_, T>,
        pairs: &[(&TokenSeq, &TokenSeq)],
        src_lang: LanguageId,
        tgt_lang: LanguageId,
        dropout: &mut Dropout<'_>,
    ) -> Result<ScoredTargets> {
        self.check_language(src_lang)?;
        self.check_language(tgt_lang)?;
        for (_, t) in pairs {
            self.check_target(t)?;
        }
        let srcs: Vec<&TokenSeq> = pairs.iter().map(|p| p.0).collect();
        let (memory, mem_spans) = self.encode_graph(g, &srcs, dropout)?;
        let inputs: Vec<Vec<u32>> = pairs
            .iter()
            .map(|(_, t)| {
                std::iter::once(BOS)
                    .chain(t.ids().iter().copied())
                    .collect()
            })
            .collect();
        let input_refs: Vec<&[u32]> = inputs.iter().map(Vec::as_slice).collect();
        let logits = self.decode_graph(g, memory, &mem_spans, &input_refs, tgt_lang, dropout)?;
        let mut targets = Vec::new();
        let mut spans = Vec::with_capacity(pairs.len());
        for (_, t) in pairs {
            spans.push((targets.len(), t.len() + 1));
            targets.extend_from_slice(t.ids());
            targets.push(EOS);
        }
        let per_token = g.log_prob_at(logits, targets);
        Ok(ScoredTargets { per_token, spans })
    }

    pub fn log_prob_batch(
        &self,
        pairs: &[(&TokenSeq, &TokenSeq)],
        src_lang: LanguageId,
        tgt_lang: LanguageId,
    ) -> Result<Vec<LogProb>> {
        let mut g = Graph::new(&self.params);
        let scored = self.score_targets(&mut g, pairs, src_lang, tgt_lang, &mut Dropout::off())?;
        let values = &g.value(scored.per_token).data;
        Ok(scored
            .spans
            .iter()
            .map(|&(off, len)| {
                let per_token: Vec<f64> = values[off..off + len].iter().map(|v| v.f64()).collect();
                LogProb {
                    total: per_token.iter().sum(),
                    per_token,
                }
            })
            .collect())
    }

    /// Log-probability of `tgt` (followed by EOS) given `src`, dropout off.
    pub fn log_prob(
        &self,
        src: &TokenSeq,
        src_lang: LanguageId,
        tgt: &TokenSeq,
        tgt_lang: LanguageId,
    ) -> Result<LogProb> {
        Ok(self
            .log_prob_batch(&[(src, tgt)], src_lang, tgt_lang)?
            .remove(0))
    }

    /// Full next-token distributions (log space) at every target position.
    pub fn next_token_log_probs(
        &self,
        src: &TokenSeq,
        src_lang: LanguageId,
        tgt: &TokenSeq,
        tgt_lang: LanguageId,
    ) -> Result<Mat<T>> {
        self.check_language(src_lang)?;
        self.check_target(tgt)?;
        let mut g = Graph::new(&self.params);
        let mut dropout = Dropout::off();
        let (memory, spans) = self.encode_graph(&mut g, &[src], &mut dropout)?;
        let input: Vec<u32> = std::iter::once(BOS)
            .chain(tgt.ids().iter().copied())
            .collect();
        let logits =
            self.decode_graph(&mut g, memory, &spans, &[&input], tgt_lang, &mut dropout)?;
        let mut out = g.value(logits).clone();
        for i in 0..out.rows {
            crate::tensor::log_softmax_row(out.row_mut(i));
        }
        Ok(out)
    }

    /// Final encoder states for one source sentence.
    pub fn encoder_output(&self, src: &TokenSeq) -> Result<Mat<T>> {
        let mut g = Graph::new(&self.params);
        let (v, _) = self.encode_graph(&mut g, &[src], &mut Dropout::off())?;
        Ok(g.value(v).clone())
    }

    /// Evaluates a scalar objective built by `f` and returns its value with
    /// exact gradients for every parameter.
    pub fn gradients<F>(&self, f: F) -> Result<(T, Gradients<T>)>
    where
        F: FnOnce(&Self, &mut Graph<'_, T>) -> Result<Var>,
    {
        let mut g = Graph::new(&self.params);
        let loss = f(self, &mut g)?;
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        let tensors = g.backward(loss);
        Ok((value, Gradients { tensors }))
    }
}
