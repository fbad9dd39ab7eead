//! Loss terms. Every objective is a teacher-forced cross-entropy over
//! constant `(source, target)` data; BT and CT first build that data by
//! decoding with the current parameters, so no gradient ever reaches the
//! decoding step.

use std::fmt;

use serde::{Serialize, Serializer};

use lingua_core::{LanguageId, MaskedExample, TokenSeq};
use lingua_eval::decode_limit;
use lingua_model::{
    beam_decode, greedy_decode_batch, Dropout, Float, Gradients, Graph, Model, Var,
};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum LossKind {
    #[serde(rename = "MASS")]
    Mass,
    #[serde(rename = "SUP")]
    Sup,
    #[serde(rename = "BT")]
    Bt,
    #[serde(rename = "CT")]
    Ct,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Mass => "MASS",
            LossKind::Sup => "SUP",
            LossKind::Bt => "BT",
            LossKind::Ct => "CT",
        })
    }
}

fn lang_name<S: Serializer>(l: &LanguageId, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(l)
}

fn opt_lang_name<S: Serializer>(
    l: &Option<LanguageId>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    match l {
        Some(l) => s.collect_str(l),
        None => s.serialize_none(),
    }
}

/// One evaluated loss term: mean negative log-likelihood per target token.
///
/// For BT, `src` is the language of the monolingual sentence and `tgt` the
/// language it was back-translated through. For CT, `src`/`tgt` are the
/// parallel pair's languages in the direction scored.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossRecord {
    pub kind: LossKind,
    #[serde(serialize_with = "lang_name")]
    pub src: LanguageId,
    #[serde(serialize_with = "lang_name")]
    pub tgt: LanguageId,
    #[serde(serialize_with = "opt_lang_name")]
    pub pivot: Option<LanguageId>,
    pub value: f64,
    pub tokens: usize,
    /// Sentences dropped because decoding produced nothing.
    #[serde(skip_serializing_if = "is_zero")]
    pub skipped: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

/// A cross-entropy task on fixed data: maximize `log p(target | source)`
/// decoding into `dec_lang`.
#[derive(Clone, Debug, PartialEq)]
pub struct Objective {
    pub kind: LossKind,
    pub src: LanguageId,
    pub tgt: LanguageId,
    pub pivot: Option<LanguageId>,
    pub enc_lang: LanguageId,
    pub dec_lang: LanguageId,
    pub pairs: Vec<(TokenSeq, TokenSeq)>,
    pub skipped: usize,
}

impl Objective {
    /// Target tokens scored, counting one EOS per sentence.
    pub fn tokens(&self) -> usize {
        self.pairs.iter().map(|(_, t)| t.len() + 1).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Adds the mean per-token negative log-likelihood to `g`.
    pub fn build<T: Float>(
        &self,
        model: &Model<T>,
        g: &mut Graph<'_, T>,
        dropout: &mut Dropout<'_>,
    ) -> Result<Var> {
        if self.pairs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let refs: Vec<(&TokenSeq, &TokenSeq)> = self.pairs.iter().map(|(s, t)| (s, t)).collect();
        let scored = model.score_targets(g, &refs, self.enc_lang, self.dec_lang, dropout)?;
        let total = g.sum(scored.per_token);
        Ok(g.scale(total, T::of(-1.0 / self.tokens() as f64)))
    }

    pub fn record(&self, value: f64) -> LossRecord {
        LossRecord {
            kind: self.kind,
            src: self.src,
            tgt: self.tgt,
            pivot: self.pivot,
            value,
            tokens: self.tokens(),
            skipped: self.skipped,
        }
    }

    /// Loss value with dropout off.
    pub fn evaluate<T: Float>(&self, model: &Model<T>) -> Result<LossRecord> {
        let mut g = Graph::new(model.params());
        let v = self.build(model, &mut g, &mut Dropout::off())?;
        Ok(self.record(g.scalar(v).f64()))
    }

    /// Loss value and exact gradients.
    pub fn gradients<T: Float>(
        &self,
        model: &Model<T>,
        dropout: &mut Dropout<'_>,
    ) -> Result<(LossRecord, Gradients<T>)> {
        let (records, grads) = joint_gradients(model, &[(self, 1.0)], dropout)?;
        Ok((records.into_iter().next().unwrap(), grads))
    }
}

/// Gradients of `Σ weight · loss` over several objectives in one pass.
/// Records carry the unweighted values.
pub fn joint_gradients<T: Float>(
    model: &Model<T>,
    terms: &[(&Objective, f64)],
    dropout: &mut Dropout<'_>,
) -> Result<(Vec<LossRecord>, Gradients<T>)> {
    let mut g = Graph::new(model.params());
    let mut vars = Vec::with_capacity(terms.len());
    let mut total: Option<Var> = None;
    for (obj, w) in terms {
        let v = obj.build(model, &mut g, dropout)?;
        vars.push(v);
        let weighted = if *w == 1.0 { v } else { g.scale(v, T::of(*w)) };
        total = Some(match total {
            Some(a) => g.add(a, weighted),
            None => weighted,
        });
    }
    let total = total.ok_or(Error::EmptyBatch)?;
    if !g.scalar(total).is_finite() {
        return Err(lingua_model::Error::NonFiniteLoss.into());
    }
    let records = terms
        .iter()
        .zip(&vars)
        .map(|((obj, _), &v)| obj.record(g.scalar(v).f64()))
        .collect();
    let tensors = g.backward(total);
    Ok((records, Gradients { tensors }))
}

/// How the E-step picks the mode of the translation distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EStep {
    Greedy,
    /// Experimental: beam search of the given width.
    Beam(usize),
}

/// Produces translations used as constant data by BT and CT.
pub trait Translator<T: Float> {
    fn translate(
        &self,
        model: &Model<T>,
        srcs: &[&TokenSeq],
        from: LanguageId,
        to: LanguageId,
    ) -> Result<Vec<TokenSeq>>;
}

impl<T: Float> Translator<T> for EStep {
    fn translate(
        &self,
        model: &Model<T>,
        srcs: &[&TokenSeq],
        from: LanguageId,
        to: LanguageId,
    ) -> Result<Vec<TokenSeq>> {
        let max_len = model.config().max_len;
        let limits: Vec<usize> = srcs
            .iter()
            .map(|s| decode_limit(s.len(), max_len))
            .collect();
        match *self {
            EStep::Greedy => Ok(greedy_decode_batch(model, srcs, from, to, &limits)?
                .into_iter()
                .map(|h| h.tokens)
                .collect()),
            EStep::Beam(k) => srcs
                .iter()
                .zip(&limits)
                .map(|(s, &l)| Ok(beam_decode(model, s, from, to, l, k)?.tokens))
                .collect(),
        }
    }
}

pub fn mass_objective(batch: &[MaskedExample], lang: LanguageId) -> Result<Objective> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(Objective {
        kind: LossKind::Mass,
        src: lang,
        tgt: lang,
        pivot: None,
        enc_lang: lang,
        dec_lang: lang,
        pairs: batch
            .iter()
            .map(|m| (m.input.clone(), m.target.clone()))
            .collect(),
        skipped: 0,
    })
}

/// `x → y` and `y → x` cross-entropy objectives over a parallel batch.
pub fn supervised_objectives(
    pairs: &[(TokenSeq, TokenSeq)],
    lang_x: LanguageId,
    lang_y: LanguageId,
) -> Result<[Objective; 2]> {
    if pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let one = |a: LanguageId, b: LanguageId, data: Vec<(TokenSeq, TokenSeq)>| Objective {
        kind: LossKind::Sup,
        src: a,
        tgt: b,
        pivot: None,
        enc_lang: a,
        dec_lang: b,
        pairs: data,
        skipped: 0,
    };
    Ok([
        one(lang_x, lang_y, pairs.to_vec()),
        one(
            lang_y,
            lang_x,
            pairs.iter().map(|(x, y)| (y.clone(), x.clone())).collect(),
        ),
    ])
}

/// Translates `xs` (language `lang_d`) into `other` and pairs each output,
/// as fixed data, with the sentence it came from.
pub fn bt_objective<T: Float>(
    model: &Model<T>,
    translator: &dyn Translator<T>,
    xs: &[TokenSeq],
    lang_d: LanguageId,
    other: LanguageId,
) -> Result<Objective> {
    if lang_d == other {
        return Err(Error::Config(format!(
            "back-translation through the same language {lang_d}"
        )));
    }
    if xs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let refs: Vec<&TokenSeq> = xs.iter().collect();
    let hyps = translator.translate(model, &refs, lang_d, other)?;
    let (pairs, skipped) = keep_nonempty(hyps.into_iter().zip(xs.iter().cloned()));
    Ok(Objective {
        kind: LossKind::Bt,
        src: lang_d,
        tgt: other,
        pivot: None,
        enc_lang: other,
        dec_lang: lang_d,
        pairs,
        skipped,
    })
}

/// One cross-translation direction: `x → ẑ` through `pivot`, then score
/// `y` given `ẑ`.
pub fn ct_objective<T: Float>(
    model: &Model<T>,
    translator: &dyn Translator<T>,
    pairs: &[(TokenSeq, TokenSeq)],
    lang_x: LanguageId,
    lang_y: LanguageId,
    pivot: LanguageId,
) -> Result<Objective> {
    if pivot == lang_x || pivot == lang_y {
        return Err(Error::Config(format!(
            "pivot {pivot} must differ from {lang_x} and {lang_y}"
        )));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let refs: Vec<&TokenSeq> = pairs.iter().map(|p| &p.0).collect();
    let hyps = translator.translate(model, &refs, lang_x, pivot)?;
    let (data, skipped) = keep_nonempty(hyps.into_iter().zip(pairs.iter().map(|p| p.1.clone())));
    Ok(Objective {
        kind: LossKind::Ct,
        src: lang_x,
        tgt: lang_y,
        pivot: Some(pivot),
        enc_lang: pivot,
        dec_lang: lang_y,
        pairs: data,
        skipped,
    })
}

fn keep_nonempty(
    it: impl Iterator<Item = (TokenSeq, TokenSeq)>,
) -> (Vec<(TokenSeq, TokenSeq)>, usize) {
    let mut skipped = 0;
    let pairs = it
        .filter(|(h, _)| {
            let keep = !h.is_empty();
            skipped += usize::from(!keep);
            keep
        })
        .collect();
    (pairs, skipped)
}

fn evaluate_or_skip<T: Float>(obj: &Objective, model: &Model<T>) -> Result<LossRecord> {
    if obj.is_empty() {
        return Err(Error::EmptyBatch);
    }
    obj.evaluate(model)
}

pub fn mass_loss<T: Float>(
    model: &Model<T>,
    batch: &[MaskedExample],
    lang: LanguageId,
) -> Result<LossRecord> {
    mass_objective(batch, lang)?.evaluate(model)
}

pub fn supervised_loss<T: Float>(
    model: &Model<T>,
    pairs: &[(TokenSeq, TokenSeq)],
    lang_x: LanguageId,
    lang_y: LanguageId,
) -> Result<(LossRecord, LossRecord)> {
    let [a, b] = supervised_objectives(pairs, lang_x, lang_y)?;
    Ok((a.evaluate(model)?, b.evaluate(model)?))
}

pub fn bt_loss<T: Float>(
    model: &Model<T>,
    translator: &dyn Translator<T>,
    xs: &[TokenSeq],
    lang_d: LanguageId,
    other: LanguageId,
) -> Result<LossRecord> {
    evaluate_or_skip(&bt_objective(model, translator, xs, lang_d, other)?, model)
}

/// Both cross-translation directions: `x → ẑ → y` and `y → ẑ → x`.
pub fn ct_loss<T: Float>(
    model: &Model<T>,
    translator: &dyn Translator<T>,
    pairs: &[(TokenSeq, TokenSeq)],
    lang_x: LanguageId,
    lang_y: LanguageId,
    pivot: LanguageId,
) -> Result<(LossRecord, LossRecord)> {
    let fwd = ct_objective(model, translator, pairs, lang_x, lang_y, pivot)?;
    let swapped: Vec<_> = pairs.iter().map(|(x, y)| (y.clone(), x.clone())).collect();
    let bwd = ct_objective(model, translator, &swapped, lang_y, lang_x, pivot)?;
    Ok((
        evaluate_or_skip(&fwd, model)?,
        evaluate_or_skip(&bwd, model)?,
    ))
}
