use std::path::Path;

use lingua_core::{LanguageId, TokenSeq};
use lingua_eval::{evaluate_pair, DecodeMode};
use lingua_model::checkpoint::{put_f64, put_u64, read_tensors, write_tensors, Reader};
use lingua_model::{Dropout, Float, Gradients, Model, ModelConfig};

use crate::error::io_err;
use crate::objectives::joint_gradients;
use crate::{
    lr_at, Dataset, Error, MetricRow, Metrics, Objective, Optimizer, OptimizerKind, Result,
    TrainConfig,
};

const MAGIC: &[u8; 8] = b"LNGTRAIN";
const VERSION: u32 = 1;

/// Everything needed to continue a run. Random streams are derived from
/// `seed` and `step`, so no generator state needs saving.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<T> {
    pub step: u64,
    pub seed: u64,
    pub model: Model<T>,
    pub optimizer: Optimizer<T>,
    pub best_dev: Option<f64>,
    pub bad_evals: u64,
}

/// Held-out pairs scored every `eval_every` steps.
pub struct DevSet {
    pub directions: Vec<(LanguageId, LanguageId, Vec<(TokenSeq, TokenSeq)>)>,
    pub mode: DecodeMode,
}

/// Data and settings shared by a training run.
pub struct Session<'a> {
    pub datasets: &'a [Dataset],
    pub cfg: &'a TrainConfig,
    /// The unsupervised pair; BT-only fine-tuning is restricted to it.
    pub target_pair: (LanguageId, LanguageId),
    pub dev: Option<&'a DevSet>,
    /// Overwritten every `checkpoint_every` steps when set.
    pub checkpoint: Option<&'a Path>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub steps_run: u64,
    pub early_stopped: bool,
}

impl<T: Float> TrainState<T> {
    pub fn new(model: Model<T>, cfg: &TrainConfig) -> Self {
        let optimizer = Optimizer::from_config(cfg, model.params());
        Self {
            step: 0,
            seed: cfg.seed,
            model,
            optimizer,
            best_dev: None,
            bad_evals: 0,
        }
    }

    /// One optimizer update on the weighted sum of `terms`, logged at the
    /// new step number.
    pub(crate) fn update(
        &mut self,
        cfg: &TrainConfig,
        terms: &[(&Objective, f64)],
        metrics: &mut Metrics,
    ) -> Result<()> {
        let next = self.step + 1;
        let mut rng = crate::data::stream(self.seed, crate::data::DROPOUT, next);
        let rate = self.model.config().dropout_rate;
        let mut dropout = Dropout::on(rate, &mut rng);
        let (records, grads): (_, Gradients<T>) =
            joint_gradients(&self.model, terms, &mut dropout)?;
        self.optimizer
            .update(self.model.params_mut(), &grads, lr_at(next, cfg))?;
        self.step = next;
        for r in records {
            metrics.loss(next, r)?;
        }
        Ok(())
    }

    /// Advances the step counter without touching parameters, for slots
    /// whose data was entirely skipped.
    pub(crate) fn skip(&mut self) {
        self.step += 1;
    }

    /// Periodic evaluation and checkpointing after a step. Returns true when
    /// early stopping triggers.
    pub(crate) fn after_step(
        &mut self,
        session: &Session<'_>,
        metrics: &mut Metrics,
        early_stop: bool,
    ) -> Result<bool> {
        let cfg = session.cfg;
        let mut stop = false;
        if let Some(dev) = session.dev {
            if cfg.eval_every > 0 && self.step % cfg.eval_every == 0 {
                let mut sum = 0.0;
                for (src, tgt, pairs) in &dev.directions {
                    let max_len = self.model.config().max_len;
                    let ev = evaluate_pair(&self.model, pairs, *src, *tgt, dev.mode, max_len)?;
                    sum += ev.report.score;
                    metrics.push(MetricRow::Eval {
                        step: self.step,
                        direction: format!("{src}-{tgt}"),
                        bleu: ev.report.score,
                    })?;
                }
                let mean = sum / dev.directions.len().max(1) as f64;
                if self.best_dev.map_or(true, |b| mean > b) {
                    self.best_dev = Some(mean);
                    self.bad_evals = 0;
                } else {
                    self.bad_evals += 1;
                }
                stop = early_stop && cfg.patience > 0 && self.bad_evals >= cfg.patience as u64;
            }
        }
        if let Some(path) = session.checkpoint {
            if cfg.checkpoint_every > 0 && self.step % cfg.checkpoint_every == 0 {
                self.save(path)?;
            }
        }
        Ok(stop)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_u64(&mut out, self.seed);
        put_u64(&mut out, self.step);
        out.push(u8::from(self.best_dev.is_some()));
        put_f64(&mut out, self.best_dev.unwrap_or(0.0));
        put_u64(&mut out, self.bad_evals);
        self.model.write_to(&mut out);
        let o = &self.optimizer;
        out.push(match o.kind {
            OptimizerKind::Adam => 0,
            OptimizerKind::Adamax => 1,
        });
        for v in [o.beta1, o.beta2, o.eps, o.weight_decay] {
            put_f64(&mut out, v);
        }
        put_u64(&mut out, o.t);
        let names = self.model.layout().specs.iter();
        write_tensors(
            &mut out,
            names.clone().map(|s| format!("{}.m", s.name)),
            &o.m,
        );
        write_tensors(&mut out, names.map(|s| format!("{}.v", s.name)), &o.v);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(MAGIC, "training checkpoint")?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {version} is not supported (expected {VERSION})"
            )));
        }
        let seed = r.u64()?;
        let step = r.u64()?;
        let has_best = r.u8()?;
        let best = r.f64()?;
        let bad_evals = r.u64()?;
        let model = Model::<T>::read_from(&mut r)?;
        let kind = match r.u8()? {
            0 => OptimizerKind::Adam,
            1 => OptimizerKind::Adamax,
            k => return Err(Error::Checkpoint(format!("unknown optimizer tag {k}"))),
        };
        let (beta1, beta2, eps, weight_decay) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let t = r.u64()?;
        let specs = &model.layout().specs;
        let expect = |suffix: &str| -> Vec<(String, usize, usize)> {
            specs
                .iter()
                .map(|s| (format!("{}.{suffix}", s.name), s.rows, s.cols))
                .collect()
        };
        let m = read_tensors(&mut r, &expect("m"))?;
        let v = read_tensors(&mut r, &expect("v"))?;
        if !r.is_empty() {
            return Err(Error::Checkpoint(
                "trailing bytes after training state".into(),
            ));
        }
        Ok(Self {
            step,
            seed,
            model,
            optimizer: Optimizer {
                kind,
                beta1,
                beta2,
                eps,
                weight_decay,
                t,
                m,
                v,
            },
            best_dev: (has_best != 0).then_some(best),
            bad_evals,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(io_err(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(io_err(path))?)
    }

    /// Loads a checkpoint and checks it was written for `expected`.
    pub fn load_expecting(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Self> {
        let state = Self::load(path)?;
        check_config(state.model.config(), expected)?;
        Ok(state)
    }
}

pub fn check_config(found: &ModelConfig, expected: &ModelConfig) -> Result<()> {
    if found != expected {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint has {found:?}, expected {expected:?}"
        )));
    }
    Ok(())
}
