//! The experiment configuration: a flat `key = value` text file.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default, so an empty file is a valid configuration; unknown keys are
//! errors. [`ExperimentConfig::to_text`] writes every key, which is what
//! runs freeze next to their outputs.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lingua_core::{LanguageId, WorldConfig};
use lingua_eval::DecodeMode;
use lingua_model::{ModelConfig, Precision};
use lingua_train::{Ablation, EStep, OptimizerKind, TrainConfig};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub decode: DecodeMode,
    /// `test` or `dev`.
    pub split: String,
    /// Directions to score; empty means both directions of the target pair.
    pub directions: Vec<(LanguageId, LanguageId)>,
    /// Model to evaluate, relative to the output directory.
    pub checkpoint: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub world: WorldConfig,
    pub model: ModelConfig,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub eval: EvalConfig,
    pub oracle_trials: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let world = WorldConfig::default();
        let vocab = vocab_size(&world);
        Self {
            seed: 1,
            output_dir: PathBuf::from("runs/default"),
            model: ModelConfig::desk(vocab, world.num_languages),
            world,
            pretrain: TrainConfig::pretrain_desk(),
            finetune: TrainConfig::finetune_desk(),
            eval: EvalConfig {
                decode: DecodeMode::Greedy,
                split: "test".into(),
                directions: Vec::new(),
                checkpoint: PathBuf::from("finetune-full/model.bin"),
            },
            oracle_trials: 1000,
        }
    }
}

/// Reserved tokens plus one private inventory per language.
pub fn vocab_size(w: &WorldConfig) -> usize {
    lingua_core::vocab::RESERVED.len() + w.num_languages * w.vocab_per_language
}

fn context(e: Error, at: &str) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("{at}: {m}")),
        e => e,
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_pair(key: &str, value: &str) -> Result<(u16, u16)> {
    match value.split(',').map(str::trim).collect::<Vec<_>>()[..] {
        [a, b] => Ok((parse(key, a)?, parse(key, b)?)),
        _ => Err(Error::Config(format!(
            "{key}: expected two comma-separated languages, got {value:?}"
        ))),
    }
}

fn parse_language(key: &str, s: &str) -> Result<LanguageId> {
    let digits = s.trim().trim_start_matches(['L', 'l']);
    Ok(LanguageId(parse(key, digits)?))
}

fn parse_directions(key: &str, value: &str) -> Result<Vec<(LanguageId, LanguageId)>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|d| match d.split_once('-') {
            Some((a, b)) => Ok((parse_language(key, a)?, parse_language(key, b)?)),
            None => Err(Error::Config(format!(
                "{key}: direction {d:?} is not of the form L0-L2"
            ))),
        })
        .collect()
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_estep(key: &str, value: &str) -> Result<EStep> {
    match value.trim() {
        "greedy" => Ok(EStep::Greedy),
        v => match v.strip_prefix("beam:") {
            Some(n) => Ok(EStep::Beam(parse(key, n)?)),
            None => Err(Error::Config(format!(
                "{key}: expected greedy or beam:N, got {value:?}"
            ))),
        },
    }
}

fn estep_text(e: EStep) -> String {
    match e {
        EStep::Greedy => "greedy".into(),
        EStep::Beam(n) => format!("beam:{n}"),
    }
}

fn decode_text(d: DecodeMode) -> String {
    match d {
        DecodeMode::Greedy => "greedy".into(),
        DecodeMode::Beam(n) => format!("beam:{n}"),
    }
}

fn list_text(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn optimizer_text(o: OptimizerKind) -> &'static str {
    match o {
        OptimizerKind::Adam => "adam",
        OptimizerKind::Adamax => "adamax",
    }
}

fn train_entries(prefix: &str, t: &TrainConfig) -> Vec<(String, String)> {
    let mut e = vec![
        ("steps", t.steps.to_string()),
        ("batch_size", t.batch_size.to_string()),
        ("lr", t.base_lr.to_string()),
        ("warmup_steps", t.warmup_steps.to_string()),
        ("total_decay_steps", t.total_decay_steps.to_string()),
        ("weight_decay", t.weight_decay.to_string()),
        ("optimizer", optimizer_text(t.optimizer).into()),
        ("beta1", t.beta1.to_string()),
        ("beta2", t.beta2.to_string()),
        ("eps", t.eps.to_string()),
        ("eval_every", t.eval_every.to_string()),
        ("checkpoint_every", t.checkpoint_every.to_string()),
        ("patience", t.patience.to_string()),
        ("weight.mass", t.weights.mass.to_string()),
        ("weight.sup", t.weights.sup.to_string()),
        ("weight.bt", t.weights.bt.to_string()),
        ("weight.ct", t.weights.ct.to_string()),
        ("dataset_weights", list_text(&t.dataset_weights)),
        ("estep", estep_text(t.estep)),
    ];
    if prefix == "finetune" {
        e.push((
            "ablation",
            t.ablation.name().to_ascii_lowercase().replace('-', "_"),
        ));
    }
    e.into_iter()
        .map(|(k, v)| (format!("{prefix}.{k}"), v))
        .collect()
}

fn set_train(t: &mut TrainConfig, key: &str, field: &str, v: &str) -> Result<bool> {
    match field {
        "steps" => t.steps = parse(key, v)?,
        "batch_size" => t.batch_size = parse(key, v)?,
        "lr" => t.base_lr = parse(key, v)?,
        "warmup_steps" => t.warmup_steps = parse(key, v)?,
        "total_decay_steps" => t.total_decay_steps = parse(key, v)?,
        "weight_decay" => t.weight_decay = parse(key, v)?,
        "optimizer" => t.optimizer = parse(key, v)?,
        "beta1" => t.beta1 = parse(key, v)?,
        "beta2" => t.beta2 = parse(key, v)?,
        "eps" => t.eps = parse(key, v)?,
        "eval_every" => t.eval_every = parse(key, v)?,
        "checkpoint_every" => t.checkpoint_every = parse(key, v)?,
        "patience" => t.patience = parse(key, v)?,
        "weight.mass" => t.weights.mass = parse(key, v)?,
        "weight.sup" => t.weights.sup = parse(key, v)?,
        "weight.bt" => t.weights.bt = parse(key, v)?,
        "weight.ct" => t.weights.ct = parse(key, v)?,
        "dataset_weights" => t.dataset_weights = parse_list(key, v)?,
        "estep" => t.estep = parse_estep(key, v)?,
        "ablation" if t.phase == lingua_train::Phase::Finetune => {
            t.ablation = parse::<Ablation>(key, v)?
        }
        _ => return Ok(false),
    }
    Ok(true)
}

impl ExperimentConfig {
    /// Every key with its current value, in file order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let w = &self.world;
        let m = &self.model;
        let mut e: Vec<(String, String)> = [
            ("seed", self.seed.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
            ("world.num_languages", w.num_languages.to_string()),
            ("world.vocab_per_language", w.vocab_per_language.to_string()),
            ("world.min_len", w.min_len.to_string()),
            ("world.max_len", w.max_len.to_string()),
            ("world.mono_lines", w.mono_lines.to_string()),
            ("world.parallel_lines", w.parallel_lines.to_string()),
            ("world.test_lines", w.test_lines.to_string()),
            ("world.dev_lines", w.dev_lines.to_string()),
            (
                "world.parallel_pair",
                format!("{},{}", w.parallel_pair.0, w.parallel_pair.1),
            ),
            (
                "world.target_pair",
                format!("{},{}", w.target_pair.0, w.target_pair.1),
            ),
            ("world.reorder_language", w.reorder_language.to_string()),
            ("world.length_cap", w.length_cap.to_string()),
            ("model.num_layers", m.num_layers.to_string()),
            ("model.hidden_dim", m.hidden_dim.to_string()),
            ("model.ffn_dim", m.ffn_dim.to_string()),
            ("model.num_heads", m.num_heads.to_string()),
            ("model.max_len", m.max_len.to_string()),
            ("model.dropout_rate", m.dropout_rate.to_string()),
            ("model.precision", (m.precision.bytes() * 8).to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        e.extend(train_entries("pretrain", &self.pretrain));
        e.extend(train_entries("finetune", &self.finetune));
        let dirs: Vec<String> = self
            .eval
            .directions
            .iter()
            .map(|(a, b)| format!("{a}-{b}"))
            .collect();
        e.extend(
            [
                ("eval.decode", decode_text(self.eval.decode)),
                ("eval.split", self.eval.split.clone()),
                ("eval.directions", dirs.join(",")),
                (
                    "eval.checkpoint",
                    self.eval.checkpoint.display().to_string(),
                ),
                ("oracle.trials", self.oracle_trials.to_string()),
            ]
            .map(|(k, v)| (k.to_string(), v)),
        );
        e
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let w = &mut self.world;
        let m = &mut self.model;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "world.num_languages" => w.num_languages = parse(key, v)?,
            "world.vocab_per_language" => w.vocab_per_language = parse(key, v)?,
            "world.min_len" => w.min_len = parse(key, v)?,
            "world.max_len" => w.max_len = parse(key, v)?,
            "world.mono_lines" => w.mono_lines = parse(key, v)?,
            "world.parallel_lines" => w.parallel_lines = parse(key, v)?,
            "world.test_lines" => w.test_lines = parse(key, v)?,
            "world.dev_lines" => w.dev_lines = parse(key, v)?,
            "world.parallel_pair" => w.parallel_pair = parse_pair(key, v)?,
            "world.target_pair" => w.target_pair = parse_pair(key, v)?,
            "world.reorder_language" => w.reorder_language = parse(key, v)?,
            "world.length_cap" => w.length_cap = parse(key, v)?,
            "model.num_layers" => m.num_layers = parse(key, v)?,
            "model.hidden_dim" => m.hidden_dim = parse(key, v)?,
            "model.ffn_dim" => m.ffn_dim = parse(key, v)?,
            "model.num_heads" => m.num_heads = parse(key, v)?,
            "model.max_len" => m.max_len = parse(key, v)?,
            "model.dropout_rate" => m.dropout_rate = parse(key, v)?,
            "model.precision" => {
                m.precision = match v {
                    "32" => Precision::F32,
                    "64" => Precision::F64,
                    _ => {
                        return Err(Error::Config(format!(
                            "{key}: expected 32 or 64, got {v:?}"
                        )))
                    }
                }
            }
            "eval.decode" => {
                self.eval.decode = match v {
                    "greedy" => DecodeMode::Greedy,
                    _ => match v.strip_prefix("beam:") {
                        Some(n) => DecodeMode::Beam(parse(key, n)?),
                        None => {
                            return Err(Error::Config(format!(
                                "{key}: expected greedy or beam:N, got {v:?}"
                            )))
                        }
                    },
                }
            }
            "eval.split" => match v {
                "test" | "dev" => self.eval.split = v.to_string(),
                _ => {
                    return Err(Error::Config(format!(
                        "{key}: expected test or dev, got {v:?}"
                    )))
                }
            },
            "eval.directions" => self.eval.directions = parse_directions(key, v)?,
            "eval.checkpoint" => self.eval.checkpoint = PathBuf::from(v),
            "oracle.trials" => self.oracle_trials = parse(key, v)?,
            _ => {
                let handled = match key.split_once('.') {
                    Some(("pretrain", field)) => set_train(&mut self.pretrain, key, field, v)?,
                    Some(("finetune", field)) => set_train(&mut self.finetune, key, field, v)?,
                    _ => false,
                };
                if !handled {
                    return Err(Error::Config(format!("unknown key {key:?}")));
                }
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{origin}:{}: expected key = value, got {line:?}",
                    n + 1
                ))
            })?;
            self.set(k.trim(), v)
                .map_err(|e| context(e, &format!("{origin}:{}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text, "<config>")?;
        c.resolve()?;
        Ok(c)
    }

    /// Defaults, then the file (if any), then `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut c = Self::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
            c.apply_text(&text, &p.display().to_string())?;
        }
        for (k, v) in overrides {
            c.set(k, v).map_err(|e| context(e, &format!("--{k}")))?;
        }
        c.resolve()?;
        Ok(c)
    }

    /// Fills derived fields and checks cross-section consistency.
    pub fn resolve(&mut self) -> Result<()> {
        self.world
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.model.vocab_size = vocab_size(&self.world);
        self.model.num_languages = self.world.num_languages;
        self.model
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.world.max_len > self.model.max_len {
            return Err(Error::Config(format!(
                "world.max_len {} exceeds model.max_len {}",
                self.world.max_len, self.model.max_len
            )));
        }
        for t in [&mut self.pretrain, &mut self.finetune] {
            t.seed = self.seed;
            t.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        let k = self.world.num_languages as u16;
        if let Some((a, b)) = self
            .eval
            .directions
            .iter()
            .find(|(a, b)| a.0 >= k || b.0 >= k || a == b)
        {
            return Err(Error::Config(format!(
                "eval direction {a}-{b} is not a pair of distinct languages"
            )));
        }
        if let DecodeMode::Beam(0) = self.eval.decode {
            return Err(Error::Config(
                "eval.decode beam width must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    /// Scored directions: the configured ones, or both target-pair directions.
    pub fn eval_directions(&self) -> Vec<(LanguageId, LanguageId)> {
        if self.eval.directions.is_empty() {
            let (a, b) = self.world.target_pair;
            vec![
                (LanguageId(a), LanguageId(b)),
                (LanguageId(b), LanguageId(a)),
            ]
        } else {
            self.eval.directions.clone()
        }
    }
}
