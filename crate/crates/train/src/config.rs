use std::fmt;
use std::str::FromStr;

use crate::objectives::EStep;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Pretrain,
    Finetune,
}

/// Which fine-tuning terms are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ablation {
    /// Back-translation between the two target languages only.
    Bt,
    /// Back-translation in every direction between all languages.
    MBt,
    /// `MBt` plus cross-translation on the parallel corpora.
    Full,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::Bt, Ablation::MBt, Ablation::Full];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Bt => "BT",
            Ablation::MBt => "M-BT",
            Ablation::Full => "FULL",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "bt" => Ok(Ablation::Bt),
            "m_bt" | "mbt" => Ok(Ablation::MBt),
            "full" => Ok(Ablation::Full),
            _ => Err(Error::Config(format!(
                "unknown ablation {s:?} (expected bt, m_bt or full)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Adamax,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(OptimizerKind::Adam),
            "adamax" => Ok(OptimizerKind::Adamax),
            _ => Err(Error::Config(format!("unknown optimizer {s:?}"))),
        }
    }
}

/// Multipliers applied to each loss kind before its update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub mass: f64,
    pub sup: f64,
    pub bt: f64,
    pub ct: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mass: 1.0,
            sup: 1.0,
            bt: 1.0,
            ct: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub phase: Phase,
    pub ablation: Ablation,
    pub steps: u64,
    /// Sentences per batch when pre-training, source tokens when fine-tuning.
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub total_decay_steps: u64,
    pub weight_decay: f64,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// 0 disables periodic evaluation.
    pub eval_every: u64,
    /// 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
    /// Stop after this many evaluations without dev improvement; 0 never stops.
    pub patience: usize,
    pub weights: LossWeights,
    pub estep: EStep,
    /// Relative dataset-pick weights for pre-training; empty means uniform.
    pub dataset_weights: Vec<f64>,
}

impl TrainConfig {
    /// Desk-scale pre-training: Adam with decoupled weight decay 0.01.
    pub fn pretrain_desk() -> Self {
        Self {
            phase: Phase::Pretrain,
            ablation: Ablation::Full,
            steps: 2000,
            batch_size: 32,
            base_lr: 1e-3,
            warmup_steps: 200,
            total_decay_steps: 2000,
            weight_decay: 0.01,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 1,
            eval_every: 0,
            checkpoint_every: 500,
            patience: 0,
            weights: LossWeights::default(),
            estep: EStep::Greedy,
            dataset_weights: Vec::new(),
        }
    }

    /// Desk-scale fine-tuning: Adamax without weight decay.
    pub fn finetune_desk() -> Self {
        Self {
            phase: Phase::Finetune,
            steps: 2000,
            batch_size: 512,
            base_lr: 5e-4,
            warmup_steps: 100,
            total_decay_steps: 2000,
            weight_decay: 0.0,
            optimizer: OptimizerKind::Adamax,
            eval_every: 250,
            checkpoint_every: 500,
            ..Self::pretrain_desk()
        }
    }

    /// Full-scale pre-training schedule: 1.2M steps, 4000 warmup steps to 2e-4.
    pub fn pretrain_full_scale() -> Self {
        Self {
            steps: 1_200_000,
            batch_size: 1024,
            base_lr: 2e-4,
            warmup_steps: 4000,
            total_decay_steps: 1_200_000,
            ..Self::pretrain_desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.steps < 1 {
            return bad("steps must be at least 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if self.warmup_steps > self.total_decay_steps {
            return bad("warmup_steps exceeds total_decay_steps");
        }
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return bad("base_lr must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) || self.weight_decay < 0.0 {
            return bad("eps must be positive and weight_decay non-negative");
        }
        if self
            .dataset_weights
            .iter()
            .any(|w| !(*w >= 0.0 && w.is_finite()))
        {
            return bad("dataset weights must be finite and non-negative");
        }
        if let EStep::Beam(0) = self.estep {
            return bad("beam size must be at least 1");
        }
        Ok(())
    }
}
