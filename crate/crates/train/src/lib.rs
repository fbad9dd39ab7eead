//! Loss terms, optimizers, the learning-rate schedule, and the pre-training
//! and fine-tuning loops.

pub mod config;
pub mod data;
pub mod error;
pub mod finetune;
pub mod metrics;
pub mod objectives;
pub mod optim;
pub mod pretrain;
pub mod schedule;
pub mod state;

pub use config::{Ablation, LossWeights, OptimizerKind, Phase, TrainConfig};
pub use data::Dataset;
pub use error::{Error, Result};
pub use finetune::{finetune, finetune_until, sweep_plan, Slot};
pub use metrics::{MetricRow, Metrics};
pub use objectives::{
    bt_loss, bt_objective, ct_loss, ct_objective, mass_loss, mass_objective, supervised_loss,
    supervised_objectives, EStep, LossKind, LossRecord, Objective, Translator,
};
pub use optim::Optimizer;
pub use pretrain::{picked_dataset, pretrain, pretrain_until};
pub use schedule::lr_at;
pub use state::{DevSet, Outcome, Session, TrainState};
