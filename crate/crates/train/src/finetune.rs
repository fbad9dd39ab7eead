use lingua_core::{LanguageId, TokenSeq};
use lingua_model::Float;

use crate::data::{mono_batch, parallel_batch, sample_tokens, stream, BATCH};
use crate::objectives::{bt_objective, ct_objective};
use crate::{Ablation, Dataset, Error, Metrics, Objective, Outcome, Result, Session, TrainState};

/// One update within a fine-tuning sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    /// Back-translate the batch of monolingual `dataset` (language `lang`)
    /// through `other`.
    Bt {
        dataset: usize,
        lang: LanguageId,
        other: LanguageId,
    },
    /// Translate `x` into `pivot`, then score `y` given the pivot sentence.
    Ct {
        dataset: usize,
        x: LanguageId,
        y: LanguageId,
        pivot: LanguageId,
    },
}

/// The updates of one sweep over the datasets, in declaration order.
pub fn sweep_plan(
    datasets: &[Dataset],
    ablation: Ablation,
    target_pair: (LanguageId, LanguageId),
    num_languages: usize,
) -> Result<Vec<Slot>> {
    let langs: Vec<LanguageId> = (0..num_languages as u16).map(LanguageId).collect();
    let targets = [target_pair.0, target_pair.1];
    let mut plan = Vec::new();
    let mut has_parallel = false;
    for (i, d) in datasets.iter().enumerate() {
        match d {
            Dataset::Mono(c) => {
                let lang = c.language;
                let others: Vec<LanguageId> = match ablation {
                    Ablation::Bt if !targets.contains(&lang) => continue,
                    Ablation::Bt => targets.iter().copied().filter(|&l| l != lang).collect(),
                    Ablation::MBt | Ablation::Full => {
                        langs.iter().copied().filter(|&l| l != lang).collect()
                    }
                };
                plan.extend(others.into_iter().map(|other| Slot::Bt {
                    dataset: i,
                    lang,
                    other,
                }));
            }
            Dataset::Parallel(c) if ablation == Ablation::Full => {
                has_parallel = true;
                let (x, y) = (c.src_language, c.tgt_language);
                for pivot in langs.iter().copied().filter(|&l| l != x && l != y) {
                    plan.push(Slot::Ct {
                        dataset: i,
                        x,
                        y,
                        pivot,
                    });
                    plan.push(Slot::Ct {
                        dataset: i,
                        x: y,
                        y: x,
                        pivot,
                    });
                }
            }
            Dataset::Parallel(_) => {}
        }
    }
    if ablation == Ablation::Full && !has_parallel {
        return Err(Error::Config(
            "FULL fine-tuning needs a parallel dataset".into(),
        ));
    }
    if plan.is_empty() {
        return Err(Error::Config(format!(
            "no {ablation} updates are possible with these datasets"
        )));
    }
    Ok(plan)
}

/// Runs fine-tuning to `cfg.steps` or until early stopping.
pub fn finetune<T: Float>(
    state: &mut TrainState<T>,
    session: &Session<'_>,
    metrics: &mut Metrics,
) -> Result<Outcome> {
    finetune_until(state, session, metrics, session.cfg.steps)
}

/// Fine-tuning: repeated sweeps over the datasets in fixed order. Each
/// dataset draws one batch per sweep, shared by all of its slots; every slot
/// decodes with the current parameters and makes one optimizer update.
pub fn finetune_until<T: Float>(
    state: &mut TrainState<T>,
    session: &Session<'_>,
    metrics: &mut Metrics,
    stop: u64,
) -> Result<Outcome> {
    let cfg = session.cfg;
    cfg.validate()?;
    let plan = sweep_plan(
        session.datasets,
        cfg.ablation,
        session.target_pair,
        state.model.config().num_languages,
    )?;
    let stop = stop.min(cfg.steps);
    let start = state.step;
    let mut early_stopped = false;
    while state.step < stop {
        let sweep = state.step / plan.len() as u64;
        let slot = plan[(state.step % plan.len() as u64) as usize];
        let obj = slot_objective(state, session, slot, sweep)?;
        if obj.is_empty() {
            state.skip();
        } else {
            let w = match slot {
                Slot::Bt { .. } => cfg.weights.bt,
                Slot::Ct { .. } => cfg.weights.ct,
            };
            state.update(cfg, &[(&obj, w)], metrics)?;
        }
        if state.after_step(session, metrics, true)? {
            early_stopped = true;
            break;
        }
    }
    metrics.flush()?;
    Ok(Outcome {
        steps_run: state.step - start,
        early_stopped,
    })
}

fn slot_objective<T: Float>(
    state: &TrainState<T>,
    session: &Session<'_>,
    slot: Slot,
    sweep: u64,
) -> Result<Objective> {
    let budget = session.cfg.batch_size;
    let translator = &session.cfg.estep;
    let dataset = match slot {
        Slot::Bt { dataset, .. } | Slot::Ct { dataset, .. } => dataset,
    };
    let mut rng = stream(state.seed, BATCH, (sweep << 16) | dataset as u64);
    match (slot, &session.datasets[dataset]) {
        (Slot::Bt { lang, other, .. }, Dataset::Mono(c)) => {
            let lines = c.lines();
            let ids = sample_tokens(&mut rng, |i| lines[i].len(), lines.len(), budget);
            bt_objective(&state.model, translator, &mono_batch(c, &ids), lang, other)
        }
        (Slot::Ct { x, y, pivot, .. }, Dataset::Parallel(c)) => {
            let pairs = c.pairs();
            let ids = sample_tokens(&mut rng, |i| pairs[i].0.len(), pairs.len(), budget);
            let mut batch = parallel_batch(c, &ids);
            if x != c.src_language {
                batch = batch
                    .into_iter()
                    .map(|(a, b): (TokenSeq, TokenSeq)| (b, a))
                    .collect();
            }
            ct_objective(&state.model, translator, &batch, x, y, pivot)
        }
        _ => unreachable!("sweep plan pairs slots with matching datasets"),
    }
}
