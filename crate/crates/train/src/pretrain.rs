use rand::distributions::{Distribution, WeightedIndex};

use lingua_core::{mass_mask, MaskConfig};
use lingua_model::Float;

use crate::data::{mono_batch, parallel_batch, sample_lines, stream, PICK};
use crate::objectives::{mass_objective, supervised_objectives};
use crate::{Dataset, Error, Metrics, Outcome, Result, Session, TrainState};

/// Runs pre-training to `cfg.steps`.
pub fn pretrain<T: Float>(
    state: &mut TrainState<T>,
    session: &Session<'_>,
    metrics: &mut Metrics,
) -> Result<Outcome> {
    pretrain_until(state, session, metrics, session.cfg.steps)
}

/// Runs pre-training steps until `state.step` reaches `stop` (capped at
/// `cfg.steps`). Each step picks a dataset at random: a monolingual corpus
/// gives a MASS update, a parallel corpus one update on the sum of both
/// translation directions.
pub fn pretrain_until<T: Float>(
    state: &mut TrainState<T>,
    session: &Session<'_>,
    metrics: &mut Metrics,
    stop: u64,
) -> Result<Outcome> {
    let cfg = session.cfg;
    cfg.validate()?;
    let datasets = session.datasets;
    if datasets.is_empty() {
        return Err(Error::Config(
            "pre-training needs at least one dataset".into(),
        ));
    }
    let weights = if cfg.dataset_weights.is_empty() {
        vec![1.0; datasets.len()]
    } else if cfg.dataset_weights.len() == datasets.len() {
        cfg.dataset_weights.clone()
    } else {
        return Err(Error::Config(format!(
            "{} dataset weights for {} datasets",
            cfg.dataset_weights.len(),
            datasets.len()
        )));
    };
    let pick =
        WeightedIndex::new(&weights).map_err(|e| Error::Config(format!("dataset weights: {e}")))?;
    let mask_cfg = MaskConfig::default();
    let stop = stop.min(cfg.steps);
    let start = state.step;
    while state.step < stop {
        let mut rng = stream(state.seed, PICK, state.step + 1);
        let d = pick.sample(&mut rng);
        match &datasets[d] {
            Dataset::Mono(c) => {
                let lines = mono_batch(c, &sample_lines(&mut rng, c.len(), cfg.batch_size));
                let masked = lines
                    .iter()
                    .filter(|l| l.len() >= 2)
                    .map(|l| mass_mask(l, &mask_cfg, &mut rng))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                let obj = mass_objective(&masked, c.language)?;
                state.update(cfg, &[(&obj, cfg.weights.mass)], metrics)?;
            }
            Dataset::Parallel(c) => {
                let pairs =
                    parallel_batch(c, &sample_lines(&mut rng, c.pairs().len(), cfg.batch_size));
                let [a, b] = supervised_objectives(&pairs, c.src_language, c.tgt_language)?;
                let w = cfg.weights.sup;
                state.update(cfg, &[(&a, w), (&b, w)], metrics)?;
            }
        }
        state.after_step(session, metrics, false)?;
    }
    metrics.flush()?;
    Ok(Outcome {
        steps_run: state.step - start,
        early_stopped: false,
    })
}

/// The dataset index pre-training step `step` (1-based) draws from.
pub fn picked_dataset(seed: u64, step: u64, weights: &[f64]) -> usize {
    let pick = WeightedIndex::new(weights).expect("valid weights");
    pick.sample(&mut stream(seed, PICK, step))
}
