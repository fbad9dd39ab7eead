mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use lingua_core::{gen_synthetic_world, World, WorldConfig};
use lingua_eval::DecodeMode;
use lingua_model::{Model, ModelConfig, Precision};
use lingua_train::{
    finetune, finetune_until, picked_dataset, pretrain, pretrain_until, sweep_plan, Ablation,
    Dataset, DevSet, Error, LossKind, MetricRow, Metrics, Session, TrainConfig, TrainState,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn world() -> World {
    let cfg = WorldConfig {
        mono_lines: 60,
        parallel_lines: 40,
        test_lines: 8,
        dev_lines: 8,
        ..WorldConfig::default()
    };
    gen_synthetic_world(5, &cfg).unwrap()
}

fn datasets(w: &World, parallel: bool) -> Vec<Dataset> {
    let mut ds: Vec<Dataset> = w.mono.iter().cloned().map(Dataset::Mono).collect();
    if parallel {
        ds.push(Dataset::Parallel(w.parallel.clone()));
    }
    ds
}

fn model_config(w: &World) -> ModelConfig {
    ModelConfig {
        vocab_size: w.vocab.len(),
        ..tiny_config(Precision::F32)
    }
}

fn fresh(w: &World, cfg: &TrainConfig) -> TrainState<f32> {
    let m = Model::init(model_config(w), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    TrainState::new(m, cfg)
}

fn pre_cfg(steps: u64) -> TrainConfig {
    TrainConfig {
        steps,
        batch_size: 8,
        warmup_steps: steps.min(5),
        total_decay_steps: steps,
        checkpoint_every: 0,
        ..TrainConfig::pretrain_desk()
    }
}

fn fine_cfg(ablation: Ablation, steps: u64) -> TrainConfig {
    TrainConfig {
        ablation,
        steps,
        batch_size: 40,
        warmup_steps: 2,
        total_decay_steps: steps,
        eval_every: 0,
        checkpoint_every: 0,
        ..TrainConfig::finetune_desk()
    }
}

fn session<'a>(w: &World, ds: &'a [Dataset], cfg: &'a TrainConfig) -> Session<'a> {
    Session {
        datasets: ds,
        cfg,
        target_pair: w.target_pair(),
        dev: None,
        checkpoint: None,
    }
}

fn loss_values(m: &Metrics) -> Vec<u64> {
    m.losses().map(|(_, r)| r.value.to_bits()).collect()
}

#[test]
fn pretrain_without_parallel_data_logs_only_mass() {
    let w = world();
    let ds = datasets(&w, false);
    let cfg = pre_cfg(12);
    let mut st = fresh(&w, &cfg);
    let mut m = Metrics::memory();
    let out = pretrain(&mut st, &session(&w, &ds, &cfg), &mut m).unwrap();
    assert_eq!(out.steps_run, 12);
    assert_eq!(st.step, 12);
    assert!(m.losses().all(|(_, r)| r.kind == LossKind::Mass));
    assert_eq!(m.losses().count(), 12);
}

#[test]
fn pretrain_parallel_step_logs_both_directions_once() {
    let w = world();
    let ds = datasets(&w, true);
    let cfg = pre_cfg(30);
    let mut st = fresh(&w, &cfg);
    let mut m = Metrics::memory();
    pretrain(&mut st, &session(&w, &ds, &cfg), &mut m).unwrap();
    let mut per_step: BTreeMap<u64, Vec<LossKind>> = BTreeMap::new();
    for (s, r) in m.losses() {
        per_step.entry(s).or_default().push(r.kind);
        assert!(matches!(r.kind, LossKind::Mass | LossKind::Sup));
    }
    assert_eq!(per_step.len(), 30);
    for kinds in per_step.values() {
        assert!(kinds == &[LossKind::Mass] || kinds == &[LossKind::Sup, LossKind::Sup]);
    }
    assert!(per_step.values().any(|k| k[0] == LossKind::Sup));
}

#[test]
fn dataset_picks_are_uniform() {
    let weights = [1.0; 4];
    let mut counts = [0usize; 4];
    for step in 1..=10_000 {
        counts[picked_dataset(9, step, &weights)] += 1;
    }
    for c in counts {
        assert!((c as f64 / 10_000.0 - 0.25).abs() <= 0.02, "{counts:?}");
    }
}

#[test]
fn runs_are_deterministic() {
    let w = world();
    let ds = datasets(&w, true);
    let cfg = pre_cfg(15);
    let run = || {
        let mut st = fresh(&w, &cfg);
        let mut m = Metrics::memory();
        pretrain(&mut st, &session(&w, &ds, &cfg), &mut m).unwrap();
        (st.to_bytes(), loss_values(&m))
    };
    assert_eq!(run(), run());
}

#[test]
fn resumed_pretraining_matches_uninterrupted() {
    let w = world();
    let ds = datasets(&w, true);
    let cfg = pre_cfg(100);
    let s = session(&w, &ds, &cfg);

    let mut whole = fresh(&w, &cfg);
    let mut m_whole = Metrics::memory();
    pretrain(&mut whole, &s, &mut m_whole).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("half.ckpt");
    let mut first = fresh(&w, &cfg);
    let mut m_split = Metrics::memory();
    pretrain_until(&mut first, &s, &mut m_split, 50).unwrap();
    first.save(&path).unwrap();
    drop(first);
    let mut second: TrainState<f32> = TrainState::load(&path).unwrap();
    pretrain(&mut second, &s, &mut m_split).unwrap();

    assert_eq!(loss_values(&m_whole), loss_values(&m_split));
    assert_eq!(whole.to_bytes(), second.to_bytes());
}

#[test]
fn resumed_finetuning_matches_uninterrupted() {
    let w = world();
    let ds = datasets(&w, true);
    let cfg = fine_cfg(Ablation::Full, 12);
    let s = session(&w, &ds, &cfg);
    let mut whole = fresh(&w, &cfg);
    let mut m_whole = Metrics::memory();
    finetune(&mut whole, &s, &mut m_whole).unwrap();

    let mut first = fresh(&w, &cfg);
    let mut m_split = Metrics::memory();
    finetune_until(&mut first, &s, &mut m_split, 5).unwrap();
    let mut second: TrainState<f32> = TrainState::from_bytes(&first.to_bytes()).unwrap();
    finetune(&mut second, &s, &mut m_split).unwrap();
    assert_eq!(loss_values(&m_whole), loss_values(&m_split));
    assert_eq!(whole.to_bytes(), second.to_bytes());
}

#[test]
fn checkpoints_round_trip_byte_identically() {
    let w = world();
    let ds = datasets(&w, true);
    let cfg = pre_cfg(4);
    let mut st = fresh(&w, &cfg);
    pretrain(&mut st, &session(&w, &ds, &cfg), &mut Metrics::memory()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    st.save(&a).unwrap();
    TrainState::<f32>::load(&a).unwrap().save(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn checkpoint_errors_are_descriptive() {
    let w = world();
    let cfg = pre_cfg(4);
    let st = fresh(&w, &cfg);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s");
    st.save(&path).unwrap();

    let other = ModelConfig {
        hidden_dim: 32,
        ..model_config(&w)
    };
    let err = TrainState::<f32>::load_expecting(&path, &other).unwrap_err();
    assert!(err.to_string().contains("config mismatch"), "{err}");
    assert!(TrainState::<f32>::load_expecting(&path, &model_config(&w)).is_ok());

    let bytes = st.to_bytes();
    let err = TrainState::<f32>::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
    assert!(err.to_string().contains("truncated"), "{err}");
    let mut v2 = bytes.clone();
    v2[8] = 9;
    let err = TrainState::<f32>::from_bytes(&v2).unwrap_err();
    assert!(err.to_string().contains("version"), "{err}");
    assert!(TrainState::<f64>::from_bytes(&bytes).is_err());
}

/// BT directions and CT records per sweep for each ablation.
fn structure(ablation: Ablation) -> (Vec<MetricRow>, usize) {
    let w = world();
    let ds = datasets(&w, true);
    let plan = sweep_plan(&ds, ablation, w.target_pair(), 3).unwrap();
    let sweeps = 2;
    let cfg = fine_cfg(ablation, (plan.len() * sweeps) as u64);
    let mut st = fresh(&w, &cfg);
    let mut m = Metrics::memory();
    finetune(&mut st, &session(&w, &ds, &cfg), &mut m).unwrap();
    (m.rows().to_vec(), plan.len())
}

fn directions(rows: &[MetricRow], kind: LossKind) -> BTreeSet<(String, String, Option<String>)> {
    rows.iter()
        .filter_map(|r| match r {
            MetricRow::Loss { record, .. } if record.kind == kind => Some((
                record.src.to_string(),
                record.tgt.to_string(),
                record.pivot.map(|p| p.to_string()),
            )),
            _ => None,
        })
        .collect()
}

fn count(rows: &[MetricRow], kind: LossKind) -> usize {
    rows.iter()
        .filter(|r| matches!(r, MetricRow::Loss { record, .. } if record.kind == kind))
        .count()
}

#[test]
fn bt_ablation_uses_only_the_target_pair() {
    let (rows, per_sweep) = structure(Ablation::Bt);
    assert_eq!(per_sweep, 2);
    let dirs = directions(&rows, LossKind::Bt);
    let expect: BTreeSet<_> = [("L0", "L2"), ("L2", "L0")]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string(), None))
        .collect();
    assert_eq!(dirs, expect);
    assert_eq!(count(&rows, LossKind::Bt), 4);
    assert_eq!(
        count(&rows, LossKind::Ct) + count(&rows, LossKind::Mass) + count(&rows, LossKind::Sup),
        0
    );
}

#[test]
fn multi_way_bt_covers_every_direction_each_sweep() {
    let (rows, per_sweep) = structure(Ablation::MBt);
    assert_eq!(per_sweep, 6);
    assert_eq!(directions(&rows, LossKind::Bt).len(), 6);
    assert_eq!(count(&rows, LossKind::Bt), 12);
    assert_eq!(count(&rows, LossKind::Ct), 0);
}

#[test]
fn full_adds_two_ct_records_per_parallel_batch() {
    let (rows, per_sweep) = structure(Ablation::Full);
    assert_eq!(per_sweep, 8);
    assert_eq!(count(&rows, LossKind::Bt), 12);
    assert_eq!(count(&rows, LossKind::Ct), 4);
    let ct = directions(&rows, LossKind::Ct);
    let pivot = Some("L2".to_string());
    let expect: BTreeSet<_> = [
        ("L0".to_string(), "L1".to_string(), pivot.clone()),
        ("L1".to_string(), "L0".to_string(), pivot),
    ]
    .into();
    assert_eq!(ct, expect);
    assert_eq!(count(&rows, LossKind::Mass), 0);
}

#[test]
fn full_without_parallel_data_is_a_config_error() {
    let w = world();
    let ds = datasets(&w, false);
    let err = sweep_plan(&ds, Ablation::Full, w.target_pair(), 3).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    let cfg = fine_cfg(Ablation::Full, 3);
    let mut st = fresh(&w, &cfg);
    assert!(finetune(&mut st, &session(&w, &ds, &cfg), &mut Metrics::memory()).is_err());
}

#[test]
fn evaluation_rows_and_early_stop() {
    let w = world();
    let ds = datasets(&w, true);
    let (a, b) = w.target_pair();
    let dev = DevSet {
        directions: vec![(a, b, w.dev.pairs(a, b)), (b, a, w.dev.pairs(b, a))],
        mode: DecodeMode::Greedy,
    };
    let cfg = TrainConfig {
        eval_every: 1,
        patience: 2,
        base_lr: 0.0,
        ..fine_cfg(Ablation::Bt, 50)
    };
    let mut st = fresh(&w, &cfg);
    let mut m = Metrics::memory();
    let s = Session {
        dev: Some(&dev),
        ..session(&w, &ds, &cfg)
    };
    let out = finetune(&mut st, &s, &mut m).unwrap();
    // lr 0 never improves on the first evaluation
    assert!(out.early_stopped);
    assert_eq!(out.steps_run, 3);
    let evals: Vec<_> = m
        .rows()
        .iter()
        .filter(|r| matches!(r, MetricRow::Eval { .. }))
        .collect();
    assert_eq!(evals.len(), 6);
}

#[test]
fn metric_lines_have_the_documented_fields() {
    let w = world();
    let ds = datasets(&w, true);
    let cfg = fine_cfg(Ablation::Full, 8);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("metrics.jsonl");
    {
        let mut st = fresh(&w, &cfg);
        let mut m = Metrics::to_file(&path).unwrap();
        finetune(&mut st, &session(&w, &ds, &cfg), &mut m).unwrap();
    }
    let text = std::fs::read_to_string(&path).unwrap();
    let mut saw_ct = false;
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["step", "kind", "src", "tgt", "pivot", "value", "tokens"] {
            assert!(v.get(key).is_some(), "{line}");
        }
        assert!(v["value"].as_f64().unwrap() >= 0.0);
        if v["kind"] == "CT" {
            saw_ct = true;
            assert_eq!(v["pivot"], "L2");
        } else {
            assert!(v["pivot"].is_null());
        }
    }
    assert!(saw_ct);
}
