//! One function per subcommand. Each writes its artifacts and a frozen copy
//! of the resolved config under the output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lingua_core::{gen_synthetic_world, TestSet, World};
use lingua_eval::{evaluate_pair, write_hypotheses, BleuReport};
use lingua_model::{Float, Model, Precision};
use lingua_train::state::check_config;
use lingua_train::{
    Ablation, Dataset, DevSet, MetricRow, Metrics, Session, TrainConfig, TrainState,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{io_err, Error, ExperimentConfig, Result};

pub const FROZEN_CONFIG: &str = "config.resolved.txt";
/// Steps between progress lines on stderr.
const PROGRESS_EVERY: u64 = 250;

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(io_err(path))
}

fn freeze(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_file(&dir.join(FROZEN_CONFIG), cfg.to_text())
}

fn fresh_metrics(path: &Path) -> Result<Metrics> {
    if path.exists() {
        std::fs::remove_file(path).map_err(io_err(path))?;
    }
    Ok(Metrics::to_file(path)?)
}

pub fn world(cfg: &ExperimentConfig) -> Result<World> {
    Ok(gen_synthetic_world(cfg.seed, &cfg.world)?)
}

/// Monolingual corpora in language order, then the parallel corpus.
pub fn datasets(world: &World) -> Vec<Dataset> {
    let mut d: Vec<Dataset> = world.mono.iter().cloned().map(Dataset::Mono).collect();
    d.push(Dataset::Parallel(world.parallel.clone()));
    d
}

fn split<'a>(world: &'a World, name: &str) -> &'a TestSet {
    if name == "dev" {
        &world.dev
    } else {
        &world.test
    }
}

fn dev_set(cfg: &ExperimentConfig, world: &World) -> DevSet {
    DevSet {
        directions: cfg
            .eval_directions()
            .into_iter()
            .map(|(a, b)| (a, b, world.dev.pairs(a, b)))
            .collect(),
        mode: cfg.eval.decode,
    }
}

fn init_model<T: Float>(cfg: &ExperimentConfig) -> Result<Model<T>> {
    Ok(Model::init(
        cfg.model.clone(),
        &mut ChaCha8Rng::seed_from_u64(cfg.seed),
    )?)
}

fn load_model<T: Float>(cfg: &ExperimentConfig, path: &Path) -> Result<Model<T>> {
    if !path.exists() {
        return Err(Error::MissingCheckpoint(path.into()));
    }
    let model = Model::<T>::load(path)?;
    check_config(model.config(), &cfg.model)?;
    Ok(model)
}

fn resolve_path(cfg: &ExperimentConfig, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.into()
    } else {
        cfg.output_dir.join(p)
    }
}

fn print_json(v: &impl Serialize) {
    println!(
        "{}",
        serde_json::to_string(v).expect("summaries always serialize")
    );
}

/// Writes the synthetic world as text files under `output_dir/data`.
pub fn gen_data(cfg: &ExperimentConfig) -> Result<()> {
    let dir = cfg.output_dir.join("data");
    let w = world(cfg)?;
    w.save(&dir)?;
    freeze(cfg, &dir)?;
    print_json(&serde_json::json!({
        "command": "gen-data",
        "dir": dir,
        "vocab": w.vocab.len(),
        "mono_lines": w.mono.iter().map(|m| m.len()).collect::<Vec<_>>(),
        "parallel_lines": w.parallel.len(),
        "test_lines": w.test.len(),
    }));
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    command: &'static str,
    dir: PathBuf,
    steps: u64,
    early_stopped: bool,
    last_losses: BTreeMap<String, f64>,
    best_dev_bleu: Option<f64>,
}

fn last_losses(metrics: &Metrics) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for (_, r) in metrics.losses().rev() {
        let kind = serde_json::to_value(r.kind).expect("loss kinds serialize");
        let kind = kind.as_str().unwrap_or_default();
        let key = match r.pivot {
            Some(p) => format!("{kind} {}-{} via {p}", r.src, r.tgt),
            None => format!("{kind} {}-{}", r.src, r.tgt),
        };
        out.entry(key).or_insert(r.value);
    }
    out
}

type Runner<T> = fn(
    &mut TrainState<T>,
    &Session<'_>,
    &mut Metrics,
    u64,
) -> lingua_train::Result<lingua_train::Outcome>;

/// Runs `runner` to `cfg.steps` in chunks so progress can be reported.
fn drive<T: Float>(
    label: &str,
    state: &mut TrainState<T>,
    session: &Session<'_>,
    metrics: &mut Metrics,
    runner: Runner<T>,
) -> Result<bool> {
    let total = session.cfg.steps;
    while state.step < total {
        let next = ((state.step / PROGRESS_EVERY) + 1) * PROGRESS_EVERY;
        let outcome = runner(state, session, metrics, next.min(total))?;
        metrics.flush()?;
        eprintln!("[{label}] step {}/{total}", state.step);
        if outcome.early_stopped {
            return Ok(true);
        }
    }
    Ok(false)
}

pub fn pretrain(cfg: &ExperimentConfig, resume: bool) -> Result<()> {
    match cfg.model.precision {
        Precision::F32 => pretrain_t::<f32>(cfg, resume),
        Precision::F64 => pretrain_t::<f64>(cfg, resume),
    }
}

fn pretrain_t<T: Float>(cfg: &ExperimentConfig, resume: bool) -> Result<()> {
    let dir = cfg.output_dir.join("pretrain");
    freeze(cfg, &dir)?;
    let w = world(cfg)?;
    let data = datasets(&w);
    let ckpt = dir.join("state.ckpt");
    let metrics_path = dir.join("metrics.jsonl");
    let (mut state, mut metrics) = if resume && ckpt.exists() {
        (
            TrainState::load_expecting(&ckpt, &cfg.model)?,
            Metrics::to_file(&metrics_path)?,
        )
    } else {
        (
            TrainState::new(init_model::<T>(cfg)?, &cfg.pretrain),
            fresh_metrics(&metrics_path)?,
        )
    };
    let dev = dev_set(cfg, &w);
    let session = Session {
        datasets: &data,
        cfg: &cfg.pretrain,
        target_pair: w.target_pair(),
        dev: Some(&dev),
        checkpoint: Some(&ckpt),
    };
    let early = drive(
        "pretrain",
        &mut state,
        &session,
        &mut metrics,
        lingua_train::pretrain_until,
    )?;
    state.save(&ckpt)?;
    state.model.save(dir.join("model.bin"))?;
    print_json(&TrainSummary {
        command: "pretrain",
        dir,
        steps: state.step,
        early_stopped: early,
        last_losses: last_losses(&metrics),
        best_dev_bleu: state.best_dev,
    });
    Ok(())
}

#[derive(Clone, Debug, Default)]
pub struct FinetuneOptions {
    /// Overrides `finetune.ablation`.
    pub ablation: Option<Ablation>,
    /// Start from random initialization instead of the pre-trained model.
    pub from_scratch: bool,
    pub resume: bool,
}

fn ablation_dir(a: Ablation) -> String {
    a.name().to_ascii_lowercase().replace('-', "_")
}

pub fn finetune(cfg: &ExperimentConfig, opts: &FinetuneOptions) -> Result<()> {
    match cfg.model.precision {
        Precision::F32 => finetune_t::<f32>(cfg, opts),
        Precision::F64 => finetune_t::<f64>(cfg, opts),
    }
}

fn finetune_t<T: Float>(cfg: &ExperimentConfig, opts: &FinetuneOptions) -> Result<()> {
    let ablation = opts.ablation.unwrap_or(cfg.finetune.ablation);
    let tcfg = TrainConfig {
        ablation,
        ..cfg.finetune.clone()
    };
    let dir = cfg
        .output_dir
        .join(format!("finetune-{}", ablation_dir(ablation)));
    freeze(cfg, &dir)?;
    let w = world(cfg)?;
    let ckpt = dir.join("state.ckpt");
    let metrics_path = dir.join("metrics.jsonl");
    let (mut state, mut metrics) = if opts.resume && ckpt.exists() {
        (
            TrainState::load_expecting(&ckpt, &cfg.model)?,
            Metrics::to_file(&metrics_path)?,
        )
    } else {
        let model = if opts.from_scratch {
            init_model::<T>(cfg)?
        } else {
            load_model::<T>(cfg, &cfg.output_dir.join("pretrain/model.bin"))?
        };
        (TrainState::new(model, &tcfg), fresh_metrics(&metrics_path)?)
    };
    let early = run_finetune(cfg, &tcfg, &w, &dir, &mut state, &mut metrics)?;
    print_json(&TrainSummary {
        command: "finetune",
        dir,
        steps: state.step,
        early_stopped: early,
        last_losses: last_losses(&metrics),
        best_dev_bleu: state.best_dev,
    });
    Ok(())
}

fn run_finetune<T: Float>(
    cfg: &ExperimentConfig,
    tcfg: &TrainConfig,
    w: &World,
    dir: &Path,
    state: &mut TrainState<T>,
    metrics: &mut Metrics,
) -> Result<bool> {
    let data = datasets(w);
    let dev = dev_set(cfg, w);
    let ckpt = dir.join("state.ckpt");
    let session = Session {
        datasets: &data,
        cfg: tcfg,
        target_pair: w.target_pair(),
        dev: Some(&dev),
        checkpoint: Some(&ckpt),
    };
    let label = format!("finetune {}", tcfg.ablation);
    let early = drive(
        &label,
        state,
        &session,
        metrics,
        lingua_train::finetune_until,
    )?;
    state.save(&ckpt)?;
    state.model.save(dir.join("model.bin"))?;
    Ok(early)
}

#[derive(Serialize)]
struct DirectionReport {
    direction: String,
    hypotheses: PathBuf,
    bleu: BleuReport,
}

pub fn evaluate(cfg: &ExperimentConfig) -> Result<()> {
    match cfg.model.precision {
        Precision::F32 => evaluate_t::<f32>(cfg),
        Precision::F64 => evaluate_t::<f64>(cfg),
    }
}

fn evaluate_t<T: Float>(cfg: &ExperimentConfig) -> Result<()> {
    let dir = cfg.output_dir.join("evaluate");
    let model_path = resolve_path(cfg, &cfg.eval.checkpoint);
    let model = load_model::<T>(cfg, &model_path)?;
    freeze(cfg, &dir)?;
    let w = world(cfg)?;
    let set = split(&w, &cfg.eval.split);
    let mut reports = Vec::new();
    for (a, b) in cfg.eval_directions() {
        let ev = evaluate_pair(
            &model,
            &set.pairs(a, b),
            a,
            b,
            cfg.eval.decode,
            cfg.model.max_len,
        )?;
        let hyp_path = dir.join(format!("hyp.{a}-{b}.txt"));
        write_hypotheses(&hyp_path, &ev.hypotheses, &w.vocab)?;
        reports.push(DirectionReport {
            direction: format!("{a}-{b}"),
            hypotheses: hyp_path,
            bleu: ev.report,
        });
    }
    let report = serde_json::json!({
        "command": "evaluate",
        "checkpoint": model_path,
        "split": cfg.eval.split,
        "decode": format!("{:?}", cfg.eval.decode),
        "directions": reports,
    });
    let path = dir.join("report.json");
    write_file(
        &path,
        serde_json::to_string_pretty(&report).expect("reports serialize"),
    )?;
    print_json(&report);
    Ok(())
}

/// Mean dev BLEU over directions at each evaluation step.
pub fn mean_dev_bleu(rows: &[MetricRow]) -> BTreeMap<u64, f64> {
    let mut acc: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for r in rows {
        if let MetricRow::Eval { step, bleu, .. } = r {
            let e = acc.entry(*step).or_default();
            e.0 += bleu;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(s, (sum, n))| (s, sum / n as f64))
        .collect()
}

/// One row per configuration, one column per evaluation step; cells a
/// configuration never reached (early stop) are left empty.
pub fn ablation_csv(eval_steps: &[u64], curves: &[(Ablation, BTreeMap<u64, f64>)]) -> String {
    let mut s = String::from("config");
    for step in eval_steps {
        write!(s, ",step_{step}").unwrap();
    }
    s.push('\n');
    for (a, curve) in curves {
        s.push_str(a.name());
        for step in eval_steps {
            match curve.get(step) {
                Some(v) => write!(s, ",{v:.4}").unwrap(),
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

/// BT, M-BT and FULL fine-tuning from the same pre-trained model.
pub fn ablate(cfg: &ExperimentConfig) -> Result<()> {
    match cfg.model.precision {
        Precision::F32 => ablate_t::<f32>(cfg),
        Precision::F64 => ablate_t::<f64>(cfg),
    }
}

fn ablate_t<T: Float>(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.finetune.eval_every == 0 {
        return Err(Error::Config("ablate needs finetune.eval_every > 0".into()));
    }
    let root = cfg.output_dir.join("ablate");
    let pre = load_model::<T>(cfg, &cfg.output_dir.join("pretrain/model.bin"))?;
    freeze(cfg, &root)?;
    let w = world(cfg)?;
    let mut curves = Vec::new();
    for ablation in Ablation::ALL {
        let tcfg = TrainConfig {
            ablation,
            ..cfg.finetune.clone()
        };
        let dir = root.join(ablation_dir(ablation));
        create_dir(&dir)?;
        let mut state = TrainState::new(pre.clone(), &tcfg);
        let mut metrics = fresh_metrics(&dir.join("metrics.jsonl"))?;
        run_finetune(cfg, &tcfg, &w, &dir, &mut state, &mut metrics)?;
        curves.push((ablation, mean_dev_bleu(metrics.rows())));
    }
    let steps = cfg.finetune.steps;
    let every = cfg.finetune.eval_every;
    let eval_steps: Vec<u64> = (1..=steps / every).map(|i| i * every).collect();
    let csv = ablation_csv(&eval_steps, &curves);
    let path = root.join("ablation.csv");
    write_file(&path, &csv)?;
    print!("{csv}");
    Ok(())
}

pub fn oracle_check(cfg: &ExperimentConfig) -> Result<()> {
    let dir = cfg.output_dir.join("oracle");
    freeze(cfg, &dir)?;
    let reports = lingua_oracle::run_suite(cfg.oracle_trials, cfg.seed);
    for r in &reports {
        print_json(r);
    }
    let path = dir.join("report.json");
    write_file(
        &path,
        serde_json::to_string_pretty(&reports).expect("reports serialize"),
    )?;
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Invariant(format!(
            "oracle checks failed: {}",
            failed.join(", ")
        )))
    }
}
