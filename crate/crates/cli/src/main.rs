use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lingua_cli::{Error, ExperimentConfig, FinetuneOptions};

/// Unsupervised translation with auxiliary parallel data, at desk scale.
#[derive(Parser)]
#[command(name = "lingua", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file; defaults are used for missing keys.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Config overrides as `--key=value`, applied after the file.
    #[arg(
        allow_hyphen_values = true,
        trailing_var_arg = true,
        value_name = "--KEY=VALUE"
    )]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic world to OUTPUT_DIR/data.
    GenData(Common),
    /// Pre-train with MASS and supervised objectives.
    Pretrain {
        /// Continue from OUTPUT_DIR/pretrain/state.ckpt if present.
        #[arg(long)]
        resume: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Fine-tune with back- and cross-translation.
    Finetune {
        /// bt, m_bt or full (overrides finetune.ablation).
        #[arg(long)]
        ablation: Option<String>,
        /// Start from random weights instead of OUTPUT_DIR/pretrain/model.bin.
        #[arg(long)]
        from_scratch: bool,
        #[arg(long)]
        resume: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Score a model on the test (or dev) set and write hypotheses.
    Evaluate(Common),
    /// Run BT, M-BT and FULL from one pre-trained model; writes a CSV.
    Ablate(Common),
    /// Run the exact identity and bound checks on random toy joints.
    OracleCheck(Common),
}

fn overrides(raw: &[String]) -> Result<Vec<(String, String)>, Error> {
    raw.iter()
        .map(|a| {
            a.strip_prefix("--")
                .and_then(|kv| kv.split_once('='))
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Usage(format!("expected --key=value, got {a:?}")))
        })
        .collect()
}

fn config(common: &Common) -> Result<ExperimentConfig, Error> {
    ExperimentConfig::load(common.config.as_deref(), &overrides(&common.overrides)?)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenData(c) => lingua_cli::gen_data(&config(&c)?),
        Command::Pretrain { resume, common } => lingua_cli::pretrain(&config(&common)?, resume),
        Command::Finetune {
            ablation,
            from_scratch,
            resume,
            common,
        } => {
            let ablation = ablation
                .map(|a| {
                    a.parse()
                        .map_err(|e: lingua_train::Error| Error::Usage(e.to_string()))
                })
                .transpose()?;
            let opts = FinetuneOptions {
                ablation,
                from_scratch,
                resume,
            };
            lingua_cli::finetune(&config(&common)?, &opts)
        }
        Command::Evaluate(c) => lingua_cli::evaluate(&config(&c)?),
        Command::Ablate(c) => lingua_cli::ablate(&config(&c)?),
        Command::OracleCheck(c) => lingua_cli::oracle_check(&config(&c)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lingua: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
