use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use synsacc_cli::commands;
use synsacc_cli::config::{Overrides, RunConfig};
use synsacc_cli::CliError;

#[derive(Parser)]
#[command(
    name = "synsacc",
    version,
    about = "Synthetic saccade/fixation event data and spiking classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run config; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Dataset directory (with manifest.json).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Checkpoint file (.snn).
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled event dataset.
    Gen(Common),
    /// Convert a directory of PGM frames to events.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Directory of frames, read in file-name order.
        #[arg(long)]
        frames: Option<PathBuf>,
    },
    /// Train a model on a dataset.
    Train(Common),
    /// Evaluate a checkpoint on a dataset's test split.
    Eval(Common),
    /// Zero-shot evaluate a checkpoint, then train on a fraction of a dataset.
    Finetune {
        #[command(flatten)]
        common: Common,
        /// Fraction of the train split to use, in (0, 1].
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Train and evaluate at several window lengths.
    Sweep(Common),
    /// Synaptic-op and MAC accounting for a model.
    Ops(Common),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, fraction, frames) = match &cli.command {
        Command::Gen(c)
        | Command::Train(c)
        | Command::Eval(c)
        | Command::Sweep(c)
        | Command::Ops(c) => (c.clone(), None, None),
        Command::Simulate { common, frames } => (common.clone(), None, frames.clone()),
        Command::Finetune { common, fraction } => (common.clone(), *fraction, None),
    };
    let base = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cfg = base.resolve(&Overrides {
        seed: common.seed,
        out: common.out,
        threads: common.threads,
        dataset: common.dataset,
        checkpoint: common.checkpoint,
        fraction,
        frames_dir: frames,
    })?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Gen(_) => commands::cmd_gen(&cfg).map(drop),
        Command::Simulate { .. } => commands::cmd_simulate(&cfg).map(drop),
        Command::Train(_) => commands::cmd_train(&cfg).map(drop),
        Command::Eval(_) => commands::cmd_eval(&cfg).map(drop),
        Command::Finetune { .. } => commands::cmd_finetune(&cfg).map(drop),
        Command::Sweep(_) => commands::cmd_sweep(&cfg).map(drop),
        Command::Ops(_) => commands::cmd_ops(&cfg).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("SYNSACC_LOG", "info"))
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
