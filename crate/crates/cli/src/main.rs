mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use robustlab::LabError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Lab(#[from] LabError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for bad configs or inputs, 3 for numerical failures.
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Lab(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

#[derive(Parser)]
#[command(name = "rlab", version, about = "Adversarial robustness experiments on small CNNs")]
struct Cli {
    /// Seed for model init, sampling and attacks.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 1 gives the reference schedule.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
pub struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long, short)]
    pub config: PathBuf,
    /// Overrides `model.checkpoint`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Replaces `data.train` with a dataset file.
    #[arg(long)]
    pub train_data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Natural training with snapshot evaluation.
    Train(RunArgs),
    /// Evaluates a checkpoint under the configured attacks.
    Attack(RunArgs),
    /// Builds a robust dataset from an adversarially trained checkpoint.
    Mkrobust(RunArgs),
    /// Builds a relabelled targeted-adversarial dataset.
    Mknonrobust(RunArgs),
    /// Adversarial training.
    Advtrain(RunArgs),
    /// One model per robust-mix fraction.
    MixSweep(RunArgs),
    /// SVG plots and a summary table from metrics or sweep CSVs.
    Report {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size the thread pool: {e}")))?;
    }
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| CliError::Config(format!("output directory {} is not writable: {e}", cli.out.display())))?;
    let ctx = commands::Context {
        seed: cli.seed,
        out: cli.out,
    };
    match cli.command {
        Command::Train(a) => commands::train(&ctx, &a),
        Command::Attack(a) => commands::attack(&ctx, &a),
        Command::Mkrobust(a) => commands::mkrobust(&ctx, &a),
        Command::Mknonrobust(a) => commands::mknonrobust(&ctx, &a),
        Command::Advtrain(a) => commands::advtrain(&ctx, &a),
        Command::MixSweep(a) => commands::mix_sweep(&ctx, &a),
        Command::Report { csv } => report::run(&ctx.out, &csv),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rlab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
