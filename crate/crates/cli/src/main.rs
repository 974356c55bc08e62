//! `wavelet-ae`: prepare data, train, denoise, evaluate and inspect the
//! wavelet-integrated denoising autoencoder.
//!
//! Every command writes into `<out>/<command>-<stamp>/`. The stamp defaults
//! to the UTC start time and can be pinned with `--stamp` for reproducible
//! paths.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use wavelet_ae::config::ExperimentConfig;
use wavelet_ae::par;

#[derive(Parser, Debug)]
#[command(
    name = "wavelet-ae",
    version,
    about = "Wavelet-integrated CNN autoencoder for ECG denoising"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// `key = value` config file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed (overrides the config)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output root directory
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Single-threaded, bit-reproducible execution; history timings are written as 0
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Run folder suffix instead of the current UTC time
    #[arg(long, global = true)]
    pub stamp: Option<String>,
    /// Config override `key=value` (repeatable, applied after --config)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Suppress progress messages
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Preprocess, window, normalise, split and mix; writes a manifest and pair files
    Prepare(commands::PrepareArgs),
    /// Train one variant; writes the best checkpoint and the history CSV
    Train(commands::TrainArgs),
    /// Denoise a signal file with a checkpoint
    Denoise(commands::DenoiseArgs),
    /// Evaluate checkpoints on a manifest's test set
    Evaluate(commands::EvaluateArgs),
    /// Export a multilevel wavelet decomposition
    Decompose(commands::DecomposeArgs),
    /// Print the layer-by-layer shape trace of a variant
    Describe(commands::DescribeArgs),
    /// Train and evaluate every configured variant over repetitions
    Ablation(commands::AblationArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Prepare(_) => "prepare",
            Command::Train(_) => "train",
            Command::Denoise(_) => "denoise",
            Command::Evaluate(_) => "evaluate",
            Command::Decompose(_) => "decompose",
            Command::Describe(_) => "describe",
            Command::Ablation(_) => "ablation",
        }
    }
}

/// Shared state handed to every command.
pub struct Run {
    pub config: ExperimentConfig,
    pub dir: PathBuf,
    pub deterministic: bool,
    pub quiet: bool,
}

impl Run {
    pub fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for o in &c.overrides {
        let (k, v) = o
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got '{o}'"))?;
        cfg.set(k.trim(), v.trim())
            .with_context(|| format!("in --set {o}"))?;
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    if let Some(n) = c.threads {
        anyhow::ensure!(n > 0, "--threads must be at least 1");
        par::set_threads(n).map_err(anyhow::Error::msg)?;
    }
    if c.deterministic {
        par::set_default_mode(par::ExecMode::Sequential);
    }
    let config = load_config(c)?;
    let stamp = c
        .stamp
        .clone()
        .unwrap_or_else(|| chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string());
    let dir = c.out.join(format!("{}-{stamp}", cli.command.name()));
    let run = Run {
        config,
        dir,
        deterministic: c.deterministic,
        quiet: c.quiet,
    };
    match cli.command {
        Command::Prepare(a) => commands::prepare(&run, a),
        Command::Train(a) => commands::train(&run, a),
        Command::Denoise(a) => commands::denoise(&run, a),
        Command::Evaluate(a) => commands::evaluate(&run, a),
        Command::Decompose(a) => commands::decompose(&run, a),
        Command::Describe(a) => commands::describe(&run, a),
        Command::Ablation(a) => commands::ablation(&run, a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
