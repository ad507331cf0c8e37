mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, RawConfig};

/// Early-stopping policy fitting and benchmarking on recorded learning curves.
#[derive(Debug, Parser)]
#[command(name = "optstop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic curve dataset as JSONL.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Number of curves.
        #[arg(long)]
        n: Option<usize>,
        /// Steps per curve.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Fit a stopping rule and write it as a policy file.
    Fit(Common),
    /// Expected time of every fixed restart threshold, as CSV.
    Sweep(Common),
    /// Monte Carlo time-to-success of each named policy.
    Simulate(Common),
    /// Cross-validated quantile-policy evaluation.
    Cv(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Curve file (JSONL or CSV); replaces `curves_path`.
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Absolute success threshold.
    #[arg(long, conflicts_with = "target_percentile")]
    target: Option<f64>,
    /// Success threshold as a percentile of final values.
    #[arg(long)]
    target_percentile: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed (the generator seed for `gen`).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    fold_seed: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Comma-separated bucket counts.
    #[arg(long)]
    k_set: Option<String>,
    /// Bucket count for `fit`; chosen by cross-validation when absent.
    #[arg(long)]
    buckets: Option<usize>,
    #[arg(long)]
    min_count: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    /// Comma-separated policy names.
    #[arg(long)]
    policies: Option<String>,
    /// Output path; stdout when absent (required for `gen`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace an existing output file.
    #[arg(long)]
    overwrite: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] optstop_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use optstop_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::SuccessUnreachable) => 4,
            CliError::Core(E::Data { .. } | E::InvalidCurve(_) | E::Io(_) | E::Json(_)) => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl Common {
    fn into_config(self, gen: bool) -> Result<ExperimentConfig, CliError> {
        let mut raw = match &self.config {
            Some(path) => RawConfig::load(path)?,
            None => RawConfig::default(),
        };
        if let Some(p) = &self.curves {
            raw.set("curves_path", p.display());
        }
        if let Some(t) = self.target {
            raw.remove("target_percentile");
            raw.set("target", t);
        }
        if let Some(p) = self.target_percentile {
            raw.remove("target");
            raw.set("target_percentile", p);
        }
        if let Some(t) = self.trials {
            raw.set("trials", t);
        }
        if let Some(s) = self.seed {
            raw.set(if gen { "synthetic_seed" } else { "master_seed" }, s);
        }
        if let Some(s) = self.fold_seed {
            raw.set("fold_seed", s);
        }
        if let Some(e) = self.epsilon {
            raw.set("epsilon", e);
        }
        if let Some(k) = &self.k_set {
            raw.set("k_set", k);
        }
        if let Some(k) = self.buckets {
            raw.set("buckets", k);
        }
        if let Some(m) = self.min_count {
            raw.set("min_count", m);
        }
        if let Some(f) = self.folds {
            raw.set("folds", f);
        }
        if let Some(p) = &self.policies {
            raw.set("policies", p);
        }
        if let Some(o) = &self.out {
            raw.set("out", o.display());
        }
        if self.overwrite {
            raw.set("overwrite", true);
        }
        Ok(ExperimentConfig::new(raw))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen { common, n, horizon } => {
            let mut config = common.into_config(true)?;
            config.set_synthetic_shape(n, horizon);
            commands::gen(&config)
        }
        Command::Fit(common) => commands::fit(&common.into_config(false)?),
        Command::Sweep(common) => commands::sweep(&common.into_config(false)?),
        Command::Simulate(common) => commands::simulate(&common.into_config(false)?),
        Command::Cv(common) => commands::cv(&common.into_config(false)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("optstop: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
