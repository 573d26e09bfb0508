use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use ou_core::leaderboard::AggregationMode;
use ou_core::runner::{
    compose_config, load_config, run_experiment, ExperimentConfig, ExperimentKind, HandlerRegistry, RunOptions,
};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Finetune,
    Unlearn,
    Relearn,
    Eval,
    Pools,
    MetaEval,
    Bench,
    Report,
}

impl Command {
    fn kind(self) -> ExperimentKind {
        match self {
            Command::Finetune => ExperimentKind::Finetune,
            Command::Unlearn => ExperimentKind::Unlearn,
            Command::Relearn => ExperimentKind::Relearn,
            Command::Eval => ExperimentKind::Eval,
            Command::Pools => ExperimentKind::Pools,
            Command::MetaEval => ExperimentKind::MetaEval,
            Command::Bench => ExperimentKind::Bench,
            Command::Report => ExperimentKind::Report,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Full,
    MemUtility,
}

/// Unlearning experiments on a synthetic fact world.
#[derive(Debug, Parser)]
#[command(name = "ou", version)]
struct Cli {
    command: Command,
    /// Dotted `key=value` overrides applied after the config file.
    overrides: Vec<String>,
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; falls back to the config's `output_dir`, then `OU_OUTPUT_DIR`, then `runs`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Do nothing when a finished run with the same config hash exists.
    #[arg(long)]
    skip_existing: bool,
    /// Pools run directory for meta-eval.
    #[arg(long)]
    pool_dir: Option<PathBuf>,
    /// Comma-separated metric keys (`meta` and `all` expand).
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<String>>,
    /// Reports directory of an earlier run, for `report`.
    #[arg(long)]
    reports_dir: Option<PathBuf>,
    /// Leaderboard aggregation for `bench` and `report`.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Run directory name (defaults to the command).
    #[arg(long)]
    name: Option<String>,
}

fn build_config(cli: &Cli) -> ou_core::Result<ExperimentConfig> {
    let mut overrides = cli.overrides.clone();
    overrides.push(format!("experiment={}", cli.command.kind()));
    let mut cfg = match &cli.config {
        Some(path) => load_config(path, &overrides)?,
        None => compose_config(serde_json::json!({}), &overrides)?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.pool_dir {
        cfg.meta_eval.pool_dir = Some(dir.clone());
    }
    if let Some(metrics) = &cli.metrics {
        cfg.metrics = metrics.clone();
    }
    if let Some(dir) = &cli.reports_dir {
        cfg.report.reports_dir = Some(dir.clone());
    }
    if let Some(mode) = cli.mode {
        let mode = match mode {
            Mode::Full => AggregationMode::Full,
            Mode::MemUtility => AggregationMode::MemUtility,
        };
        cfg.bench.mode = mode;
        cfg.report.mode = Some(mode);
    }
    if let Some(name) = &cli.name {
        cfg.name = Some(name.clone());
    }
    cfg.normalize();
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let opts = RunOptions {
        output_root: cli.output_dir.clone(),
        skip_existing: cli.skip_existing,
    };
    match run_experiment(&cfg, &HandlerRegistry::builtin(), &opts) {
        Ok(out) => {
            // a closed stdout (e.g. piped into `head`) is not a failure
            let mut stdout = std::io::stdout().lock();
            if out.skipped {
                let _ = writeln!(stdout, "skipped: {} already finished", out.run_dir.display());
            }
            let _ = writeln!(stdout, "run: {} (config {})", out.run_dir.display(), out.config_hash);
            for a in &out.artifacts {
                let _ = writeln!(stdout, "  {}", a.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
