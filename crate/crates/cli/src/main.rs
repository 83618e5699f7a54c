use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use lqc_trust::experiment::{emit_csv, emit_trace, run_sweep, run_trace, ExperimentConfig};
use lqc_trust::Error;

/// Learning-augmented LQ control experiments.
#[derive(Debug, Parser)]
#[command(name = "lqc-trust", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a sweep and write the result table.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (file name taken from `output_path`, else `sweep.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; defaults to one per core.
        #[arg(long, env = "LQC_THREADS")]
        threads: Option<usize>,
        /// Overrides `base_seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the per-step trajectory of one controller.
    Trace {
        #[arg(long)]
        config: PathBuf,
        /// Controller label as printed in the sweep table, e.g. `self_tuning(0.3)`.
        #[arg(long)]
        controller: String,
        #[arg(long)]
        level: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Config(_) | Error::MissingFile(_) | Error::Parse { .. } | Error::Validation { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn sweep_path(config: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    let default = Path::new("sweep.csv");
    match (out, &config.output_path) {
        (Some(dir), Some(p)) => dir.join(p.file_name().unwrap_or(default.as_os_str())),
        (Some(dir), None) => dir.join(default),
        (None, Some(p)) => p.clone(),
        (None, None) => default.to_path_buf(),
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Run {
            config,
            out,
            threads,
            seed,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.base_seed = seed;
            }
            if threads == Some(0) {
                return Err(Error::Config("--threads must be at least 1".into()));
            }
            let start = Instant::now();
            let rows = run_sweep(&cfg, threads)?;
            let path = sweep_path(&cfg, out.as_deref());
            emit_csv(&rows, &path)?;
            eprintln!(
                "{} rows ({} cells) -> {} in {:.2?}",
                rows.len(),
                cfg.noise_levels.len() * cfg.mc_repetitions,
                path.display(),
                start.elapsed()
            );
        }
        Command::Trace {
            config,
            controller,
            level,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rollout = run_trace(&cfg, &controller, level)?;
            emit_trace(&rollout, &out)?;
            eprintln!(
                "{} steps, cost {:.6e} -> {}",
                rollout.actions.len(),
                rollout.total_cost,
                out.display()
            );
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let labels: Vec<_> = cfg.controllers.iter().map(|c| c.label()).collect();
            println!(
                "ok: {} T={} controllers=[{}] levels={} repetitions={}",
                cfg.scenario.name(),
                cfg.horizon,
                labels.join(", "),
                cfg.noise_levels.len(),
                cfg.mc_repetitions
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
