use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pinn_pricing::training::Strategy;
use pinn_pricing_cli::config::{CliOverrides, ConfigFile, RunConfig};
use pinn_pricing_cli::report;
use pinn_pricing_cli::run::{self, Metrics};

/// Environment variable holding the worker thread count.
const THREADS_ENV: &str = "PINN_THREADS";

#[derive(Parser)]
#[command(name = "pinn-pricing", version, about = "Adaptive PINN option-pricing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment matrix.
    Solve {
        /// JSON run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Named preset (example1..example4, example4_full).
        #[arg(long)]
        preset: Option<String>,
        /// Strategies to run, comma separated (PINN, RAM-PINN, WAM-PINN, AM-PIRN).
        #[arg(long, value_delimiter = ',')]
        strategy: Option<Vec<Strategy>>,
        #[arg(long)]
        seed: Option<u64>,
        /// Repetitions per cell, with seeds seed, seed+1, ...
        #[arg(long)]
        reps: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print summary tables for a run directory.
    Report { dir: PathBuf },
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| format!("{THREADS_ENV}={v:?} is not a thread count"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match cli.command {
        Command::Solve { config, preset, strategy, seed, reps, out } => {
            if config.is_none() && preset.is_none() {
                eprintln!("error: either --config or --preset is required");
                return ExitCode::from(2);
            }
            let file = match config.as_deref().map(ConfigFile::load).transpose() {
                Ok(f) => f,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let overrides = CliOverrides { preset, strategies: strategy, seed, reps, out };
            let cfg = match RunConfig::resolve(file, overrides) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            eprintln!("{}: {} cells -> {}", cfg.name, cfg.cells().len(), cfg.out.display());
            match run::run(&cfg, |line| eprintln!("{line}")) {
                Ok(m) if m.any_failed() => {
                    eprintln!("one or more cells failed; see {}", cfg.out.join(run::METRICS_FILE).display());
                    ExitCode::from(1)
                }
                Ok(_) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Report { dir } => match Metrics::load(&dir) {
            Ok(m) => {
                print!("{}", report::render(&m));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
    }
}
