//! `nrb`: command-line driver for the reduced basis experiments.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::ExperimentConfig;
use error::CliError;
use output::Output;

#[derive(Debug, Parser)]
#[command(name = "nrb", version, about = "Nonlinear reduced basis experiments on Slater mixtures")]
struct Cli {
    /// Experiment configuration file (JSON).
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,

    /// Built-in configuration.
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,

    /// Output directory; overrides the configuration.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Reduced basis file; defaults to `basis.json` in the output directory.
    #[arg(long, global = true, value_name = "PATH")]
    basis: Option<PathBuf>,

    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, value_name = "INT")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Paper,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact ground states.
    Solve {
        /// Parameters to solve; defaults to the configured list or the training points.
        #[arg(long = "r", value_name = "R", num_args = 1..)]
        r: Option<Vec<f64>>,
    },
    /// Greedy snapshot selection; writes the basis file and error history.
    Offline {
        /// Basis size; overrides the configuration.
        #[arg(long, value_name = "N")]
        size: Option<usize>,
    },
    /// Reduced energy minimization for the test sets.
    Online {
        /// Query parameters; replaces the configured test sets.
        #[arg(long = "r", value_name = "R", num_args = 1..)]
        r: Option<Vec<f64>>,
    },
    /// Reduced energy on a weight grid for a two-element basis.
    Heatmap {
        #[arg(long, value_name = "R")]
        query: Option<f64>,
    },
    /// Empirical Kolmogorov widths and the kernel spectrum.
    Widths,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("cannot start thread pool: {e}")))?;
    }
    let mut cfg = match (&cli.config, cli.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(Preset::Paper)) => ExperimentConfig::paper(),
        (None, None) => return Err(CliError::config("pass --config PATH or --preset paper")),
    };
    if let Some(dir) = cli.out {
        cfg.out = dir;
    }
    if let Command::Offline { size: Some(n) } = cli.command {
        cfg.basis_size = n;
        cfg.online_sizes.retain(|&k| k <= n);
        cfg.validate()?;
    }
    let out = Output::create(&cfg.out)?;
    let basis_path = cli.basis.unwrap_or_else(|| out.path("basis.json"));
    match cli.command {
        Command::Solve { r } => commands::solve(&cfg, &out, r),
        Command::Offline { .. } => commands::offline(&cfg, &out, &basis_path),
        Command::Online { r } => commands::online(&cfg, &out, &basis_path, r),
        Command::Heatmap { query } => commands::heatmap(&cfg, &out, &basis_path, query),
        Command::Widths => commands::widths(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nrb: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
