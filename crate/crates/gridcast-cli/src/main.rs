//! gridcast: train, run, and inspect carbon-intensity forecasting models.
//!
//! Exit codes: 0 success, 2 user or configuration error, 3 data error,
//! 4 internal failure (a bug). Parallelism is set with `--jobs` or the
//! `GRIDCAST_JOBS` environment variable; results are identical for any
//! job count.

mod commands;
mod error;
mod manifest;

use std::panic::AssertUnwindSafe;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use gridcast_core::dataset::{Timestamp, DEFAULT_MAX_GAP_HOURS};

use crate::error::{CliError, EXIT_INTERNAL};

fn parse_timestamp(s: &str) -> Result<Timestamp, String> {
    s.parse::<Timestamp>()
        .map_err(|e| format!("expected an RFC 3339 timestamp like 2021-07-01T00:00:00Z: {e}"))
}

#[derive(Parser)]
#[command(
    name = "gridcast",
    version,
    about = "Hourly carbon-intensity forecasting for power grids",
    long_about = "Trains per-hour stacked ensembles on historical grid data and produces \
                  recursive 96-hour carbon-intensity forecasts, with evaluation and \
                  feature-importance reporting."
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true, env = "GRIDCAST_JOBS",
          value_parser = clap::value_parser!(u32).range(1..))]
    jobs: Option<u32>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train horizon models for every configured seed and write a model
    /// bundle (model files plus manifest.json) to the config's output_dir.
    Train {
        /// Experiment config JSON (see `gridcast print-config`).
        config: PathBuf,
    },
    /// Produce a 96-hour forecast CSV from a trained model bundle.
    Forecast {
        /// Model bundle directory written by `gridcast train`.
        models: PathBuf,
        /// Forecast origin; must be midnight UTC (e.g. 2021-07-01T00:00:00Z).
        #[arg(value_parser = parse_timestamp)]
        origin: Timestamp,
        /// Grid CSV holding the day before the origin and the forecast
        /// window's weather columns.
        context: PathBuf,
        /// Output CSV path (default: stdout).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Seed whose models to use (default: smallest in the manifest).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the full backtest described by a config and write report.json,
    /// report.txt, and per-seed forecast CSVs to the config's output_dir.
    Evaluate {
        /// Experiment config JSON.
        config: PathBuf,
        /// Evaluate an existing bundle instead of retraining.
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Grouped permutation importance of a trained day-1 model.
    Importance {
        /// Model bundle directory written by `gridcast train`.
        models: PathBuf,
        /// Grid CSV to draw evaluation examples from.
        data: PathBuf,
        /// Shuffles per feature group.
        #[arg(long, default_value_t = 10)]
        repeats: u32,
        /// Seed whose models to use (default: smallest in the manifest).
        #[arg(long)]
        seed: Option<u64>,
        /// Seed for the shuffle randomness.
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
        /// Output JSON path.
        #[arg(long, default_value = "importance.json")]
        output: PathBuf,
    },
    /// Summarize a grid CSV: span, schema, gaps, and value sanity.
    InspectData {
        /// Grid CSV to inspect.
        data: PathBuf,
        /// Grid identifier to attach to the table.
        #[arg(long, default_value = "grid")]
        grid_id: String,
        /// Longest run of missing hours that interpolation may bridge.
        #[arg(long, default_value_t = DEFAULT_MAX_GAP_HOURS)]
        max_gap_hours: u32,
    },
    /// Print a complete example config JSON to stdout.
    PrintConfig,
    /// Write a synthetic grid CSV with known structure, for smoke tests.
    GenerateData {
        /// Output CSV path.
        output: PathBuf,
        /// Generator seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Hours to generate (default: two years).
        #[arg(long)]
        hours: Option<usize>,
        /// Relative noise level (0.05 = 5%).
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        /// Grid identifier written into the table.
        #[arg(long, default_value = "SYN")]
        grid_id: String,
    },
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train { config } => commands::cmd_train(&config),
        Command::Forecast {
            models,
            origin,
            context,
            output,
            seed,
        } => commands::cmd_forecast(&models, origin, &context, output.as_deref(), seed),
        Command::Evaluate { config, models } => {
            commands::cmd_evaluate(&config, models.as_deref())
        }
        Command::Importance {
            models,
            data,
            repeats,
            seed,
            rng_seed,
            output,
        } => commands::cmd_importance(&models, &data, repeats, seed, rng_seed, &output),
        Command::InspectData {
            data,
            grid_id,
            max_gap_hours,
        } => commands::cmd_inspect_data(&data, &grid_id, max_gap_hours),
        Command::PrintConfig => commands::cmd_print_config(),
        Command::GenerateData {
            output,
            seed,
            hours,
            noise,
            grid_id,
        } => commands::cmd_generate_data(&output, seed, hours, noise, &grid_id),
    }
}

fn main() {
    // Rust traps SIGPIPE, so printing to a closed pipe (`gridcast ... |
    // head`) would otherwise panic; die quietly like other unix tools.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs as usize)
            .build_global()
        {
            log::warn!("could not set worker thread count: {e}");
        }
    }

    match std::panic::catch_unwind(AssertUnwindSafe(|| run(cli.command))) {
        Ok(Ok(())) => {}
        Ok(Err(err)) => {
            eprintln!("gridcast: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            std::process::exit(err.exit_code());
        }
        // The panic hook has already printed the message and location.
        Err(_) => std::process::exit(EXIT_INTERNAL),
    }
}
