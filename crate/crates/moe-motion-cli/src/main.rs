//! `moe-motion`: train, prune, and evaluate the gated mixture-of-experts
//! motion model from one JSON config. Set `MOE_MOTION_LOG` (error, warn,
//! info, debug, trace) to control log verbosity.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod dataset_io;

#[derive(Parser)]
#[command(name = "moe-motion", version, about = "Mixture-of-experts motion model pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the quadruped gait corpus (clips + schema + manifest)
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train (and optionally prune) a network on a generated dataset
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Dataset directory written by gen-data
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Resume from this checkpoint instead of initializing fresh
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Roll out a checkpoint on reference clips; report skating and cost
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dataset directory; omit to synthesize clips from --config
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Foot-contact height threshold in cm
        #[arg(long)]
        threshold_cm: Option<f64>,
    },
    /// Train one model per sparsity level and tabulate quality against cost
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma list ("0.2,0.5") or decile range ("0.1..0.9")
        #[arg(long, value_name = "LIST")]
        sparsity: Option<String>,
    },
    /// Deactivate each expert in turn and measure the rollout damage
    Ablate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threshold_cm: Option<f64>,
        /// Rescale the surviving gate weights to sum to one
        #[arg(long)]
        renormalize: bool,
    },
    /// Record per-frame expert activations over reference clips
    Trace {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Label for this checkpoint's traces (e.g. "sparse")
        #[arg(long, default_value = "model")]
        model: String,
        /// Second checkpoint to trace and compare against
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Time dense versus CSR inference across sparsity levels
    Bench {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_name = "LIST")]
        sparsity: Option<String>,
    },
    /// Dump a checkpoint's config, normalization, and tensor statistics
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(command: Command) -> moe_motion::Result<()> {
    match command {
        Command::GenData { config, out, seed } => commands::gen_data::run(&config, &out, seed),
        Command::Train { config, data, out, seed, checkpoint } => {
            commands::train::run(&config, &data, &out, seed, checkpoint.as_deref())
        }
        Command::Eval { checkpoint, out, data, config, seed, threshold_cm } => commands::eval::run(
            &checkpoint,
            &out,
            data.as_deref(),
            config.as_deref(),
            seed,
            threshold_cm,
        ),
        Command::Sweep { config, data, out, seed, sparsity } => {
            commands::sweep::run(&config, &data, &out, seed, sparsity.as_deref())
        }
        Command::Ablate { checkpoint, out, data, config, seed, threshold_cm, renormalize } => {
            commands::ablate::run(
                &checkpoint,
                &out,
                data.as_deref(),
                config.as_deref(),
                seed,
                threshold_cm,
                renormalize,
            )
        }
        Command::Trace { checkpoint, out, data, config, seed, model, baseline } => {
            commands::trace::run(
                &checkpoint,
                &out,
                data.as_deref(),
                config.as_deref(),
                seed,
                &model,
                baseline.as_deref(),
            )
        }
        Command::Bench { checkpoint, out, config, sparsity } => {
            commands::bench::run(&checkpoint, &out, config.as_deref(), sparsity.as_deref())
        }
        Command::Export { checkpoint, out } => commands::export::run(&checkpoint, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MOE_MOTION_LOG", "info"))
        .format_timestamp(None)
        .init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
