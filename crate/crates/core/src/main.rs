// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rockrelax::cli::{run, ExperimentPlan, Format, RunStatus};

#[derive(Parser)]
#[command(name = "rockrelax", version, about = "Rockafellian relaxation experiments")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep a plan over its nu list and write reports.
    Run {
        /// `builtin:NAME`, a plan file, or an instance configuration.
        #[arg(long)]
        plan: String,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Compare every solve against the brute-force grid oracle.
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated list of csv, json, plotdata.
        #[arg(long, value_delimiter = ',')]
        format: Option<Vec<Format>>,
    },
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("ROCKRELAX_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .ok()
        .filter(|t| *t > 0)
        .ok_or_else(|| format!("ROCKRELAX_THREADS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(RunStatus::ConfigError.code());
    }
    let Command::Run {
        plan,
        out,
        oracle,
        seed,
        format,
    } = args.command;
    let mut plan = match ExperimentPlan::from_reference(&plan) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(RunStatus::ConfigError.code());
        }
    };
    plan.out = out;
    plan.oracle |= oracle;
    if let Some(s) = seed {
        plan.seed = s;
    }
    if let Some(f) = format {
        plan.formats = f;
    }
    ExitCode::from(run(&plan).code())
}
