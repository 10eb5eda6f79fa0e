//! Command-line driver for the bulkcast simulator.
//!
//! Exit codes: 0 on success, 2 for invalid configuration or input files,
//! 3 for failures during a run.

mod experiment;
mod sweep;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use bulkcast::engine::workload::workload_to_json;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::experiment::{ExperimentArgs, OutputFormat, Prepared};
use crate::sweep::Axis;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0:#}")]
    Config(anyhow::Error),
    #[error("{0:#}")]
    Runtime(anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Runtime(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "bulkcast", version, about = "Simulate bulk multicast transfers over a WAN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write its metrics
    Run(RunArgs),
    /// Run seed-paired variants along one parameter axis
    Sweep(SweepArgs),
    /// Write the workload an experiment would run as JSON
    GenWorkload(GenArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: OutputFormat,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long, value_enum)]
    axis: Axis,
    /// Comma-separated values for the axis
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    /// Output directory; one subdirectory per variant
    #[arg(long, default_value = "sweep")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: OutputFormat,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Workload file to write
    #[arg(long, default_value = "workload.json")]
    out: PathBuf,
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let exp = args.experiment.resolve()?;
    let prep = Prepared::new(&exp)?;
    let outcome = experiment::execute(&prep, exp.sim)?;
    let file = experiment::write_outputs(&args.out, args.format, &exp, &prep, &outcome)?;
    let s = &file.summary;
    println!(
        "{} transfers, {} receivers, {} slots, mean completion {}, bandwidth {:.3}; wrote {}",
        s.requests,
        s.receivers,
        s.slots,
        s.mean_completion.map_or("-".into(), |m| format!("{m:.3}")),
        s.total_bandwidth,
        args.out.display()
    );
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let base = args.experiment.resolve()?;
    let manifest = sweep::run_sweep(&base, args.axis, &args.values, &args.out, args.format)?;
    println!("{:<48} {:>14} {:>14}", "variant", "mean_completion", "bandwidth");
    for v in &manifest.variants {
        let s = &v.run.summary;
        let mean = s.mean_completion.map_or("-".into(), |m| format!("{m:.3}"));
        println!("{:<48} {:>14} {:>14.3}", v.variant, mean, s.total_bandwidth);
    }
    println!("wrote {}", args.out.join(sweep::SWEEP_CSV).display());
    Ok(())
}

fn gen_workload(args: GenArgs) -> Result<(), CliError> {
    let exp = args.experiment.resolve()?;
    let prep = Prepared::new(&exp)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))
            .map_err(CliError::Runtime)?;
    }
    fs::write(&args.out, workload_to_json(&prep.requests, &prep.topology))
        .with_context(|| format!("cannot write {}", args.out.display()))
        .map_err(CliError::Runtime)?;
    println!("{} transfers, sha256 {}; wrote {}", prep.requests.len(), prep.workload_hash, args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::GenWorkload(a) => gen_workload(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
