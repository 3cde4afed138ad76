//! `mixlr`: declarative experiment harness for mixed linear regression via
//! gradient AM and gradient EM.
//!
//! Experiments are described by flat `key=value` config files; results are
//! emitted as JSON-lines records (optionally with a CSV projection).
//! Identical config and seed produce byte-identical outputs; the exit
//! status is nonzero when any hard assertion embedded in the experiment
//! fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use mixlr::config::{Algorithm, ExperimentConfig, ExperimentKind};
use mixlr::datagen::generate;
use mixlr::experiment::{
    compare_solvers, diagnose_records, geometry_records, run_experiment, write_outputs,
    ExperimentOutcome, RunOptions,
};
use mixlr::records::to_jsonl;
use mixlr::rng::{stream_id, RngStream, StreamPurpose};

#[derive(Parser)]
#[command(
    name = "mixlr",
    about = "Mixed linear regression experiments: gradient AM / gradient EM",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment config file (flat key=value lines).
    #[arg(long)]
    config: PathBuf,

    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Concurrent repetitions / sweep cells.
    #[arg(long, default_value_t = 1)]
    jobs: usize,

    /// Override the config output path; `-` prints records to stdout.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Also write a CSV projection next to the JSONL output.
    #[arg(long)]
    csv: bool,

    /// Include wall-clock fields in the records. Timed records are no
    /// longer byte-identical across runs.
    #[arg(long)]
    timings: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset and write it in the flat dataset format.
    Generate(CommonArgs),
    /// Run gradient AM on generated data and record the trajectory.
    FitAm(CommonArgs),
    /// Run gradient EM on generated data and record the trajectory.
    FitEm(CommonArgs),
    /// Report empirical geometry (lambda, Delta, pi_min) at the truth.
    Geometry(CommonArgs),
    /// Convergence runs plus geometry, soft-min concentration, and
    /// misassignment probes.
    Diagnose(CommonArgs),
    /// Rademacher-complexity and Lipschitz probes over a (R, k, n) grid.
    Rademacher(CommonArgs),
    /// Run the sweep declared by the config kind (separation, sample,
    /// step, or restricted-spectra).
    Sweep(CommonArgs),
    /// Run gradient AM and gradient EM side by side on identical data.
    Compare(CommonArgs),
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    let (args, expected_kinds): (&CommonArgs, &[ExperimentKind]) = match &cli.command {
        Command::Generate(a) | Command::FitAm(a) | Command::FitEm(a) | Command::Geometry(a)
        | Command::Diagnose(a) | Command::Compare(a) => (a, &[ExperimentKind::Convergence]),
        Command::Rademacher(a) => (a, &[ExperimentKind::Rademacher]),
        Command::Sweep(a) => (
            a,
            &[
                ExperimentKind::SeparationSweep,
                ExperimentKind::SampleSweep,
                ExperimentKind::StepSweep,
                ExperimentKind::RestrictedSpectra,
            ],
        ),
    };

    let mut cfg = ExperimentConfig::from_file(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if !expected_kinds.contains(&cfg.kind) {
        anyhow::bail!(
            "kind: config declares `{}`, but this subcommand expects one of: {}",
            cfg.kind.as_str(),
            expected_kinds
                .iter()
                .map(|k| k.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        );
    }

    let options = RunOptions {
        jobs: args.jobs.max(1),
        include_timings: args.timings,
    };

    let outcome = match &cli.command {
        Command::Generate(_) => return generate_dataset(&cfg, args),
        Command::FitAm(_) => {
            cfg.algorithm = Algorithm::Am;
            run_experiment(&cfg, &options)?
        }
        Command::FitEm(_) => {
            cfg.algorithm = Algorithm::Em;
            run_experiment(&cfg, &options)?
        }
        Command::Geometry(_) => geometry_records(&cfg)?,
        Command::Diagnose(_) => diagnose_records(&cfg, &options)?,
        Command::Rademacher(_) | Command::Sweep(_) => run_experiment(&cfg, &options)?,
        Command::Compare(_) => {
            let (outcome, summaries) = compare_solvers(&cfg, &options)?;
            for line in &summaries {
                eprintln!("{line}");
            }
            outcome
        }
    };

    emit(&cfg, &outcome, args)?;
    for failure in &outcome.failures {
        eprintln!("assertion failed: {failure}");
    }
    Ok(if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn generate_dataset(cfg: &ExperimentConfig, args: &CommonArgs) -> Result<ExitCode> {
    let path = resolve_out(cfg, args)
        .context("generate needs an output path (config `out=` or --out)")?;
    let stream = RngStream::new(cfg.seed, stream_id(StreamPurpose::DataGeneration, 0, 0));
    let generated = generate(&cfg.generator, &stream)?;
    generated.dataset.save(&path, cfg.seed)?;
    eprintln!(
        "wrote {} samples (d = {}, k = {}, {} rejected) to {}",
        generated.dataset.n(),
        generated.dataset.dim(),
        cfg.generator.k,
        generated.rejected,
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn emit(cfg: &ExperimentConfig, outcome: &ExperimentOutcome, args: &CommonArgs) -> Result<()> {
    match resolve_out(cfg, args) {
        Some(path) if path != Path::new("-") => {
            write_outputs(cfg, &outcome.records, &path, args.csv)?;
            eprintln!("wrote {} records to {}", outcome.records.len(), path.display());
        }
        _ => print!("{}", to_jsonl(&outcome.records)),
    }
    Ok(())
}

fn resolve_out(cfg: &ExperimentConfig, args: &CommonArgs) -> Option<PathBuf> {
    args.out.clone().or_else(|| cfg.output.clone())
}
