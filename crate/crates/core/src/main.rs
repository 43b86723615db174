use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qarrival::config::{ExperimentConfig, OutputFormat};
use qarrival::output::write_bundle;
use qarrival::pipeline::{self, ResultBundle, RunError, RunOptions};

/// Arrival-time distributions of 1D wave packets, free and behind barriers.
///
/// Exit codes: 0 all checks passed, 1 a tolerance check failed, 2 invalid
/// config, 3 numerical or I/O failure.
#[derive(Parser, Debug)]
#[command(name = "qarrival", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Free-packet arrival distributions and moments.
    Free(Args),
    /// Transmitted arrival distributions behind a potential.
    Barrier(Args),
    /// Analytic means against the split-operator flux oracle.
    Compare(Args),
    /// Time–energy uncertainty products over a random Gaussian ensemble.
    Uncertainty(Args),
    /// Parse and check a config without running anything.
    Validate(Args),
}

#[derive(clap::Args, Debug)]
struct Args {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format; overrides `output.format`.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Seed for randomized runs; overrides `ensemble.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn load(args: &Args) -> Result<ExperimentConfig, RunError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|source| RunError::Io { path: args.config.display().to_string(), source })?;
    Ok(ExperimentConfig::from_toml_str(&text)?)
}

fn report(bundle: &ResultBundle) {
    for d in &bundle.detectors {
        println!(
            "X = {}: total {:.9}, mean {:.6} ± {:.6} (window loss ≤ {:.1e})",
            d.detector, d.distribution.total, d.moments.mean, d.moments.spread, d.truncation_bound
        );
    }
    for v in &bundle.verdicts {
        println!("{} {} = {:.6e} ({})", if v.pass { "PASS" } else { "FAIL" }, v.name, v.value, v.criterion);
    }
}

fn run(cli: Cli) -> Result<bool, RunError> {
    let (args, kind) = match &cli.command {
        Command::Free(a) => (a, "free"),
        Command::Barrier(a) => (a, "barrier"),
        Command::Compare(a) => (a, "compare"),
        Command::Uncertainty(a) => (a, "uncertainty"),
        Command::Validate(a) => (a, "validate"),
    };
    let cfg = load(args)?;
    let bundle = match kind {
        "free" => pipeline::run_free(&cfg)?,
        "barrier" => pipeline::run_barrier(&cfg)?,
        "compare" => pipeline::run_compare(&cfg)?,
        "uncertainty" => pipeline::run_uncertainty(&cfg, RunOptions { seed: args.seed })?,
        _ => {
            pipeline::validate(&cfg)?;
            println!("config ok");
            return Ok(true);
        }
    };
    report(&bundle);
    let format = match args.format {
        Some(Format::Csv) => OutputFormat::Csv,
        Some(Format::Json) => OutputFormat::Json,
        None => cfg.output.format,
    };
    let dir = args.out.clone().or_else(|| cfg.output.dir.as_ref().map(PathBuf::from));
    if let Some(dir) = dir {
        let written = write_bundle(&bundle, &dir, format)?;
        println!("wrote {} files to {}", written.len(), dir.display());
    }
    Ok(bundle.passed())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
