use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use stochmech_core::config::{parse_checks, parse_config_unchecked};
use stochmech_core::{execute, write_outputs, OutputFormat, RunConfig, Stage};

/// Exit status when checks ran but at least one gating check failed.
const EXIT_CHECKS_FAILED: u8 = 1;
/// Bad flags or configuration.
const EXIT_CONFIG: u8 = 2;
/// A numerical stage raised an error.
const EXIT_STAGE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "stochmech", version, about = "Stochastic-mechanics verification runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the Schrödinger reference and dump the fields.
    Solve(RunArgs),
    /// Solve, then sample forward and backward ensembles and dump them.
    Sample(RunArgs),
    /// Run the enabled checks and write the report.
    Verify(RunArgs),
    /// Like `verify`, plus long-format plot data.
    Report(RunArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Text,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Configuration file (flat `key = value` lines).
    #[arg(long, short)]
    config: Option<PathBuf>,

    /// Scenario to run with defaults when no config file is given.
    #[arg(long, conflicts_with = "config")]
    scenario: Option<String>,

    #[arg(long)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Check id to run (repeatable); replaces the configured list.
    #[arg(long = "check")]
    checks: Vec<String>,

    #[arg(long, value_enum)]
    format: Option<Format>,

    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,

    /// Add a constant to both drifts before verification (fault injection).
    #[arg(long)]
    fault_drift_shift: Option<f64>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let text = match (&self.config, &self.scenario) {
            (Some(path), _) => std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
            (None, Some(s)) => format!("scenario = {s}\n"),
            (None, None) => anyhow::bail!("either --config or --scenario is required"),
        };
        // flags may supply the seed or replace the checks, so validate afterwards
        let mut cfg = parse_config_unchecked(&text)?;
        if let Some(seed) = self.seed {
            cfg.seed = Some(seed);
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if !self.checks.is_empty() {
            cfg.checks = parse_checks(&self.checks.join(","), cfg.scenario).map_err(anyhow::Error::msg)?;
        }
        if let Some(f) = self.format {
            cfg.format = match f {
                Format::Csv => OutputFormat::Csv,
                Format::Text => OutputFormat::Text,
            };
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        if let Some(shift) = self.fault_drift_shift {
            anyhow::ensure!(shift.is_finite(), "--fault-drift-shift must be finite");
            cfg.drift_shift = shift;
        }
        Ok(cfg)
    }
}

fn run(stage: Stage, args: &RunArgs) -> ExitCode {
    let cfg = match args.load().and_then(|c| {
        if stage == Stage::Solve { c.validate_without_seed() } else { c.validate() }?;
        Ok(c)
    }) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let outcome = match execute(&cfg, stage) {
        Ok(o) => o,
        Err(f) => {
            eprintln!("error: {f}");
            return ExitCode::from(EXIT_STAGE);
        }
    };
    let files = match write_outputs(&outcome) {
        Ok(f) => f,
        Err(f) => {
            eprintln!("error: {f}");
            return ExitCode::from(EXIT_STAGE);
        }
    };
    for f in &files {
        eprintln!("wrote {}", f.display());
    }
    if stage < Stage::Verify {
        return ExitCode::SUCCESS;
    }
    print!("{}", outcome.report_text());
    let failing = outcome.failing();
    if failing.is_empty() {
        ExitCode::SUCCESS
    } else {
        let ids: Vec<&str> = failing.iter().map(|c| c.id.as_str()).collect();
        eprintln!("failing checks: {}", ids.join(", "));
        ExitCode::from(EXIT_CHECKS_FAILED)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, args) = match &cli.command {
        Command::Solve(a) => (Stage::Solve, a),
        Command::Sample(a) => (Stage::Sample, a),
        Command::Verify(a) => (Stage::Verify, a),
        Command::Report(a) => (Stage::Report, a),
    };
    run(stage, args)
}
