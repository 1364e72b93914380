//! Command-line surface: identification, verification, and sensitivity runs
//! as reproducible batch jobs.
//!
//! Four subcommands cover the pipeline: `identify` builds a full-data
//! distribution from an observed table and a plan, `verify` checks a claimed
//! full table against an observed one, `sensitivity` sweeps posterior draws
//! across a mechanism suite, and `validate-plan` lints a plan file. Every
//! run that writes files also writes a `manifest.json` with SHA-256 digests
//! of inputs and outputs, so a run can be reproduced and checked bit for bit.
//!
//! Exit codes: 0 success, 1 failed verification, 2 invalid input
//! (parse/plan/config/space errors), 3 numerical failure (a zero denominator
//! under the `error` policy).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::engine::{run_sequential, EngineError, IdentResult};
use crate::fileio::{self, read_plan, read_suite, read_table, FileError, SuiteConfig};
use crate::plan::ZeroCellPolicy;
use crate::sensitivity::{
    summarize, write_plot_records, CountTable, DirichletPrior, SuiteOptions,
};
use crate::verify::check_nps;

#[derive(Debug, Parser)]
#[command(
    name = "npsat",
    version,
    about = "Build, check, and stress-test full-data distributions for categorical data with values missing not at random"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Tolerance for saturation checks.
    #[arg(long, global = true, default_value_t = 1e-10)]
    tolerance: f64,
    /// What to do when a needed denominator has zero mass; overrides the plan file.
    #[arg(long, global = true, value_enum)]
    zero_cell_policy: Option<PolicyArg>,
    /// Base seed for posterior draws; overrides the suite file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of posterior draws; overrides the suite file.
    #[arg(long, global = true)]
    draws: Option<usize>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = "npsat-out")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    /// Refuse to divide by a zero cell.
    Error,
    /// Spread the orphaned mass uniformly and record the event.
    Uniform,
}

impl From<PolicyArg> for ZeroCellPolicy {
    fn from(arg: PolicyArg) -> Self {
        match arg {
            PolicyArg::Error => ZeroCellPolicy::Error,
            PolicyArg::Uniform => ZeroCellPolicy::UniformFill,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Construct the full-data distribution an observed table and plan imply.
    Identify {
        /// Observed-data table (kind probabilities or counts).
        table: PathBuf,
        /// Identification plan (TOML).
        plan: PathBuf,
    },
    /// Check that a full-data table reproduces an observed-data table.
    Verify {
        /// Full-data table (kind full).
        full: PathBuf,
        /// Observed-data table it should collapse to.
        observed: PathBuf,
    },
    /// Sweep posterior draws across a suite of missingness mechanisms.
    Sensitivity {
        /// Observed-data counts (kind counts).
        counts: PathBuf,
        /// Suite of mechanisms and estimands (TOML).
        suite: PathBuf,
    },
    /// Check a plan file against the sequential-identification rules.
    ValidatePlan {
        /// Identification plan (TOML).
        plan: PathBuf,
    },
}

/// Failures mapped to process exit codes.
#[derive(Debug)]
enum CliError {
    /// Exit 1: the verification ran and failed.
    VerifyFailed,
    /// Exit 2: bad input — parse errors, invalid plans, mismatched spaces.
    Invalid(String),
    /// Exit 3: numerical failure during identification.
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::VerifyFailed => 1,
            CliError::Invalid(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<FileError> for CliError {
    fn from(err: FileError) -> Self {
        CliError::Invalid(err.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Invalid(err.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(err: EngineError) -> Self {
        match err {
            EngineError::PlanInvalid(_) | EngineError::SpaceMismatch(_) => {
                CliError::Invalid(err.to_string())
            }
            EngineError::Step { .. } | EngineError::SignatureMismatch(_) | EngineError::Table(_) => {
                CliError::Numerical(err.to_string())
            }
        }
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Identify { table, plan } => cmd_identify(&cli, table, plan),
        Command::Verify { full, observed } => cmd_verify(&cli, full, observed),
        Command::Sensitivity { counts, suite } => cmd_sensitivity(&cli, counts, suite),
        Command::ValidatePlan { plan } => cmd_validate_plan(plan),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            match &err {
                CliError::VerifyFailed => {}
                CliError::Invalid(msg) | CliError::Numerical(msg) => eprintln!("error: {msg}"),
            }
            err.exit_code()
        }
    }
}

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

/// Everything needed to reproduce a run bit for bit: the exact inputs (by
/// digest), the parameters, and digests of what was produced.
#[derive(Debug, Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    command: String,
    created_unix: u64,
    inputs: Vec<FileDigest>,
    params: serde_json::Value,
    outputs: Vec<FileDigest>,
}

fn digest_file(path: &Path) -> Result<FileDigest, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: format!("{:x}", Sha256::digest(&bytes)),
    })
}

fn write_manifest(
    out_dir: &Path,
    command: &str,
    inputs: &[&Path],
    params: serde_json::Value,
    outputs: &[PathBuf],
) -> Result<(), CliError> {
    let manifest = RunManifest {
        tool: "npsat",
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        inputs: inputs
            .iter()
            .map(|p| digest_file(p))
            .collect::<Result<_, _>>()?,
        params,
        outputs: outputs
            .iter()
            .map(|p| digest_file(p))
            .collect::<Result<_, _>>()?,
    };
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_output(out_dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let path = out_dir.join(name);
    std::fs::write(&path, contents)?;
    println!("wrote {}", path.display());
    Ok(path)
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

/// What `identify` saves besides the two tables: the stage factorization and
/// any fill events, enough to audit how the full law was assembled.
#[derive(Serialize)]
struct FactorRecord<'a> {
    processing_order: Vec<usize>,
    final_stage: &'a crate::stage::StageDistribution,
    factors: &'a [crate::engine::StageFactor],
    events: &'a [crate::engine::RunEvent],
}

fn cmd_identify(cli: &Cli, table_path: &Path, plan_path: &Path) -> Result<(), CliError> {
    let observed = read_table(table_path)?.into_observed()?;
    let mut plan = read_plan(plan_path)?;
    if let Some(policy) = cli.zero_cell_policy {
        plan.zero_cell_policy = policy.into();
    }
    let result: IdentResult = run_sequential(&observed, &plan)?;
    let report = check_nps(&result.full, &observed, cli.tolerance)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    println!("{report}");
    if !report.passed {
        return Err(CliError::Numerical(
            "constructed distribution failed its own saturation check".into(),
        ));
    }
    if result.study.space().value_cells() <= 64 {
        let mut cells = String::new();
        for (rank, &mass) in result.study.data().iter().enumerate() {
            let values = result.study.space().value_at(rank);
            let labels: Vec<String> = values
                .iter()
                .enumerate()
                .map(|(j, &v)| format!("X{}={}", j + 1, v + 1))
                .collect();
            writeln!(cells, "P({}) = {mass:.16e}", labels.join(", ")).unwrap();
        }
        print!("{cells}");
    }

    std::fs::create_dir_all(&cli.out)?;
    let mut outputs = vec![
        write_output(&cli.out, "full.txt", &fileio::write_full(&result.full))?,
        write_output(&cli.out, "study.txt", &fileio::write_study(&result.study))?,
    ];
    let factor_record = FactorRecord {
        processing_order: result.processing_order.iter().map(|&v| v + 1).collect(),
        final_stage: &result.final_stage,
        factors: &result.factors,
        events: &result.events,
    };
    outputs.push(write_output(
        &cli.out,
        "factors.json",
        &serde_json::to_string_pretty(&factor_record).unwrap(),
    )?);
    outputs.push(write_output(
        &cli.out,
        "nps_report.json",
        &serde_json::to_string_pretty(&report).unwrap(),
    )?);
    write_manifest(
        &cli.out,
        "identify",
        &[table_path, plan_path],
        serde_json::json!({
            "tolerance": cli.tolerance,
            "zero_cell_policy": match plan.zero_cell_policy {
                ZeroCellPolicy::Error => "error",
                ZeroCellPolicy::UniformFill => "uniform",
            },
        }),
        &outputs,
    )
}

fn cmd_verify(cli: &Cli, full_path: &Path, observed_path: &Path) -> Result<(), CliError> {
    let full = read_table(full_path)?.into_full()?;
    let observed = read_table(observed_path)?.into_observed()?;
    let report = check_nps(&full, &observed, cli.tolerance)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    println!("{report}");
    if report.passed {
        Ok(())
    } else {
        Err(CliError::VerifyFailed)
    }
}

fn cmd_sensitivity(cli: &Cli, counts_path: &Path, suite_path: &Path) -> Result<(), CliError> {
    let counts: CountTable = read_table(counts_path)?.into_counts()?;
    let config: SuiteConfig = read_suite(suite_path)?;
    config.validate_against(counts.space())?;

    let mut options = SuiteOptions {
        nps_tolerance: cli.tolerance,
        ..SuiteOptions::default()
    };
    if let Some(draws) = cli.draws.or(config.draws) {
        options.n_draws = draws;
    }
    if let Some(seed) = cli.seed.or(config.seed) {
        options.seed = seed;
    }
    if let Some(alpha) = config.prior_alpha {
        options.prior = Some(
            DirichletPrior::symmetric_with(counts.space(), alpha)
                .map_err(|e| CliError::Invalid(e.to_string()))?,
        );
    }

    let draws = run_suite(&counts, &config, &options)?;
    let summary = summarize(&draws);
    print!("{summary}");

    std::fs::create_dir_all(&cli.out)?;
    let mut tsv = Vec::new();
    write_plot_records(&draws, &mut tsv)?;
    let outputs = vec![
        write_output(&cli.out, "draws.tsv", std::str::from_utf8(&tsv).unwrap())?,
        write_output(&cli.out, "summary.txt", &summary.to_string())?,
    ];
    write_manifest(
        &cli.out,
        "sensitivity",
        &[counts_path, suite_path],
        serde_json::json!({
            "seed": options.seed,
            "draws": options.n_draws,
            "tolerance": options.nps_tolerance,
            "prior_alpha": config.prior_alpha,
        }),
        &outputs,
    )
}

fn run_suite(
    counts: &CountTable,
    config: &SuiteConfig,
    options: &SuiteOptions,
) -> Result<crate::sensitivity::SensitivityDraws, CliError> {
    crate::sensitivity::run_suite(counts, &config.suite, &config.estimands, options)
        .map_err(|e| CliError::Invalid(e.to_string()))
}

fn cmd_validate_plan(plan_path: &Path) -> Result<(), CliError> {
    let plan = read_plan(plan_path)?;
    let violations = plan.validate();
    if violations.is_empty() {
        println!(
            "plan is valid: {} variables, {} blocks, processing order {:?}",
            plan.space.num_vars(),
            plan.partition.num_blocks(),
            plan.order.iter().map(|&v| v + 1).collect::<Vec<_>>()
        );
        Ok(())
    } else {
        let mut msg = String::from("plan is invalid:");
        for violation in &violations {
            write!(msg, "\n  - {violation}").unwrap();
        }
        Err(CliError::Invalid(msg))
    }
}
