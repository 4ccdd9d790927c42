//! Command-line front end: validates scenario files, executes runs and
//! sweeps, and re-audits finished output directories.
//!
//! Exit status: 0 when every audit passed, 1 when some audit failed, 2 when
//! the invocation could not complete at all (bad configuration, io failure,
//! malformed artifact). Failures also emit one JSON document on stderr so
//! scripts never have to scrape the human-readable summary.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use phaseflow::config::{load_config, ConfigError};
use phaseflow::runner::{
    audit_run_dir, run_scenario, sweep_scenario, AuditLine, RunnerError, RunnerOptions,
    ScenarioReport,
};

/// Particle transport with path-length mass dissipation: deterministic runs,
/// dissipation-rate sweeps, and artifact audits driven by TOML scenarios.
#[derive(Parser)]
#[command(name = "phaseflow", version, about)]
struct Cli {
    /// Worker threads; 0 means one per core.
    #[arg(long, global = true, env = "PHASEFLOW_THREADS", default_value_t = 0)]
    threads: usize,
    /// Overrides the sampling seed from the scenario file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory from the scenario file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parses and validates a scenario file without running anything.
    Validate {
        /// Scenario file (TOML).
        config: PathBuf,
    },
    /// Runs every configured dissipation rate, writes artifacts, audits them.
    Run {
        /// Scenario file (TOML).
        config: PathBuf,
    },
    /// Like run, plus the rate-sweep mass matrix and the resolution study.
    Sweep {
        /// Scenario file (TOML).
        config: PathBuf,
    },
    /// Re-reads a finished output directory and re-checks the artifacts.
    Audit {
        /// Directory a previous run or sweep wrote.
        run_dir: PathBuf,
    },
}

enum CliError {
    Config(ConfigError),
    Runner(RunnerError),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Runner(RunnerError::Io { .. }) => "io",
            CliError::Runner(RunnerError::Run { .. }) => "run",
            CliError::Runner(RunnerError::Sampler(_)) => "sampler",
            CliError::Runner(RunnerError::Artifact { .. }) => "artifact",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Config(e) => e.to_string(),
            CliError::Runner(e) => e.to_string(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<RunnerError> for CliError {
    fn from(e: RunnerError) -> Self {
        CliError::Runner(e)
    }
}

#[derive(Serialize)]
struct FailureDoc<'a> {
    error: &'a str,
    message: Option<String>,
    failures: Vec<&'a AuditLine>,
}

fn dispatch(cmd: &Command, opts: &RunnerOptions) -> Result<ScenarioReport, CliError> {
    match cmd {
        Command::Validate { config } => {
            let cfg = load_config(config)?;
            let summary = vec![format!(
                "configuration ok: {} (dimension {}, {} rates, finest resolution {})",
                cfg.name,
                cfg.dimension,
                cfg.eps_values().len(),
                cfg.steps_values()
                    .last()
                    .expect("validated flow lists a resolution"),
            )];
            Ok(ScenarioReport {
                name: cfg.name,
                out_dir: PathBuf::new(),
                summary,
                audits: Vec::new(),
            })
        }
        Command::Run { config } => Ok(run_scenario(&load_config(config)?, opts)?),
        Command::Sweep { config } => Ok(sweep_scenario(&load_config(config)?, opts)?),
        Command::Audit { run_dir } => Ok(audit_run_dir(run_dir)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            let doc = FailureDoc {
                error: "threads",
                message: Some(e.to_string()),
                failures: Vec::new(),
            };
            eprintln!(
                "{}",
                serde_json::to_string(&doc).expect("report serializes")
            );
            return ExitCode::from(2);
        }
    };

    let opts = RunnerOptions {
        seed: cli.seed,
        out_dir: cli.out.clone(),
    };
    match pool.install(|| dispatch(&cli.command, &opts)) {
        Ok(report) => {
            print!("{}", report.render());
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                let doc = FailureDoc {
                    error: "audit",
                    message: None,
                    failures: report.audits.iter().filter(|a| !a.passed).collect(),
                };
                eprintln!(
                    "{}",
                    serde_json::to_string(&doc).expect("report serializes")
                );
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            let doc = FailureDoc {
                error: e.kind(),
                message: Some(e.message()),
                failures: Vec::new(),
            };
            eprintln!(
                "{}",
                serde_json::to_string(&doc).expect("report serializes")
            );
            ExitCode::from(2)
        }
    }
}
