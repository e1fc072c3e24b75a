//! Batch scenario runner behind the `hamlens` binary.
//!
//! Verbs: `run`, `validate`, `list-builtins`. Exit codes of `run`: 0 when all
//! checks pass, 2 when a threshold check fails, 1 on a hard error. A
//! `summary.json` is written in every case.

pub mod config;
pub mod experiments;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use config::{Issue, Scenario};
use output::{Header, Sink, Status, Summary};

#[derive(Debug, Parser)]
#[command(name = "hamlens", version, about = "Hamiltonian lens rigidity laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write its artifacts.
    Run {
        config: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (0 = all cores).
        #[arg(long, env = "HAMLENS_THREADS")]
        threads: Option<usize>,
        /// Output directory (default: out/<scenario name>).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// `dotted.key=value`, value parsed as TOML.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Check a scenario against the schema without running it.
    Validate {
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// List builtin models, shapes, Finsler structures, gauges and experiments.
    ListBuiltins,
}

#[derive(Debug, Serialize)]
pub struct ValidationReport {
    pub config: String,
    pub valid: bool,
    pub issues: Vec<Issue>,
}

/// Schema report for a file; unreadable files become a single issue.
pub fn validate(path: &Path, overrides: &[String]) -> ValidationReport {
    let issues = match fs::read_to_string(path) {
        Ok(text) => config::load(&text, overrides).err().unwrap_or_default(),
        Err(e) => vec![Issue {
            path: String::new(),
            kind: config::IssueKind::Syntax,
            message: format!("cannot read {}: {e}", path.display()),
        }],
    };
    ValidationReport {
        config: path.display().to_string(),
        valid: issues.is_empty(),
        issues,
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub overrides: Vec<String>,
}

fn format_issues(issues: &[Issue]) -> String {
    issues
        .iter()
        .map(|i| format!("{}: {}", if i.path.is_empty() { "<root>" } else { &i.path }, i.message))
        .collect::<Vec<_>>()
        .join("; ")
}

fn execute(sc: &Scenario, threads: usize, sink: &mut Sink) -> crate::Result<Vec<output::Check>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| crate::Error::Io(e.to_string()))?;
    let mut run = experiments::Run::new(sc, &pool);
    experiments::run(sc.experiment, &mut run, sink)?;
    Ok(run.checks)
}

/// Run a scenario file and return the written summary.
pub fn run(path: &Path, opts: &RunOptions) -> Summary {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    let loaded = fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))
        .and_then(|text| config::load(&text, &opts.overrides).map_err(|i| format_issues(&i)));
    let (name, experiment, seed) = match &loaded {
        Ok(sc) => (sc.name.clone(), sc.experiment.as_str().to_string(), opts.seed.unwrap_or(sc.seed)),
        Err(_) => (stem, String::new(), opts.seed.unwrap_or(0)),
    };
    let dir = opts.out_dir.clone().unwrap_or_else(|| Path::new("out").join(&name));
    let mut summary = Summary {
        schema_version: config::SCHEMA_VERSION,
        scenario: name.clone(),
        experiment,
        seed,
        status: Status::Error,
        error: None,
        checks: Vec::new(),
        artifacts: Vec::new(),
    };
    let mut sink = match Sink::new(dir.clone(), Header { scenario: name, seed }) {
        Ok(s) => s,
        Err(e) => {
            summary.error = Some(e.to_string());
            return summary;
        }
    };
    match loaded {
        Err(msg) => summary.error = Some(format!("config: {msg}")),
        Ok(mut sc) => {
            sc.seed = seed;
            match execute(&sc, opts.threads.unwrap_or(0), &mut sink) {
                Ok(checks) => {
                    summary.status = if checks.iter().all(|c| c.pass) {
                        Status::Pass
                    } else {
                        Status::Fail
                    };
                    summary.checks = checks;
                }
                Err(e) => summary.error = Some(e.to_string()),
            }
        }
    }
    summary.artifacts = sink.artifacts.clone();
    summary.artifacts.push("summary.json".into());
    if let Err(e) = output::write_json(&dir.join("summary.json"), &summary) {
        summary.status = Status::Error;
        summary.error = Some(e.to_string());
    }
    summary
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    match cli.command {
        Command::Run {
            config,
            seed,
            threads,
            out_dir,
            overrides,
        } => {
            let s = run(
                &config,
                &RunOptions {
                    seed,
                    threads,
                    out_dir,
                    overrides,
                },
            );
            for c in &s.checks {
                println!(
                    "{:<24} {:.3e} <= {:.1e}  {}",
                    c.name,
                    c.value,
                    c.threshold,
                    if c.pass { "ok" } else { "FAIL" }
                );
            }
            if let Some(e) = &s.error {
                eprintln!("error: {e}");
            }
            s.exit_code()
        }
        Command::Validate { config, overrides } => {
            let r = validate(&config, &overrides);
            println!("{}", serde_json::to_string_pretty(&r).expect("serializable"));
            i32::from(!r.valid)
        }
        Command::ListBuiltins => {
            println!(
                "{}",
                serde_json::to_string_pretty(&config::builtin_listing()).expect("serializable")
            );
            0
        }
    }
}
