//! `govgate`: validate and load policies, run scenario suites, print traces
//! and start the HTTP gateway.
//!
//! Exit codes: 0 success, 1 invalid policy, 2 usage error, 3 runtime failure.

mod render;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use govgate_core::clock::SystemClock;
use govgate_core::embed::HashingEmbedder;
use govgate_core::enactment::{from_ndjson, to_ndjson};
use govgate_core::harness::{
    compute_metrics, run_suite, ConfigRuns, Delta, Suite, SuiteError, SuiteResult,
};
use govgate_core::policy::{parse_policy_unchecked, validate_policy};
use govgate_core::store::{CacheStatus, PolicyStore};
use govgate_gateway::{bind_and_serve, Gateway, GatewayConfig};

#[derive(Debug, Parser)]
#[command(name = "govgate", version, about = "Runtime governance for tool-using agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check policy files. Directories are searched for `*.md` files.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Policy store maintenance.
    Store {
        #[command(subcommand)]
        command: StoreCommand,
    },
    /// Run a suite directory, or a single scenario file of a suite.
    Run {
        path: PathBuf,
        /// Policy configurations to compare, in order. Deltas are taken
        /// against the first.
        #[arg(long, required = true, value_delimiter = ',')]
        policies: Vec<String>,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
        repetitions: u32,
        /// Print the machine-readable report.
        #[arg(long)]
        json: bool,
        /// Write every scenario trace as NDJSON under this directory.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Pretty-print an NDJSON trace export.
    Trace { file: PathBuf },
    /// Start the HTTP gateway.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Policy store directory.
        #[arg(long, env = "GOVGATE_STORE")]
        store: PathBuf,
        /// Snapshot file keeping paused sessions across restarts.
        #[arg(long)]
        persist: Option<PathBuf>,
        /// Tool fixtures (JSON list of definitions with canned responses).
        #[arg(long)]
        tools: Option<PathBuf>,
        #[arg(long)]
        system_prompt: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
enum StoreCommand {
    /// Load a policy directory and refresh its embedding cache.
    Load { dir: PathBuf },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0} invalid policy file(s)")]
    Invalid(usize),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Writes to stdout; a closed pipe ends output quietly.
fn emit(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(runtime(e)),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("govgate: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Validate { paths } => validate(&paths),
        Command::Store { command: StoreCommand::Load { dir } } => store_load(&dir),
        Command::Run { path, policies, repetitions, json, trace_out } => {
            run(&path, &policies, repetitions as usize, json, trace_out.as_deref())
        }
        Command::Trace { file } => trace(&file),
        Command::Serve { bind, store, persist, tools, system_prompt } => {
            serve(&bind, GatewayConfig { store_dir: store, tools, persist, system_prompt })
        }
    }
}

fn policy_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| runtime(format!("{}: {e}", path.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "md"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(path.clone());
        }
    }
    Ok(out)
}

/// Prints every problem of every file; silent when all are valid.
fn validate(paths: &[PathBuf]) -> Result<(), CliError> {
    let mut invalid = 0;
    for path in policy_files(paths)? {
        let text = fs::read_to_string(&path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        let problems: Vec<String> = match parse_policy_unchecked(&text) {
            Ok(policy) => validate_policy(&policy).iter().map(ToString::to_string).collect(),
            Err(e) => vec![e.to_string()],
        };
        for p in &problems {
            emit(&format!("{}: {p}\n", path.display()))?;
        }
        invalid += usize::from(!problems.is_empty());
    }
    match invalid {
        0 => Ok(()),
        n => Err(CliError::Invalid(n)),
    }
}

fn store_load(dir: &Path) -> Result<(), CliError> {
    let (store, report) =
        PolicyStore::load(dir, Arc::new(HashingEmbedder::default()), Arc::new(SystemClock)).map_err(runtime)?;
    store.save_cache(dir).map_err(runtime)?;
    let cache = match report.cache {
        CacheStatus::Reused => "reused".to_string(),
        CacheStatus::Rebuilt(reason) => format!("rebuilt ({reason})"),
    };
    emit(&format!("loaded {} policies from {}; embedding cache {cache}\n", report.policies, dir.display()))
}

/// Output of `run --json`.
#[derive(Debug, Serialize)]
struct RunReport {
    suite: String,
    repetitions: usize,
    results: Vec<SuiteResult>,
    /// Each configuration against the first, in percentage points.
    deltas: Vec<Delta>,
}

fn run(
    path: &Path,
    configs: &[String],
    repetitions: usize,
    json: bool,
    trace_out: Option<&Path>,
) -> Result<(), CliError> {
    let suite = Suite::load_path(path).map_err(runtime)?;
    if let Some(unknown) = configs.iter().find(|c| !suite.config.configs.contains_key(*c)) {
        return Err(CliError::Usage(format!(
            "unknown policy configuration {unknown:?}; available: {}",
            suite.config_names().join(", ")
        )));
    }
    let mut results = Vec::with_capacity(configs.len());
    for config in configs {
        let result = run_suite(&suite, config, repetitions).map_err(|e| match e {
            SuiteError::UnknownConfig(_) => CliError::Usage(e.to_string()),
            other => runtime(other),
        })?;
        if let Some(dir) = trace_out {
            write_traces(dir, &result)?;
        }
        results.push(result);
    }
    let runs: Vec<ConfigRuns> = results
        .iter()
        .map(|r| ConfigRuns { config: r.config.clone(), total: r.scenarios, per_run_passes: r.per_run_passes.clone() })
        .collect();
    let deltas = compute_metrics(&runs).map_err(runtime)?.deltas;
    let report = RunReport { suite: suite.name.clone(), repetitions, results, deltas };
    if json {
        emit(&(serde_json::to_string_pretty(&report).map_err(runtime)? + "\n"))
    } else {
        emit(&render::report(&report.suite, repetitions, &report.results, &report.deltas))
    }
}

fn write_traces(dir: &Path, result: &SuiteResult) -> Result<(), CliError> {
    for (run, records) in result.records.iter().enumerate() {
        let run_dir = dir.join(&result.config).join(format!("run-{}", run + 1));
        fs::create_dir_all(&run_dir).map_err(|e| runtime(format!("{}: {e}", run_dir.display())))?;
        for r in records {
            let path = run_dir.join(format!("{}.ndjson", r.outcome.scenario));
            fs::write(&path, to_ndjson(&r.outcome.trace))
                .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        }
    }
    Ok(())
}

fn trace(file: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(file).map_err(|e| runtime(format!("{}: {e}", file.display())))?;
    let events = from_ndjson(&text).map_err(|e| runtime(format!("{}: {e}", file.display())))?;
    emit(&render::trace(&events))
}

fn serve(bind: &str, config: GatewayConfig) -> Result<(), CliError> {
    let gateway = Gateway::open(&config).map_err(runtime)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(runtime)?;
    rt.block_on(async {
        eprintln!("govgate: serving {} on {bind}", config.store_dir.display());
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        bind_and_serve(bind, gateway, shutdown).await
    })
    .map_err(runtime)
}
