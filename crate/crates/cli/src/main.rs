mod commands;
mod config;

use std::fmt;
use std::process::ExitCode;

use altnas::analysis::AnalysisError;
use altnas::controller::ControllerError;
use altnas::evaluator::EvalError;
use altnas::evolution::EvolutionError;
use clap::{Parser, Subcommand};

const AFTER_HELP: &str = "\
Exit codes: 0 success, 1 usage or configuration error, 2 feasibility verdict \
failure, 3 evaluator or protocol failure.

External evaluators speak evaluator protocol version 1: JSON lines over the \
child's stdin/stdout. The engine sends {\"type\":\"hello\",\"version\":1,\"space_hash\":H} \
and expects the same back, then {\"type\":\"eval\",\"id\":N,\"genome\":{...}} answered by \
{\"type\":\"result\",\"id\":N,\"fitness\":F} with F in [0, 1], and finally \
{\"type\":\"shutdown\"}.";

/// Alternating per-module evolutionary architecture search under hardware
/// resource budgets.
#[derive(Debug, Parser)]
#[command(name = "altnas", version, after_help = AFTER_HELP)]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Start a search into a fresh run directory.
    Search(commands::SearchCmd),
    /// Continue an interrupted run from its checkpoint.
    Resume(commands::ResumeCmd),
    /// Cost report and budget verdict for one genome.
    Estimate(commands::EstimateCmd),
    /// Fitness statistics of joint or conditioned random samples.
    Stats(commands::StatsCmd),
    /// Exhaustive best genome of a small space.
    Oracle(commands::OracleCmd),
    /// Print (and optionally re-evaluate) the best genome of a run.
    ExtractBest(commands::ExtractBestCmd),
}

/// A failure with an explicit exit code.
#[derive(Debug)]
pub struct Exit {
    pub code: u8,
    pub message: String,
}

impl Exit {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Exit {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Exit>() {
            return e.code;
        }
        if let Some(e) = cause.downcast_ref::<ControllerError>() {
            if e.is_infeasible() {
                return 2;
            }
            if e.is_evaluator_failure() {
                return 3;
            }
        }
        if let Some(e) = cause.downcast_ref::<EvolutionError>() {
            match e {
                EvolutionError::NoFeasibleSample { .. } => return 2,
                EvolutionError::Eval(_) => return 3,
                _ => {}
            }
        }
        if let Some(e) = cause.downcast_ref::<AnalysisError>() {
            match e {
                AnalysisError::Exhausted { .. } => return 2,
                AnalysisError::Eval(_) => return 3,
                _ => {}
            }
        }
        if cause.is::<EvalError>() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Search(c) => commands::search(c),
        Command::Resume(c) => commands::resume(c),
        Command::Estimate(c) => commands::estimate(c),
        Command::Stats(c) => commands::stats(c),
        Command::Oracle(c) => commands::oracle(c),
        Command::ExtractBest(c) => commands::extract_best(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<StdoutClosed>() => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The reader of our stdout went away, as with `| head`.
#[derive(Debug)]
pub struct StdoutClosed;

impl fmt::Display for StdoutClosed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("stdout closed")
    }
}

impl std::error::Error for StdoutClosed {}

pub fn stdout_error(e: std::io::Error) -> anyhow::Error {
    if e.kind() == std::io::ErrorKind::BrokenPipe {
        StdoutClosed.into()
    } else {
        e.into()
    }
}
