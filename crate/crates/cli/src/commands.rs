use std::io::{self, Write};
use std::path::{Path, PathBuf};

use altnas::analysis::{
    compare_conditions, sample_stats, samples_csv, stats_csv, Condition, SamplingSpec,
};
use altnas::controller::{
    BestGenomeDocument, RunDir, SearchEngine, SearchState, CONFIG_FILE, RUN_DOCUMENT_VERSION,
};
use altnas::cost::ResourceBudget;
use altnas::evaluator::{oracle_best, Evaluator};
use altnas::search_space::{DetectionSearchSpace, Genome, ModuleId, DEFAULT_ENUMERATION_CAP};
use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use serde::Serialize;

use crate::config::{load_space, BudgetArgs, EvaluatorSpec, RunConfig, SearchArgs, RUN_CONFIG_VERSION};
use crate::Exit;

// A closed stdout ends the command cleanly; other write errors propagate.
macro_rules! out {
    ($($t:tt)*) => {
        writeln!(io::stdout(), $($t)*).map_err(crate::stdout_error)?
    };
}

#[derive(Debug, Args)]
pub struct SearchCmd {
    /// JSON file with search settings; flags given here win over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory; must be absent or empty.
    #[arg(long)]
    out: PathBuf,
    /// Stop after this many generations, leaving a resumable checkpoint.
    #[arg(long)]
    stop_after: Option<usize>,
    #[command(flatten)]
    args: SearchArgs,
}

#[derive(Debug, Args)]
pub struct ResumeCmd {
    #[arg(long)]
    run: PathBuf,
    /// Override the recorded worker count (results do not depend on it).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    stop_after: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EstimateCmd {
    #[arg(long)]
    space: PathBuf,
    /// Genome JSON (`{"backbone":[..],"head":[..]}`) or a best_genome.json,
    /// as a file path or inline.
    #[arg(long)]
    genome: String,
    #[command(flatten)]
    budget: BudgetArgs,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConditionArg {
    Joint,
    Conditioned,
    /// Joint baseline followed by the conditioned row.
    Both,
}

#[derive(Debug, Args)]
pub struct StatsCmd {
    #[arg(long)]
    space: PathBuf,
    /// synthetic:<seed> or external:<command line>.
    #[arg(long)]
    evaluator: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Samples per condition (at least 2).
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Defaults to `both` with --fix-from, `joint` otherwise.
    #[arg(long, value_enum)]
    condition: Option<ConditionArg>,
    /// Genome or best_genome.json whose other modules stay fixed.
    #[arg(long)]
    fix_from: Option<PathBuf>,
    /// Module sampled under the conditioned setting.
    #[arg(long, default_value = "head")]
    module: ModuleId,
    /// Sample without replacement.
    #[arg(long)]
    distinct: bool,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 16)]
    window: usize,
    #[command(flatten)]
    budget: BudgetArgs,
    /// Directory for stats.csv, samples.csv and comparison.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleCmd {
    #[arg(long)]
    space: PathBuf,
    #[arg(long)]
    evaluator: String,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 16)]
    window: usize,
    /// Refuse spaces with more genomes than this.
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    cap: u128,
    #[command(flatten)]
    budget: BudgetArgs,
}

#[derive(Debug, Args)]
pub struct ExtractBestCmd {
    #[arg(long)]
    run: PathBuf,
    /// Re-evaluate the genome and require the recorded fitness.
    #[arg(long)]
    verify: bool,
}

fn parse_evaluator(s: &str) -> anyhow::Result<EvaluatorSpec> {
    s.parse().map_err(|e: String| Exit::new(1, e).into())
}

/// The budget with the per-module split used during search.
fn split_budget(args: &BudgetArgs, space: &DetectionSearchSpace) -> anyhow::Result<ResourceBudget> {
    let budget = args.resolve()?.with_default_split(space.module_ids());
    budget.validate()?;
    Ok(budget)
}

/// Reads a genome from a file path or inline JSON. A best_genome document is
/// accepted too.
fn read_genome(arg: &str) -> anyhow::Result<Genome> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).with_context(|| format!("reading genome {arg}"))?
    };
    let mut value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing genome {arg}"))?;
    if let Some(inner) = value.get_mut("genome") {
        value = inner.take();
    }
    serde_json::from_value(value).with_context(|| format!("genome {arg}"))
}

fn load_run(run: &Path) -> anyhow::Result<(RunDir, RunConfig, DetectionSearchSpace, SearchState)> {
    let dir = RunDir::open(run)?;
    let config: RunConfig = dir.read_json(CONFIG_FILE)?;
    if config.version != RUN_CONFIG_VERSION {
        bail!(
            "{CONFIG_FILE} version {} is not supported (expected {RUN_CONFIG_VERSION})",
            config.version
        );
    }
    let space = load_space(&config.space)?;
    if space.space_hash() != config.space_hash {
        bail!(
            "space {} now hashes to {}, the run was started on {}; refusing to resume",
            config.space.display(),
            space.space_hash(),
            config.space_hash
        );
    }
    let state = dir.load_checkpoint()?;
    Ok((dir, config, space, state))
}

/// Steps the engine, checkpointing every generation, until it finishes or
/// `stop_after` generations ran.
fn drive<E: Evaluator + ?Sized>(
    dir: &RunDir,
    mut engine: SearchEngine<'_, E>,
    stop_after: Option<usize>,
) -> anyhow::Result<()> {
    engine.run_for(stop_after.unwrap_or(usize::MAX), |state, row| {
        log::info!(
            "generation {} ({} cycle {}): best {} mean {}",
            row.generation,
            row.phase_module,
            row.cycle,
            row.best_fitness,
            row.mean_fitness
        );
        dir.checkpoint(state)
    })?;
    let state = engine.state();
    if !engine.is_finished() {
        eprintln!(
            "stopped after generation {}; continue with `altnas resume --run {}`",
            state.generations_done,
            dir.root().display()
        );
        return Ok(());
    }
    dir.write_results(state)?;
    print_best(state)
}

fn print_best(state: &SearchState) -> anyhow::Result<()> {
    let best = state.best.clone().context("run has no best genome yet")?;
    let doc = BestGenomeDocument {
        version: RUN_DOCUMENT_VERSION,
        space_hash: state.space_hash,
        best,
    };
    out!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}

pub fn search(cmd: SearchCmd) -> anyhow::Result<()> {
    let file = match &cmd.config {
        Some(p) => SearchArgs::load(p)?,
        None => SearchArgs::default(),
    };
    let (config, space) = RunConfig::resolve(cmd.args.or(file))?;
    let dir = RunDir::create(&cmd.out)?;
    dir.write_json(CONFIG_FILE, &config)?;
    let evaluator = config.evaluator.build(&space, config.workers, config.window)?;
    let engine = SearchEngine::new(
        &space,
        config.schedule.clone(),
        config.evolution.clone(),
        config.budget.clone(),
        &evaluator,
    )?;
    dir.checkpoint(engine.state())?;
    drive(&dir, engine, cmd.stop_after)
}

pub fn resume(cmd: ResumeCmd) -> anyhow::Result<()> {
    let (dir, config, space, state) = load_run(&cmd.run)?;
    let workers = cmd.workers.unwrap_or(config.workers).max(1);
    let evaluator = config.evaluator.build(&space, workers, config.window)?;
    let engine = SearchEngine::resume(
        &space,
        config.schedule,
        config.evolution,
        config.budget,
        &evaluator,
        state,
    )?;
    if engine.is_finished() {
        eprintln!("run {} is already complete; nothing to do", dir.root().display());
        dir.write_results(engine.state())?;
        return Ok(());
    }
    drive(&dir, engine, cmd.stop_after)
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    #[serde(flatten)]
    report: &'a altnas::cost::CostReport,
    verdict: &'a altnas::cost::Verdict,
}

pub fn estimate(cmd: EstimateCmd) -> anyhow::Result<()> {
    let space = load_space(&cmd.space)?;
    let genome = read_genome(&cmd.genome)?;
    let budget = split_budget(&cmd.budget, &space)?;
    let a = budget.assess(&space, &genome)?;
    if cmd.json {
        let out = EstimateOutput {
            report: &a.report,
            verdict: &a.verdict,
        };
        out!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        let r = &a.report;
        out!("params                 {}", r.params);
        out!("weight_bytes           {}", r.weight_bytes);
        out!("macs                   {}", r.macs);
        out!("peak_activation_bytes  {}", r.peak_activation_bytes);
        out!("layers                 {}", r.layer_count);
        out!("max_channels           {}", r.max_channels);
        out!("kernels                {:?}", r.kernels);
        for (m, c) in &r.per_module {
            out!(
                "{m:<22} params {} weight_bytes {} macs {}",
                c.params, c.weight_bytes, c.macs
            );
        }
        if a.verdict.pass() {
            out!("verdict                pass");
        } else {
            out!("verdict                fail");
            for v in &a.verdict.violations {
                out!("  {v}");
            }
        }
    }
    if !a.verdict.pass() {
        return Err(Exit::new(2, "genome violates the budget").into());
    }
    Ok(())
}

pub fn stats(cmd: StatsCmd) -> anyhow::Result<()> {
    if cmd.n < 2 {
        return Err(Exit::new(1, format!("--n must be at least 2, got {}", cmd.n)).into());
    }
    let space = load_space(&cmd.space)?;
    let budget = split_budget(&cmd.budget, &space)?;
    let which = cmd.condition.unwrap_or(if cmd.fix_from.is_some() {
        ConditionArg::Both
    } else {
        ConditionArg::Joint
    });
    let mut conditions = Vec::new();
    if which != ConditionArg::Conditioned {
        conditions.push(Condition::Joint);
    }
    if which != ConditionArg::Joint {
        let path = cmd
            .fix_from
            .as_ref()
            .ok_or_else(|| Exit::new(1, "conditioned sampling needs --fix-from"))?;
        let complement = read_genome(&path.to_string_lossy())?;
        conditions.push(Condition::Conditioned {
            module: cmd.module,
            complement,
        });
    }
    let evaluator = parse_evaluator(&cmd.evaluator)?.build(&space, cmd.workers.max(1), cmd.window.max(1))?;
    let mut reports = Vec::new();
    for condition in conditions {
        let mut spec = SamplingSpec::new(condition, cmd.n, cmd.seed);
        spec.distinct = cmd.distinct;
        reports.push(sample_stats(&space, &budget, &evaluator, &spec)?);
    }
    let stats = stats_csv(&reports);
    write!(io::stdout(), "{stats}").map_err(crate::stdout_error)?;
    if let Some(out) = &cmd.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("stats.csv"), &stats)?;
        std::fs::write(out.join("samples.csv"), samples_csv(&reports))?;
        if reports.len() >= 2 {
            std::fs::write(out.join("comparison.csv"), compare_conditions(&reports)?.to_csv())?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct OracleOutput {
    version: u32,
    space_hash: altnas::search_space::SpaceHash,
    genome: Genome,
    fitness: f64,
}

pub fn oracle(cmd: OracleCmd) -> anyhow::Result<()> {
    let space = load_space(&cmd.space)?;
    let card = space.cardinality();
    if card.is_none_or(|c| c > cmd.cap) {
        return Err(Exit::new(
            1,
            format!(
                "space has {} genomes, over the enumeration cap {}",
                card.map_or_else(|| "more than 2^128".to_string(), |c| c.to_string()),
                cmd.cap
            ),
        )
        .into());
    }
    let budget = split_budget(&cmd.budget, &space)?;
    let evaluator = parse_evaluator(&cmd.evaluator)?.build(&space, cmd.workers.max(1), cmd.window.max(1))?;
    let (genome, fitness) = oracle_best(&space, &evaluator, Some(&budget), cmd.cap)?
        .ok_or_else(|| Exit::new(2, "no genome satisfies the budget"))?;
    let out = OracleOutput {
        version: RUN_DOCUMENT_VERSION,
        space_hash: space.space_hash(),
        genome,
        fitness: fitness.value(),
    };
    out!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

pub fn extract_best(cmd: ExtractBestCmd) -> anyhow::Result<()> {
    let (_dir, config, space, state) = load_run(&cmd.run)?;
    let best = state
        .best
        .clone()
        .ok_or_else(|| Exit::new(1, "run has not completed a generation yet"))?;
    let budget = config.budget.with_default_split(space.module_ids());
    if !budget.admits(&space, &best.genome)? {
        return Err(Exit::new(2, "recorded best genome violates the run budget").into());
    }
    if cmd.verify {
        let evaluator = config.evaluator.build(&space, config.workers, config.window)?;
        let again = evaluator.evaluate(&best.genome)?;
        if again != best.fitness {
            return Err(Exit::new(
                3,
                format!("re-evaluation gave {again}, the run recorded {}", best.fitness),
            )
            .into());
        }
    }
    print_best(&state)
}
