//! Run configuration: flags over an optional config file over defaults,
//! resolved once and frozen into the run directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use altnas::controller::ScheduleConfig;
use altnas::cost::{device_budget, DeviceRegistry, ResourceBudget};
use altnas::evaluator::{CachedEvaluator, Evaluator, ExternalEvaluator, SyntheticEvaluator};
use altnas::evolution::EvolutionConfig;
use altnas::passthrough::ElitePolicy;
use altnas::search_space::{DetectionSearchSpace, ModuleId, SpaceHash};
use anyhow::{bail, Context};
use clap::Args;
use serde::{Deserialize, Serialize};

pub const RUN_CONFIG_VERSION: u32 = 1;

/// `synthetic:<seed>` or `external:<command line>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvaluatorSpec {
    Synthetic(u64),
    External(Vec<String>),
}

impl FromStr for EvaluatorSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(seed) = s.strip_prefix("synthetic:") {
            return seed
                .parse()
                .map(EvaluatorSpec::Synthetic)
                .map_err(|_| format!("bad synthetic seed {seed:?}"));
        }
        if let Some(cmd) = s.strip_prefix("external:") {
            let argv = shlex::split(cmd).ok_or_else(|| format!("unbalanced quotes in {cmd:?}"))?;
            if argv.is_empty() {
                return Err("external evaluator command is empty".into());
            }
            return Ok(EvaluatorSpec::External(argv));
        }
        Err(format!(
            "evaluator must be synthetic:<seed> or external:<command>, got {s:?}"
        ))
    }
}

impl fmt::Display for EvaluatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvaluatorSpec::Synthetic(seed) => write!(f, "synthetic:{seed}"),
            EvaluatorSpec::External(argv) => {
                let joined = shlex::try_join(argv.iter().map(String::as_str))
                    .map_err(|_| fmt::Error)?;
                write!(f, "external:{joined}")
            }
        }
    }
}

impl Serialize for EvaluatorSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EvaluatorSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

impl EvaluatorSpec {
    /// Starts the evaluator. External ones are wrapped in a cache.
    pub fn build(
        &self,
        space: &DetectionSearchSpace,
        workers: usize,
        window: usize,
    ) -> Result<Box<dyn Evaluator>, altnas::evaluator::EvalError> {
        Ok(match self {
            EvaluatorSpec::Synthetic(seed) => {
                Box::new(SyntheticEvaluator::new(space, *seed).with_workers(workers))
            }
            EvaluatorSpec::External(argv) => {
                let ext = ExternalEvaluator::spawn(argv, space.space_hash(), window)?;
                Box::new(CachedEvaluator::new(ext, space.space_hash()))
            }
        })
    }
}

/// Budget selection shared by every command that filters by feasibility.
#[derive(Debug, Clone, Default, Args)]
pub struct BudgetArgs {
    /// Device profile whose limits form the budget (max78000, max78002, or a
    /// registry entry).
    #[arg(long)]
    pub budget_device: Option<String>,
    /// JSON file `{"profiles":[...]}` adding or overriding device profiles.
    #[arg(long)]
    pub device_registry: Option<PathBuf>,
    /// Total weight-memory budget in bytes.
    #[arg(long)]
    pub budget_bytes: Option<u64>,
    /// Bytes per stored weight (defaults to the device's, or 4).
    #[arg(long)]
    pub bytes_per_weight: Option<u32>,
}

impl BudgetArgs {
    /// The budget, or an unlimited one when nothing was selected.
    pub fn resolve(&self) -> anyhow::Result<ResourceBudget> {
        let mut budget = match (&self.budget_device, self.budget_bytes) {
            (Some(_), Some(_)) => bail!("--budget-device and --budget-bytes are mutually exclusive"),
            (Some(name), None) => {
                let registry = match &self.device_registry {
                    Some(p) => DeviceRegistry::load(p)?,
                    None => DeviceRegistry::default(),
                };
                device_budget(registry.get(name)?)
            }
            (None, Some(bytes)) => ResourceBudget::weight_limit(bytes),
            (None, None) => {
                if self.device_registry.is_some() {
                    bail!("--device-registry needs --budget-device");
                }
                ResourceBudget::unlimited()
            }
        };
        if let Some(bpw) = self.bytes_per_weight {
            budget.bytes_per_weight = bpw;
        }
        budget.validate()?;
        Ok(budget)
    }
}

/// Search settings settable on the command line or in a config file.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchArgs {
    /// Search space document.
    #[arg(long)]
    pub space: Option<PathBuf>,
    /// Fitness source: synthetic:<seed> or external:<command line>.
    #[arg(long)]
    pub evaluator: Option<String>,
    /// Master seed of the search.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parallel fitness evaluations (results do not depend on it).
    #[arg(long)]
    pub workers: Option<usize>,
    /// In-flight requests to an external evaluator.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub population: Option<usize>,
    /// Total generations over all phases.
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long)]
    pub generations_per_phase: Option<usize>,
    /// Fraction of a phase's initial population inherited from the buffer.
    #[arg(long)]
    pub passthrough_ratio: Option<f64>,
    #[arg(long)]
    pub mutation_prob: Option<f64>,
    #[arg(long)]
    pub mutation_ratio: Option<f64>,
    #[arg(long)]
    pub parent_ratio: Option<f64>,
    /// top_n or uniform.
    #[arg(long, value_parser = parse_policy)]
    pub elite_policy: Option<ElitePolicy>,
    /// Comma-separated module order, e.g. `head,backbone`.
    #[arg(long, value_delimiter = ',')]
    pub module_order: Option<Vec<ModuleId>>,
    #[arg(skip)]
    pub inject_incumbent: Option<bool>,
    #[arg(skip)]
    pub max_variation_attempts: Option<usize>,
    #[arg(long)]
    pub budget_device: Option<String>,
    #[arg(long)]
    pub device_registry: Option<PathBuf>,
    #[arg(long)]
    pub budget_bytes: Option<u64>,
    #[arg(long)]
    pub bytes_per_weight: Option<u32>,
}

fn parse_policy(s: &str) -> Result<ElitePolicy, String> {
    match s {
        "top_n" | "top-n" => Ok(ElitePolicy::TopN),
        "uniform" => Ok(ElitePolicy::Uniform),
        _ => Err(format!("elite policy must be top_n or uniform, got {s:?}")),
    }
}

impl SearchArgs {
    pub fn load(path: &Path) -> anyhow::Result<SearchArgs> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Fields set here win over `file`.
    pub fn or(self, file: SearchArgs) -> SearchArgs {
        SearchArgs {
            space: self.space.or(file.space),
            evaluator: self.evaluator.or(file.evaluator),
            seed: self.seed.or(file.seed),
            workers: self.workers.or(file.workers),
            window: self.window.or(file.window),
            population: self.population.or(file.population),
            generations: self.generations.or(file.generations),
            generations_per_phase: self.generations_per_phase.or(file.generations_per_phase),
            passthrough_ratio: self.passthrough_ratio.or(file.passthrough_ratio),
            mutation_prob: self.mutation_prob.or(file.mutation_prob),
            mutation_ratio: self.mutation_ratio.or(file.mutation_ratio),
            parent_ratio: self.parent_ratio.or(file.parent_ratio),
            elite_policy: self.elite_policy.or(file.elite_policy),
            module_order: self.module_order.or(file.module_order),
            inject_incumbent: self.inject_incumbent.or(file.inject_incumbent),
            max_variation_attempts: self.max_variation_attempts.or(file.max_variation_attempts),
            budget_device: self.budget_device.or(file.budget_device),
            device_registry: self.device_registry.or(file.device_registry),
            budget_bytes: self.budget_bytes.or(file.budget_bytes),
            bytes_per_weight: self.bytes_per_weight.or(file.bytes_per_weight),
        }
    }

    pub fn budget_args(&self) -> BudgetArgs {
        BudgetArgs {
            budget_device: self.budget_device.clone(),
            device_registry: self.device_registry.clone(),
            budget_bytes: self.budget_bytes,
            bytes_per_weight: self.bytes_per_weight,
        }
    }
}

/// Everything a run depends on, written to `config.json` before it starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub space: PathBuf,
    pub space_hash: SpaceHash,
    pub evaluator: EvaluatorSpec,
    pub workers: usize,
    pub window: usize,
    /// Device name, if the budget came from a profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<String>,
    pub budget: ResourceBudget,
    pub schedule: ScheduleConfig,
    pub evolution: EvolutionConfig,
}

impl RunConfig {
    /// Applies defaults to the merged arguments. Returns the parsed space too.
    pub fn resolve(args: SearchArgs) -> anyhow::Result<(RunConfig, DetectionSearchSpace)> {
        let budget = args.budget_args().resolve()?;
        let space_path = args.space.context("--space is required")?;
        let space = load_space(&space_path)?;
        let evaluator: EvaluatorSpec = args
            .evaluator
            .context("--evaluator is required")?
            .parse()
            .map_err(anyhow::Error::msg)?;
        let evo_default = EvolutionConfig::default();
        let evolution = EvolutionConfig {
            population_size: args.population.unwrap_or(evo_default.population_size),
            parent_ratio: args.parent_ratio.unwrap_or(evo_default.parent_ratio),
            mutation_prob: args.mutation_prob.unwrap_or(evo_default.mutation_prob),
            mutation_ratio: args.mutation_ratio.unwrap_or(evo_default.mutation_ratio),
            max_variation_attempts: args
                .max_variation_attempts
                .unwrap_or(evo_default.max_variation_attempts),
            generations_per_phase: args
                .generations_per_phase
                .unwrap_or(evo_default.generations_per_phase),
            inject_incumbent: args.inject_incumbent.unwrap_or(evo_default.inject_incumbent),
        };
        let sched_default = ScheduleConfig::default();
        let schedule = ScheduleConfig {
            module_order: args
                .module_order
                .unwrap_or_else(|| space.module_ids().collect()),
            total_generation_budget: args
                .generations
                .unwrap_or(sched_default.total_generation_budget),
            seed: args.seed.unwrap_or(sched_default.seed),
            passthrough_ratio: args
                .passthrough_ratio
                .unwrap_or(sched_default.passthrough_ratio),
            elite_policy: args.elite_policy.unwrap_or(sched_default.elite_policy),
            buffer_capacity: None,
        };
        evolution.validate()?;
        schedule.validate(&space, &evolution)?;
        let config = RunConfig {
            version: RUN_CONFIG_VERSION,
            space: std::path::absolute(&space_path)?,
            space_hash: space.space_hash(),
            evaluator,
            workers: args.workers.unwrap_or(1).max(1),
            window: args.window.unwrap_or(16).max(1),
            device: args.budget_device.clone(),
            budget,
            schedule,
            evolution,
        };
        Ok((config, space))
    }
}

pub fn load_space(path: &Path) -> anyhow::Result<DetectionSearchSpace> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading space {}", path.display()))?;
    altnas::search_space::parse_space(&text).with_context(|| format!("in space {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluator_spec_round_trips() {
        for s in ["synthetic:42", "external:python3 eval.py --space 'my space.json'"] {
            let spec: EvaluatorSpec = s.parse().unwrap();
            assert_eq!(spec.to_string().parse::<EvaluatorSpec>().unwrap(), spec);
        }
        assert_eq!(
            "external:a 'b c'".parse::<EvaluatorSpec>().unwrap(),
            EvaluatorSpec::External(vec!["a".into(), "b c".into()])
        );
        assert!("synthetic:x".parse::<EvaluatorSpec>().is_err());
        assert!("external:".parse::<EvaluatorSpec>().is_err());
        assert!("oracle".parse::<EvaluatorSpec>().is_err());
    }

    #[test]
    fn flags_win_over_file() {
        let flags = SearchArgs {
            seed: Some(7),
            ..SearchArgs::default()
        };
        let file: SearchArgs =
            serde_json::from_str(r#"{"seed": 3, "population": 12, "budget_bytes": 900}"#).unwrap();
        let merged = flags.or(file);
        assert_eq!(merged.seed, Some(7));
        assert_eq!(merged.population, Some(12));
        assert_eq!(merged.budget_args().budget_bytes, Some(900));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(serde_json::from_str::<SearchArgs>(r#"{"sead": 3}"#).is_err());
    }

    #[test]
    fn budget_selection() {
        assert_eq!(BudgetArgs::default().resolve().unwrap(), ResourceBudget::unlimited());
        let dev = BudgetArgs {
            budget_device: Some("max78000".into()),
            ..BudgetArgs::default()
        };
        let b = dev.resolve().unwrap();
        assert_eq!((b.tau_total, b.bytes_per_weight), (442_368, 1));
        let both = BudgetArgs {
            budget_bytes: Some(5),
            ..dev
        };
        assert!(both.resolve().is_err());
        let unknown = BudgetArgs {
            budget_device: Some("esp32".into()),
            ..BudgetArgs::default()
        };
        assert!(unknown.resolve().is_err());
    }
}
