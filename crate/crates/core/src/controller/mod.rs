//! Alternating search: one evolutionary phase per module in a cyclic order,
//! each phase searching one module against the current assignment of the
//! others.
//!
//! The engine advances one generation per [`SearchEngine::step`]. Everything
//! needed to continue lives in [`SearchState`], so a run can be checkpointed
//! at any generation boundary and resumed to the same trajectory.

mod convergence;
mod rundir;
mod state;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use convergence::{detect_convergence, ConvergenceMode, ConvergenceReport, DEFAULT_TOLERANCE};
pub use rundir::{
    history_csv, parse_history_csv, BestGenomeDocument, ConvergenceDocument, RunDir, BEST_FILE,
    CHECKPOINT_FILE, CONFIG_FILE, CONVERGENCE_FILE, HISTORY_FILE, RUN_DOCUMENT_VERSION,
};
pub use state::{BestRecord, HistoryRow, SearchState, CHECKPOINT_VERSION};

use crate::cost::{CostError, ResourceBudget};
use crate::evaluator::{EvalError, Evaluator};
use crate::evolution::{EvolutionConfig, EvolutionError, GenerationRecord, Phase, PhaseResult};
use crate::passthrough::{ElitePolicy, PassthroughBuffer, PassthroughError};
use crate::rng::{Purpose, Stream};
use crate::search_space::{fnv1a64, sample_genome, DetectionSearchSpace, Genome, ModuleId, SpaceError, SpaceHash};

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("no feasible initial assignment after {draws} joint samples; last violations: {diagnostics}")]
    InfeasibleSpace { draws: usize, diagnostics: String },
    #[error("history is empty")]
    EmptyHistory,
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint was written for space {found}, this run uses {expected}")]
    SpaceMismatch { expected: SpaceHash, found: SpaceHash },
    #[error("checkpoint config digest {found} does not match this run's {expected}")]
    DigestMismatch { expected: String, found: String },
    #[error("{path}: {message}")]
    Document { path: String, message: String },
    #[error("{0}")]
    RunDir(String),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Passthrough(#[from] PassthroughError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ControllerError {
    /// True when the failure came from fitness evaluation.
    pub fn is_evaluator_failure(&self) -> bool {
        matches!(
            self,
            ControllerError::Eval(_) | ControllerError::Evolution(EvolutionError::Eval(_))
        )
    }

    /// True when the failure is a feasibility verdict rather than a fault.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            ControllerError::InfeasibleSpace { .. }
                | ControllerError::Evolution(EvolutionError::NoFeasibleSample { .. })
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub module_order: Vec<ModuleId>,
    /// Generations summed over all phases.
    pub total_generation_budget: usize,
    pub seed: u64,
    pub passthrough_ratio: f64,
    #[serde(default)]
    pub elite_policy: ElitePolicy,
    /// Buffer size; the population size when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer_capacity: Option<usize>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            module_order: ModuleId::ALL.to_vec(),
            total_generation_budget: 30,
            seed: 0,
            passthrough_ratio: 0.6,
            elite_policy: ElitePolicy::TopN,
            buffer_capacity: None,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(
        &self,
        space: &DetectionSearchSpace,
        evolution: &EvolutionConfig,
    ) -> Result<(), ControllerError> {
        let bad = |m: String| Err(ControllerError::Schedule(m));
        let mut order = self.module_order.clone();
        order.sort();
        order.dedup();
        if order.len() != self.module_order.len() {
            return bad(format!("module_order {:?} repeats a module", self.module_order));
        }
        let modules: Vec<ModuleId> = space.module_ids().collect();
        if order != modules {
            return bad(format!(
                "module_order {:?} must cover the space modules {:?} exactly once",
                self.module_order, modules
            ));
        }
        if self.total_generation_budget < evolution.generations_per_phase {
            return bad(format!(
                "total_generation_budget {} < generations_per_phase {}",
                self.total_generation_budget, evolution.generations_per_phase
            ));
        }
        if !(0.0..=1.0).contains(&self.passthrough_ratio) {
            return bad(format!("passthrough_ratio {} not in [0, 1]", self.passthrough_ratio));
        }
        if self.buffer_capacity == Some(0) {
            return bad("buffer_capacity must be positive".into());
        }
        Ok(())
    }
}

/// Hex FNV-1a digest of everything that shapes a trajectory besides the space.
pub fn config_digest(
    schedule: &ScheduleConfig,
    evolution: &EvolutionConfig,
    budget: &ResourceBudget,
    evaluator_id: &str,
) -> String {
    let doc = serde_json::json!({
        "schedule": schedule,
        "evolution": evolution,
        "budget": budget,
        "evaluator": evaluator_id,
    });
    // `Value` maps are sorted, so this is canonical.
    format!("{:016x}", fnv1a64(doc.to_string().as_bytes()))
}

/// What one [`SearchEngine::step`] did.
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Generation(HistoryRow),
    /// The budget was already spent.
    Finished,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: BestRecord,
    pub state: SearchState,
    pub convergence: ConvergenceReport,
}

pub struct SearchEngine<'a, E: ?Sized> {
    space: &'a DetectionSearchSpace,
    schedule: ScheduleConfig,
    evolution: EvolutionConfig,
    budget: ResourceBudget,
    evaluator: &'a E,
    state: SearchState,
}

impl<'a, E: Evaluator + ?Sized> SearchEngine<'a, E> {
    /// Validates the configuration and draws the initial assignment: the
    /// first feasible joint sample.
    pub fn new(
        space: &'a DetectionSearchSpace,
        schedule: ScheduleConfig,
        evolution: EvolutionConfig,
        budget: ResourceBudget,
        evaluator: &'a E,
    ) -> Result<Self, ControllerError> {
        let budget = Self::prepare(space, &schedule, &evolution, budget)?;
        let assignments = initial_assignment(space, &budget, &evolution, schedule.seed)?;
        let capacity = schedule.buffer_capacity.unwrap_or(evolution.population_size);
        let buffers = schedule
            .module_order
            .iter()
            .map(|&m| {
                let buf = PassthroughBuffer::new(m, capacity, schedule.passthrough_ratio)
                    .with_policy(schedule.elite_policy);
                (m, buf)
            })
            .collect();
        let state = SearchState {
            version: CHECKPOINT_VERSION,
            space_hash: space.space_hash(),
            config_digest: config_digest(&schedule, &evolution, &budget, &evaluator.id()),
            seed: schedule.seed,
            cycle: 0,
            phase_position: 0,
            phase_generation: 0,
            generations_done: 0,
            assignments,
            population: Vec::new(),
            phase_history: Vec::new(),
            buffers,
            best: None,
            history: Vec::new(),
        };
        Ok(SearchEngine {
            space,
            schedule,
            evolution,
            budget,
            evaluator,
            state,
        })
    }

    /// Continues from `state` after checking it belongs to these inputs.
    pub fn resume(
        space: &'a DetectionSearchSpace,
        schedule: ScheduleConfig,
        evolution: EvolutionConfig,
        budget: ResourceBudget,
        evaluator: &'a E,
        state: SearchState,
    ) -> Result<Self, ControllerError> {
        let budget = Self::prepare(space, &schedule, &evolution, budget)?;
        let digest = config_digest(&schedule, &evolution, &budget, &evaluator.id());
        state.verify(space.space_hash(), &digest)?;
        Ok(SearchEngine {
            space,
            schedule,
            evolution,
            budget,
            evaluator,
            state,
        })
    }

    fn prepare(
        space: &DetectionSearchSpace,
        schedule: &ScheduleConfig,
        evolution: &EvolutionConfig,
        budget: ResourceBudget,
    ) -> Result<ResourceBudget, ControllerError> {
        evolution.validate()?;
        schedule.validate(space, evolution)?;
        let budget = budget.with_default_split(space.module_ids());
        budget.validate()?;
        Ok(budget)
    }

    pub fn state(&self) -> &SearchState {
        &self.state
    }

    pub fn into_state(self) -> SearchState {
        self.state
    }

    /// The budget in force, with per-module limits filled in.
    pub fn budget(&self) -> &ResourceBudget {
        &self.budget
    }

    pub fn is_finished(&self) -> bool {
        self.state.generations_done >= self.schedule.total_generation_budget
    }

    /// Generations in the current phase; the last phase is cut short when the
    /// remaining budget is smaller than a full phase.
    fn phase_length(&self) -> usize {
        let started_at = self.state.generations_done - self.state.phase_generation;
        let remaining = self.schedule.total_generation_budget - started_at;
        self.evolution.generations_per_phase.min(remaining)
    }

    /// Runs one generation of the current phase.
    pub fn step(&mut self) -> Result<StepOutcome, ControllerError> {
        if self.is_finished() {
            return Ok(StepOutcome::Finished);
        }
        let module = self.schedule.module_order[self.state.phase_position];
        let phase = Phase {
            space: self.space,
            budget: &self.budget,
            evaluator: self.evaluator,
            config: &self.evolution,
            module,
            incumbent: &self.state.assignments,
            seed: self.schedule.seed,
            coords: (self.state.cycle, self.state.phase_position as u64),
        };
        let generation = self.state.phase_generation;
        let (population, stats) = if generation == 0 {
            let (pop, comp, stats) = phase.init_population(&self.state.buffers[&module])?;
            log::debug!(
                "cycle {} {module}: {} inherited, incumbent {}, {} fresh",
                self.state.cycle,
                comp.inherited,
                if comp.injected { "injected" } else { "not injected" },
                comp.fresh
            );
            (pop, stats)
        } else {
            phase.next_generation(&self.state.population, generation as u64)?
        };

        let record = GenerationRecord::summarize(generation, &population, stats);
        let row = HistoryRow {
            cycle: self.state.cycle,
            phase_module: module,
            generation: self.state.generations_done,
            best_fitness: record.best_fitness,
            mean_fitness: record.mean_fitness,
            evaluations: record.evaluations,
            feasible_rejections: record.feasible_rejections,
        };
        if let Some(top) = population.first() {
            self.state.offer_best(top);
        }
        self.state.population = population;
        self.state.phase_history.push(record);
        self.state.history.push(row.clone());
        self.state.phase_generation += 1;
        self.state.generations_done += 1;

        if self.state.phase_generation == self.phase_length() {
            self.end_phase(module)?;
        }
        Ok(StepOutcome::Generation(row))
    }

    fn end_phase(&mut self, module: ModuleId) -> Result<(), ControllerError> {
        let population = std::mem::take(&mut self.state.population);
        let history = std::mem::take(&mut self.state.phase_history);
        let best = population
            .first()
            .cloned()
            .ok_or_else(|| ControllerError::Schedule(format!("{module} phase ended with no population")))?;
        let result = PhaseResult {
            module,
            best,
            ranked_population: population,
            history,
        };
        self.state.assignments.set(result.best.module_genome.clone());
        self.state
            .buffers
            .get_mut(&module)
            .expect("a buffer exists for every scheduled module")
            .store(&result, self.state.cycle)?;
        log::info!(
            "cycle {} {module} phase done: best {}",
            self.state.cycle,
            result.best.fitness
        );
        self.state.phase_generation = 0;
        self.state.phase_position += 1;
        if self.state.phase_position == self.schedule.module_order.len() {
            self.state.phase_position = 0;
            self.state.cycle += 1;
        }
        Ok(())
    }

    /// Steps until `limit` more generations ran or the budget is spent,
    /// calling `after` with the state at every generation boundary.
    pub fn run_for<F>(&mut self, limit: usize, mut after: F) -> Result<(), ControllerError>
    where
        F: FnMut(&SearchState, &HistoryRow) -> Result<(), ControllerError>,
    {
        for _ in 0..limit {
            match self.step()? {
                StepOutcome::Generation(row) => after(&self.state, &row)?,
                StepOutcome::Finished => break,
            }
        }
        Ok(())
    }

    /// Runs to budget exhaustion.
    pub fn run(mut self) -> Result<SearchOutcome, ControllerError> {
        self.run_for(usize::MAX, |_, _| Ok(()))?;
        self.finish()
    }

    /// Best genome and convergence report of a finished (or paused) run.
    pub fn finish(self) -> Result<SearchOutcome, ControllerError> {
        let best = self.state.best.clone().ok_or(ControllerError::EmptyHistory)?;
        let convergence = self.state.convergence(ConvergenceMode::Relative, DEFAULT_TOLERANCE)?;
        Ok(SearchOutcome {
            best,
            state: self.state,
            convergence,
        })
    }
}

/// Runs a whole search in one call.
pub fn run_search<E: Evaluator + ?Sized>(
    space: &DetectionSearchSpace,
    schedule: ScheduleConfig,
    evolution: EvolutionConfig,
    budget: ResourceBudget,
    evaluator: &E,
) -> Result<SearchOutcome, ControllerError> {
    SearchEngine::new(space, schedule, evolution, budget, evaluator)?.run()
}

fn initial_assignment(
    space: &DetectionSearchSpace,
    budget: &ResourceBudget,
    evolution: &EvolutionConfig,
    seed: u64,
) -> Result<Genome, ControllerError> {
    let mut rng = Stream::for_purpose(seed, Purpose::InitialAssignment, &[]);
    let max_draws = evolution.max_variation_attempts * evolution.population_size;
    let mut last = None;
    for _ in 0..max_draws {
        let g = sample_genome(space, &mut rng);
        let a = budget.assess(space, &g)?;
        if a.verdict.pass() {
            return Ok(g);
        }
        last = Some(a.verdict);
    }
    Err(ControllerError::InfeasibleSpace {
        draws: max_draws,
        diagnostics: last
            .map(|v| {
                v.violations
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("; ")
            })
            .unwrap_or_default(),
    })
}
