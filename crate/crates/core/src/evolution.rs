//! One evolutionary phase over a single module with its complement fixed.
//!
//! A generation keeps the top `round(parent_ratio * N)` candidates verbatim,
//! adds `round(mutation_ratio * N)` mutants of uniformly chosen parents and
//! fills the rest with uniform crossovers of two distinct parents. Offspring
//! that violate the budget are redrawn up to `max_variation_attempts` times
//! before falling back to a copy of the chosen parent.
//!
//! Populations are ranked by fitness descending, ties by gene indices
//! ascending, which makes selection a deterministic total order.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{CostError, CostReport, ResourceBudget};
use crate::evaluator::{EvalError, Evaluator, Fitness};
use crate::passthrough::PassthroughBuffer;
use crate::rng::{Purpose, Stream};
use crate::search_space::{
    crossover, mutate, sample_random, DetectionSearchSpace, Genome, ModuleGenome, ModuleId,
    ModuleSpace, SpaceError,
};

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("invalid evolution config: {0}")]
    Config(String),
    #[error(
        "no feasible {module} sample after {draws} draws ({found} of {needed} found); \
         last violations: {diagnostics}"
    )]
    NoFeasibleSample {
        module: ModuleId,
        draws: usize,
        found: usize,
        needed: usize,
        diagnostics: String,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub parent_ratio: f64,
    pub mutation_prob: f64,
    /// Fraction of each generation produced by mutation (the rest of the
    /// non-parent slots come from crossover).
    pub mutation_ratio: f64,
    pub max_variation_attempts: usize,
    pub generations_per_phase: usize,
    /// Seed each phase with the incumbent module genome.
    pub inject_incumbent: bool,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population_size: 100,
            parent_ratio: 0.25,
            mutation_prob: 0.2,
            mutation_ratio: 0.5,
            max_variation_attempts: 100,
            generations_per_phase: 5,
            inject_incumbent: true,
        }
    }
}

fn round_count(ratio: f64, n: usize) -> usize {
    (ratio * n as f64).round() as usize
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        let bad = |m: String| Err(EvolutionError::Config(m));
        if self.population_size < 4 {
            return bad(format!("population_size {} < 4", self.population_size));
        }
        if !(self.parent_ratio > 0.0 && self.parent_ratio < 1.0) {
            return bad(format!("parent_ratio {} not in (0, 1)", self.parent_ratio));
        }
        if !(0.0..=1.0).contains(&self.mutation_ratio) {
            return bad(format!("mutation_ratio {} not in [0, 1]", self.mutation_ratio));
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return bad(format!("mutation_prob {} not in [0, 1]", self.mutation_prob));
        }
        if self.n_parents() < 1 {
            return bad("parent_ratio selects no parents".into());
        }
        if self.n_parents() + self.n_mutants() > self.population_size {
            return bad(format!(
                "{} parents + {} mutants exceed population {}",
                self.n_parents(),
                self.n_mutants(),
                self.population_size
            ));
        }
        if self.max_variation_attempts == 0 {
            return bad("max_variation_attempts must be positive".into());
        }
        if self.generations_per_phase == 0 {
            return bad("generations_per_phase must be positive".into());
        }
        Ok(())
    }

    pub fn n_parents(&self) -> usize {
        round_count(self.parent_ratio, self.population_size)
    }

    pub fn n_mutants(&self) -> usize {
        round_count(self.mutation_ratio, self.population_size)
    }

    pub fn n_crossover(&self) -> usize {
        self.population_size
            .saturating_sub(self.n_parents() + self.n_mutants())
    }
}

/// A scored, feasible member of a phase population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub module_genome: ModuleGenome,
    /// Searched genes plus the phase's fixed complement.
    pub full_genome: Genome,
    pub fitness: Fitness,
    pub cost: CostReport,
}

/// Sorts by fitness descending, then gene indices ascending.
pub fn rank(population: &mut [Candidate]) {
    population.sort_by(|a, b| {
        b.fitness
            .total_cmp(&a.fitness)
            .then_with(|| a.module_genome.genes.cmp(&b.module_genome.genes))
    });
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub evaluations: usize,
    pub feasible_rejections: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    /// Index within the phase.
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub evaluations: usize,
    pub feasible_rejections: usize,
}

impl GenerationRecord {
    pub fn summarize(generation: usize, ranked: &[Candidate], stats: GenerationStats) -> Self {
        let best = ranked.first().map_or(0.0, |c| c.fitness.value());
        let mean = if ranked.is_empty() {
            0.0
        } else {
            ranked.iter().map(|c| c.fitness.value()).sum::<f64>() / ranked.len() as f64
        };
        GenerationRecord {
            generation,
            best_fitness: best,
            mean_fitness: mean,
            evaluations: stats.evaluations,
            feasible_rejections: stats.feasible_rejections,
        }
    }
}

/// How an initial population was assembled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InitComposition {
    pub inherited: usize,
    pub injected: bool,
    pub fresh: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseResult {
    pub module: ModuleId,
    pub ranked_population: Vec<Candidate>,
    pub best: Candidate,
    pub history: Vec<GenerationRecord>,
}

/// Everything a phase needs: what is searched, against which complement,
/// under which limits, and where its random streams live.
pub struct Phase<'a, E: ?Sized> {
    pub space: &'a DetectionSearchSpace,
    pub budget: &'a ResourceBudget,
    pub evaluator: &'a E,
    pub config: &'a EvolutionConfig,
    pub module: ModuleId,
    /// Current full assignment; its `module` genes are the incumbent and the
    /// rest is the fixed complement.
    pub incumbent: &'a Genome,
    pub seed: u64,
    /// Stream coordinates of this phase, `(cycle, position in schedule)`.
    pub coords: (u64, u64),
}

impl<'a, E: Evaluator + ?Sized> Phase<'a, E> {
    fn module_space(&self) -> Result<&'a ModuleSpace, EvolutionError> {
        self.space.module(self.module).ok_or_else(|| {
            EvolutionError::Config(format!("space has no {} module", self.module))
        })
    }

    fn stream(&self, purpose: Purpose, generation: u64, slot: u64) -> Stream {
        Stream::for_purpose(
            self.seed,
            purpose,
            &[self.coords.0, self.coords.1, generation, slot],
        )
    }

    /// Full genome and cost if `genome` is feasible with the fixed complement.
    fn feasible(&self, genome: &ModuleGenome) -> Result<Option<(Genome, CostReport)>, EvolutionError> {
        let full = self.incumbent.with_module(genome);
        let a = self.budget.assess(self.space, &full)?;
        Ok(a.verdict.pass().then_some((full, a.report)))
    }

    fn diagnostics(&self, genome: &ModuleGenome) -> String {
        let full = self.incumbent.with_module(genome);
        match self.budget.assess(self.space, &full) {
            Ok(a) => a
                .verdict
                .violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; "),
            Err(e) => e.to_string(),
        }
    }

    fn score(&self, members: Vec<(ModuleGenome, Genome, CostReport)>) -> Result<Vec<Candidate>, EvolutionError> {
        let genomes: Vec<Genome> = members.iter().map(|m| m.1.clone()).collect();
        let fitness = self.evaluator.evaluate_batch(&genomes)?;
        let mut pop: Vec<Candidate> = members
            .into_iter()
            .zip(fitness)
            .map(|((module_genome, full_genome, cost), fitness)| Candidate {
                module_genome,
                full_genome,
                fitness,
                cost,
            })
            .collect();
        rank(&mut pop);
        Ok(pop)
    }

    /// Inherited elites, the incumbent, then fresh feasible samples; all
    /// evaluated against the current complement.
    pub fn init_population(
        &self,
        buffer: &PassthroughBuffer,
    ) -> Result<(Vec<Candidate>, InitComposition, GenerationStats), EvolutionError> {
        self.config.validate()?;
        let mspace = self.module_space()?;
        let n = self.config.population_size;
        let mut stats = GenerationStats::default();
        let mut comp = InitComposition::default();
        let mut rng = self.stream(Purpose::Population, 0, 0);

        let want = round_count(buffer.passthrough_ratio, n).min(n);
        let mut members: Vec<(ModuleGenome, Genome, CostReport)> = Vec::with_capacity(n);
        for elite in buffer.draw_elites(want, &mut rng.derive(1)) {
            mspace.validate(&elite)?;
            match self.feasible(&elite)? {
                Some((full, cost)) => members.push((elite, full, cost)),
                None => stats.feasible_rejections += 1,
            }
        }
        comp.inherited = members.len();

        if self.config.inject_incumbent && members.len() < n {
            let current = self.incumbent.module_genome(self.module).ok_or_else(|| {
                EvolutionError::Config(format!("incumbent lacks module {}", self.module))
            })?;
            mspace.validate(&current)?;
            if !members.iter().any(|m| m.0 == current) {
                match self.feasible(&current)? {
                    Some((full, cost)) => {
                        members.push((current, full, cost));
                        comp.injected = true;
                    }
                    None => log::warn!("incumbent {} genome is infeasible; not injected", self.module),
                }
            }
        }

        let needed = n - members.len();
        let max_draws = self.config.max_variation_attempts * n;
        let mut draws = 0;
        let mut last_rejected = None;
        while members.len() < n {
            if draws == max_draws {
                return Err(EvolutionError::NoFeasibleSample {
                    module: self.module,
                    draws,
                    found: needed - (n - members.len()),
                    needed,
                    diagnostics: last_rejected
                        .map(|g| self.diagnostics(&g))
                        .unwrap_or_default(),
                });
            }
            draws += 1;
            let g = sample_random(mspace, &mut rng);
            match self.feasible(&g)? {
                Some((full, cost)) => {
                    members.push((g, full, cost));
                    comp.fresh += 1;
                }
                None => {
                    stats.feasible_rejections += 1;
                    last_rejected = Some(g);
                }
            }
        }

        stats.evaluations = members.len();
        let pop = self.score(members)?;
        Ok((pop, comp, stats))
    }

    /// Parents survive verbatim; mutants and crossover children fill the rest.
    /// `generation` is this generation's index within the phase (>= 1).
    pub fn next_generation(
        &self,
        population: &[Candidate],
        generation: u64,
    ) -> Result<(Vec<Candidate>, GenerationStats), EvolutionError> {
        let mspace = self.module_space()?;
        let mut ranked = population.to_vec();
        rank(&mut ranked);
        let n_parents = self.config.n_parents().min(ranked.len()).max(1);
        let parents = &ranked[..n_parents];
        let n_mut = self.config.n_mutants();
        let n_cross = self.config.n_crossover();
        let mut stats = GenerationStats::default();

        let mut offspring: Vec<(ModuleGenome, Genome, CostReport)> = Vec::with_capacity(n_mut + n_cross);
        for slot in 0..(n_mut + n_cross) {
            let mut rng = self.stream(Purpose::Variation, generation, slot as u64);
            let mut accepted = None;
            let mut fallback = None;
            for _ in 0..self.config.max_variation_attempts {
                let i = rng.gen_range(0..n_parents);
                let child = if slot < n_mut {
                    mutate(mspace, &parents[i].module_genome, self.config.mutation_prob, &mut rng)
                } else {
                    let j = if n_parents > 1 {
                        let j = rng.gen_range(0..n_parents - 1);
                        if j >= i { j + 1 } else { j }
                    } else {
                        i
                    };
                    crossover(mspace, &parents[i].module_genome, &parents[j].module_genome, &mut rng)?
                };
                fallback = Some(i);
                if let Some((full, cost)) = self.feasible(&child)? {
                    accepted = Some((child, full, cost));
                    break;
                }
                stats.feasible_rejections += 1;
            }
            let member = match accepted {
                Some(m) => m,
                None => {
                    let p = &parents[fallback.expect("at least one attempt")];
                    log::debug!(
                        "{} slot {slot}: variation attempts exhausted, copying parent",
                        self.module
                    );
                    (p.module_genome.clone(), p.full_genome.clone(), p.cost.clone())
                }
            };
            offspring.push(member);
        }

        stats.evaluations = offspring.len();
        let mut next = parents.to_vec();
        next.extend(self.score(offspring)?);
        rank(&mut next);
        Ok((next, stats))
    }

    /// Runs `generations_per_phase` generations, calling `observe` with each
    /// ranked population.
    pub fn run_with<F>(&self, buffer: &PassthroughBuffer, mut observe: F) -> Result<PhaseResult, EvolutionError>
    where
        F: FnMut(usize, &[Candidate]),
    {
        let (mut pop, _, stats) = self.init_population(buffer)?;
        observe(0, &pop);
        let mut history = vec![GenerationRecord::summarize(0, &pop, stats)];
        for g in 1..self.config.generations_per_phase {
            let (next, stats) = self.next_generation(&pop, g as u64)?;
            pop = next;
            observe(g, &pop);
            history.push(GenerationRecord::summarize(g, &pop, stats));
        }
        Ok(PhaseResult {
            module: self.module,
            best: pop[0].clone(),
            ranked_population: pop,
            history,
        })
    }

    pub fn run(&self, buffer: &PassthroughBuffer) -> Result<PhaseResult, EvolutionError> {
        self.run_with(buffer, |_, _| {})
    }
}
