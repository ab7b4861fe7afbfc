//! Per-module elite memory carried across alternation cycles.
//!
//! After each phase a module's buffer is *replaced* by the top unique genomes
//! of that phase's final ranking. Fitness stored here was measured against
//! the complement of that phase only, so entries from different cycles are
//! never merged.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::Fitness;
use crate::evolution::PhaseResult;
use crate::search_space::{ModuleGenome, ModuleId};

#[derive(Debug, Error)]
pub enum PassthroughError {
    #[error("cannot store a {found} phase result in the {expected} buffer")]
    ModuleMismatch { expected: ModuleId, found: ModuleId },
}

/// How inherited members are taken from the buffer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElitePolicy {
    /// The top `n` entries in rank order.
    #[default]
    TopN,
    /// `n` entries drawn uniformly without replacement, kept in rank order.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub genome: ModuleGenome,
    pub fitness: Fitness,
    pub cycle_stored: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassthroughBuffer {
    pub module: ModuleId,
    pub capacity: usize,
    pub passthrough_ratio: f64,
    #[serde(default)]
    pub policy: ElitePolicy,
    entries: Vec<BufferEntry>,
}

impl PassthroughBuffer {
    pub fn new(module: ModuleId, capacity: usize, passthrough_ratio: f64) -> Self {
        PassthroughBuffer {
            module,
            capacity,
            passthrough_ratio,
            policy: ElitePolicy::TopN,
            entries: Vec::new(),
        }
    }

    pub fn with_policy(mut self, policy: ElitePolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn entries(&self) -> &[BufferEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Replaces the contents with the top `capacity` unique genomes of the
    /// phase's ranked population, keeping the first occurrence of each.
    pub fn store(&mut self, result: &PhaseResult, cycle: u64) -> Result<(), PassthroughError> {
        if result.module != self.module {
            return Err(PassthroughError::ModuleMismatch {
                expected: self.module,
                found: result.module,
            });
        }
        if result.ranked_population.is_empty() {
            log::warn!("{} phase produced an empty population; buffer unchanged", self.module);
            return Ok(());
        }
        let mut entries: Vec<BufferEntry> = Vec::with_capacity(self.capacity);
        for c in &result.ranked_population {
            if entries.len() == self.capacity {
                break;
            }
            if entries.iter().any(|e| e.genome == c.module_genome) {
                continue;
            }
            entries.push(BufferEntry {
                genome: c.module_genome.clone(),
                fitness: c.fitness,
                cycle_stored: cycle,
            });
        }
        // The phase ranking is already in this order; sorting again keeps the
        // invariant even for hand-built results.
        entries.sort_by(|a, b| {
            b.fitness
                .total_cmp(&a.fitness)
                .then_with(|| a.genome.genes.cmp(&b.genome.genes))
        });
        self.entries = entries;
        Ok(())
    }

    /// Up to `n` genomes in rank order, chosen by the buffer's policy.
    pub fn draw_elites<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<ModuleGenome> {
        let n = n.min(self.entries.len());
        match self.policy {
            ElitePolicy::TopN => self.entries[..n].iter().map(|e| e.genome.clone()).collect(),
            ElitePolicy::Uniform => {
                let mut idx = sample(rng, self.entries.len(), n).into_vec();
                idx.sort_unstable();
                idx.into_iter()
                    .map(|i| self.entries[i].genome.clone())
                    .collect()
            }
        }
    }
}
