use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{detect_convergence, ControllerError, ConvergenceMode, ConvergenceReport};
use crate::cost::CostReport;
use crate::evaluator::Fitness;
use crate::evolution::{Candidate, GenerationRecord};
use crate::passthrough::PassthroughBuffer;
use crate::search_space::{Genome, ModuleId, SpaceHash};

pub const CHECKPOINT_VERSION: u32 = 1;

/// One line of `history.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub cycle: u64,
    pub phase_module: ModuleId,
    /// Index over the whole run.
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub evaluations: usize,
    pub feasible_rejections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub genome: Genome,
    pub fitness: Fitness,
    pub cost: CostReport,
    /// Run-wide generation in which it was first seen.
    pub generation: usize,
}

/// Everything needed to continue a run from a generation boundary.
///
/// Random streams are keyed by `(seed, cycle, phase_position, generation,
/// slot)`, so these integers are the whole RNG cursor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchState {
    pub version: u32,
    pub space_hash: SpaceHash,
    pub config_digest: String,
    pub seed: u64,
    pub cycle: u64,
    /// Index into the schedule's module order.
    pub phase_position: usize,
    /// Generations already run in the current phase.
    pub phase_generation: usize,
    pub generations_done: usize,
    pub assignments: Genome,
    /// Ranked population of the current phase; empty between phases.
    pub population: Vec<Candidate>,
    pub phase_history: Vec<GenerationRecord>,
    pub buffers: BTreeMap<ModuleId, PassthroughBuffer>,
    pub best: Option<BestRecord>,
    pub history: Vec<HistoryRow>,
}

impl SearchState {
    /// Keeps the fitter candidate; ties keep the earlier one.
    pub(super) fn offer_best(&mut self, c: &Candidate) {
        let better = match &self.best {
            None => true,
            Some(b) => c.fitness.value() > b.fitness.value(),
        };
        if better {
            self.best = Some(BestRecord {
                genome: c.full_genome.clone(),
                fitness: c.fitness,
                cost: c.cost.clone(),
                generation: self.generations_done,
            });
        }
    }

    /// Running maximum of the per-generation population best.
    pub fn best_so_far_series(&self) -> Vec<f64> {
        self.history
            .iter()
            .scan(f64::NEG_INFINITY, |acc, r| {
                *acc = acc.max(r.best_fitness);
                Some(*acc)
            })
            .collect()
    }

    pub fn convergence(
        &self,
        mode: ConvergenceMode,
        tolerance: f64,
    ) -> Result<ConvergenceReport, ControllerError> {
        detect_convergence(&self.best_so_far_series(), mode, tolerance)
    }

    /// Refuses a state written for another space or configuration.
    pub fn verify(&self, space_hash: SpaceHash, config_digest: &str) -> Result<(), ControllerError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(ControllerError::Version {
                found: self.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        if self.space_hash != space_hash {
            return Err(ControllerError::SpaceMismatch {
                expected: space_hash,
                found: self.space_hash,
            });
        }
        if self.config_digest != config_digest {
            return Err(ControllerError::DigestMismatch {
                expected: config_digest.to_string(),
                found: self.config_digest.clone(),
            });
        }
        Ok(())
    }

    /// Writes the state through a temporary file and a rename.
    pub fn save(&self, path: &Path) -> Result<(), ControllerError> {
        let text = serde_json::to_string(self).expect("search state always serializes");
        write_atomic(path, text.as_bytes())
    }

    /// Reads a checkpoint and checks its version. Callers resuming a run
    /// must also [`verify`](Self::verify) it.
    pub fn load(path: &Path) -> Result<SearchState, ControllerError> {
        let text = fs::read_to_string(path)?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ControllerError::Document {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        let version = value.get("version").and_then(serde_json::Value::as_u64);
        if version != Some(u64::from(CHECKPOINT_VERSION)) {
            return Err(ControllerError::Version {
                found: version.unwrap_or(0) as u32,
                expected: CHECKPOINT_VERSION,
            });
        }
        serde_json::from_value(value).map_err(|e| ControllerError::Document {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

pub(super) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ControllerError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    {
        let mut f = fs::File::create(tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}
