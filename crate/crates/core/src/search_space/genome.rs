use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DetectionSearchSpace, ModuleId, ModuleSpace, SpaceError};

/// Gene indices for one module.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModuleGenome {
    pub module: ModuleId,
    pub genes: Vec<u32>,
}

impl ModuleGenome {
    pub fn new(module: ModuleId, genes: Vec<u32>) -> Self {
        ModuleGenome { module, genes }
    }
}

impl ModuleSpace {
    pub fn validate(&self, genome: &ModuleGenome) -> Result<(), SpaceError> {
        if genome.module != self.module() {
            return Err(SpaceError::GenomeMismatch(format!(
                "genome for {} checked against {} space",
                genome.module,
                self.module()
            )));
        }
        if genome.genes.len() != self.gene_count() {
            return Err(SpaceError::GenomeMismatch(format!(
                "{} genome has {} genes, space has {} axes",
                genome.module,
                genome.genes.len(),
                self.gene_count()
            )));
        }
        for (i, (&g, axis)) in genome.genes.iter().zip(self.axes()).enumerate() {
            if g as usize >= axis.len() {
                return Err(SpaceError::GenomeMismatch(format!(
                    "{} gene {i} ({}) is {g}, axis has {} choices",
                    genome.module,
                    axis.name,
                    axis.len()
                )));
            }
        }
        Ok(())
    }

    /// Raw option values selected by `genome`.
    pub fn values(&self, genome: &ModuleGenome) -> Vec<u32> {
        genome
            .genes
            .iter()
            .zip(self.axes())
            .map(|(&g, a)| a.choices[g as usize])
            .collect()
    }
}

/// A complete architecture: one [`ModuleGenome`] per module of the space.
///
/// Orders lexicographically by module (backbone first), then gene indices.
/// Serializes as `{"backbone":[..],"head":[..]}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "BTreeMap<ModuleId, Vec<u32>>", into = "BTreeMap<ModuleId, Vec<u32>>")]
pub struct Genome {
    assignments: BTreeMap<ModuleId, Vec<u32>>,
}

impl From<BTreeMap<ModuleId, Vec<u32>>> for Genome {
    fn from(assignments: BTreeMap<ModuleId, Vec<u32>>) -> Self {
        Genome { assignments }
    }
}

impl From<Genome> for BTreeMap<ModuleId, Vec<u32>> {
    fn from(g: Genome) -> Self {
        g.assignments
    }
}

impl FromIterator<ModuleGenome> for Genome {
    fn from_iter<I: IntoIterator<Item = ModuleGenome>>(iter: I) -> Self {
        Genome {
            assignments: iter.into_iter().map(|m| (m.module, m.genes)).collect(),
        }
    }
}

impl Genome {
    pub fn genes(&self, module: ModuleId) -> Option<&[u32]> {
        self.assignments.get(&module).map(Vec::as_slice)
    }

    pub fn module_genome(&self, module: ModuleId) -> Option<ModuleGenome> {
        self.genes(module)
            .map(|g| ModuleGenome::new(module, g.to_vec()))
    }

    pub fn modules(&self) -> impl Iterator<Item = ModuleId> + '_ {
        self.assignments.keys().copied()
    }

    /// Copy of `self` with `module` replaced.
    pub fn with_module(&self, genome: &ModuleGenome) -> Genome {
        let mut out = self.clone();
        out.set(genome.clone());
        out
    }

    pub fn set(&mut self, genome: ModuleGenome) {
        self.assignments.insert(genome.module, genome.genes);
    }

    /// All genes concatenated in module order.
    pub fn flat_genes(&self) -> Vec<u32> {
        self.assignments.values().flatten().copied().collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("genomes always serialize")
    }
}

impl DetectionSearchSpace {
    pub fn validate(&self, genome: &Genome) -> Result<(), SpaceError> {
        for m in genome.modules() {
            if self.module(m).is_none() {
                return Err(SpaceError::GenomeMismatch(format!(
                    "genome has module {m} which the space lacks"
                )));
            }
        }
        for space in self.modules() {
            let mg = genome.module_genome(space.module()).ok_or_else(|| {
                SpaceError::GenomeMismatch(format!("genome lacks module {}", space.module()))
            })?;
            space.validate(&mg)?;
        }
        Ok(())
    }
}
