//! Deterministic synthetic fitness landscapes.
//!
//! Fitness is a normalized sum of hashed per-gene utilities plus hashed
//! utilities on a sparse set of (backbone gene, head gene) couplings, so the
//! optimum of one module depends on the other. The hash is
//! `H(seed, f1..fn) = fold(seed, f1..fn)` mapped to `[0, 1)` through its top
//! 53 bits, with `fold` defined in [`crate::rng::fold`].
//!
//! Summation order is fixed so other implementations agree bit-exactly:
//! unary terms by module (backbone, head) then gene position, pair terms by
//! `(i, j)` ascending, then `(sum_u + 2 * sum_p) / (n_unary + 2 * n_pairs)`.

use rayon::prelude::*;

use super::{EvalError, Evaluator, Fitness};
use crate::rng::{fold, unit_f64};
use crate::search_space::{DetectionSearchSpace, Genome, ModuleId};

/// First folded field of every pairwise term.
pub const PAIR_TAG: u64 = 0xBEEF;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticLandscape {
    seed: u64,
    /// `(backbone position, head position)`, sorted ascending.
    couplings: Vec<(usize, usize)>,
    n_unary: usize,
}

impl SyntheticLandscape {
    /// Default couplings: every `(i, j)` with `(i + j) % 3 == 0`.
    pub fn new(space: &DetectionSearchSpace, seed: u64) -> Self {
        let nb = space.module(ModuleId::Backbone).map_or(0, |m| m.gene_count());
        let nh = space.module(ModuleId::Head).map_or(0, |m| m.gene_count());
        let couplings = (0..nb)
            .flat_map(|i| (0..nh).map(move |j| (i, j)))
            .filter(|(i, j)| (i + j) % 3 == 0)
            .collect();
        SyntheticLandscape::with_couplings(space, seed, couplings)
    }

    pub fn with_couplings(
        space: &DetectionSearchSpace,
        seed: u64,
        mut couplings: Vec<(usize, usize)>,
    ) -> Self {
        couplings.sort_unstable();
        couplings.dedup();
        let n_unary = space.modules().map(|m| m.gene_count()).sum();
        SyntheticLandscape {
            seed,
            couplings,
            n_unary,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn couplings(&self) -> &[(usize, usize)] {
        &self.couplings
    }

    pub fn n_unary(&self) -> usize {
        self.n_unary
    }

    pub fn n_pairs(&self) -> usize {
        self.couplings.len()
    }

    fn hash(&self, fields: &[u64]) -> f64 {
        unit_f64(fold(self.seed, fields))
    }

    /// Fitness of a genome that validates against `space`.
    pub fn fitness(&self, space: &DetectionSearchSpace, genome: &Genome) -> f64 {
        let mut sum_u = 0.0;
        for m in space.modules() {
            let genes = genome.genes(m.module()).expect("validated genome");
            for (i, (&g, axis)) in genes.iter().zip(m.axes()).enumerate() {
                let v = axis.choices[g as usize];
                sum_u += self.hash(&[m.module().tag(), i as u64, u64::from(v)]);
            }
        }
        let mut sum_p = 0.0;
        if let (Some(bs), Some(hs)) = (space.module(ModuleId::Backbone), space.module(ModuleId::Head)) {
            let bg = genome.genes(ModuleId::Backbone).expect("validated genome");
            let hg = genome.genes(ModuleId::Head).expect("validated genome");
            for &(i, j) in &self.couplings {
                let vb = bs.axes()[i].choices[bg[i] as usize];
                let vh = hs.axes()[j].choices[hg[j] as usize];
                sum_p += self.hash(&[PAIR_TAG, i as u64, j as u64, u64::from(vb), u64::from(vh)]);
            }
        }
        let denom = (self.n_unary + 2 * self.couplings.len()) as f64;
        if denom == 0.0 {
            0.0
        } else {
            (sum_u + 2.0 * sum_p) / denom
        }
    }
}

/// In-process evaluator over a [`SyntheticLandscape`], optionally parallel.
pub struct SyntheticEvaluator {
    space: DetectionSearchSpace,
    landscape: SyntheticLandscape,
    pool: Option<rayon::ThreadPool>,
}

impl SyntheticEvaluator {
    pub fn new(space: &DetectionSearchSpace, seed: u64) -> Self {
        SyntheticEvaluator {
            landscape: SyntheticLandscape::new(space, seed),
            space: space.clone(),
            pool: None,
        }
    }

    pub fn from_landscape(space: &DetectionSearchSpace, landscape: SyntheticLandscape) -> Self {
        SyntheticEvaluator {
            space: space.clone(),
            landscape,
            pool: None,
        }
    }

    /// Evaluates batches on `workers` threads. Results do not depend on it.
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.pool = if workers > 1 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .ok()
        } else {
            None
        };
        self
    }

    pub fn landscape(&self) -> &SyntheticLandscape {
        &self.landscape
    }

    fn one(&self, genome: &Genome) -> Result<Fitness, EvalError> {
        self.space.validate(genome)?;
        Fitness::new(self.landscape.fitness(&self.space, genome))
    }
}

impl Evaluator for SyntheticEvaluator {
    fn id(&self) -> String {
        format!("synthetic:{}", self.landscape.seed)
    }

    fn evaluate_batch(&self, genomes: &[Genome]) -> Result<Vec<Fitness>, EvalError> {
        match &self.pool {
            Some(pool) => pool.install(|| genomes.par_iter().map(|g| self.one(g)).collect()),
            None => genomes.iter().map(|g| self.one(g)).collect(),
        }
    }
}
