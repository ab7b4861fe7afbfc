//! Fitness evaluation for complete genomes.
//!
//! Fitness is opaque to the engine: a deterministic value in `[0, 1]`, higher
//! is better. Evaluations always see the full genome, so a candidate for one
//! module is scored in the context of the fixed complement it was paired with.

mod external;
mod oracle;
mod protocol;
mod synthetic;

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::CostError;
use crate::search_space::{Genome, SpaceError, SpaceHash};

pub use external::ExternalEvaluator;
pub use oracle::oracle_best;
pub use protocol::{serve, Message, ProtocolClient, PROTOCOL_VERSION};
pub use synthetic::{SyntheticEvaluator, SyntheticLandscape, PAIR_TAG};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid fitness {0}: must be finite and within [0, 1]")]
    InvalidFitness(f64),
    #[error("evaluator protocol violation: {message} (line: {line:?})")]
    Protocol { message: String, line: String },
    #[error("evaluator handshake failed: {0}")]
    Handshake(String),
    #[error("evaluator exited: {0}")]
    Exited(String),
    #[error("failed to start evaluator `{command}`: {source}")]
    Spawn {
        command: String,
        source: std::io::Error,
    },
    #[error("evaluator i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// A fitness value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Fitness(f64);

impl Fitness {
    pub fn new(value: f64) -> Result<Self, EvalError> {
        if value.is_finite() && (0.0..=1.0).contains(&value) {
            Ok(Fitness(value))
        } else {
            Err(EvalError::InvalidFitness(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Total order usable for sorting.
    pub fn total_cmp(&self, other: &Fitness) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl TryFrom<f64> for Fitness {
    type Error = EvalError;

    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Fitness::new(v)
    }
}

impl From<Fitness> for f64 {
    fn from(f: Fitness) -> f64 {
        f.0
    }
}

impl fmt::Display for Fitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

/// Anything that can score full genomes.
///
/// Implementations must be deterministic: the same genome always yields the
/// same fitness, and results come back in request order.
pub trait Evaluator: Send + Sync {
    /// Stable identity, part of the cache key and the run digest.
    fn id(&self) -> String;

    fn evaluate_batch(&self, genomes: &[Genome]) -> Result<Vec<Fitness>, EvalError>;

    fn evaluate(&self, genome: &Genome) -> Result<Fitness, EvalError> {
        let mut out = self.evaluate_batch(std::slice::from_ref(genome))?;
        Ok(out.pop().expect("one result per genome"))
    }
}

impl<E: Evaluator + ?Sized> Evaluator for Box<E> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn evaluate_batch(&self, genomes: &[Genome]) -> Result<Vec<Fitness>, EvalError> {
        (**self).evaluate_batch(genomes)
    }
}

impl<E: Evaluator + ?Sized> Evaluator for &E {
    fn id(&self) -> String {
        (**self).id()
    }

    fn evaluate_batch(&self, genomes: &[Genome]) -> Result<Vec<Fitness>, EvalError> {
        (**self).evaluate_batch(genomes)
    }
}

/// Returns the same fitness for every genome.
#[derive(Debug, Clone, Copy)]
pub struct ConstantEvaluator(pub Fitness);

impl Evaluator for ConstantEvaluator {
    fn id(&self) -> String {
        format!("constant:{}", self.0)
    }

    fn evaluate_batch(&self, genomes: &[Genome]) -> Result<Vec<Fitness>, EvalError> {
        Ok(vec![self.0; genomes.len()])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    space_hash: SpaceHash,
    evaluator_id: String,
    genome: Genome,
}

/// Memoizes an evaluator on `(space_hash, evaluator_id, full genome)`.
pub struct CachedEvaluator<E> {
    inner: E,
    space_hash: SpaceHash,
    evaluator_id: String,
    cache: Mutex<HashMap<CacheKey, Fitness>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<E: Evaluator> CachedEvaluator<E> {
    pub fn new(inner: E, space_hash: SpaceHash) -> Self {
        let evaluator_id = inner.id();
        CachedEvaluator {
            inner,
            space_hash,
            evaluator_id,
            cache: Mutex::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    /// `(hits, misses)` so far.
    pub fn stats(&self) -> (u64, u64) {
        (
            self.hits.load(Ordering::Relaxed),
            self.misses.load(Ordering::Relaxed),
        )
    }

    fn key(&self, genome: &Genome) -> CacheKey {
        CacheKey {
            space_hash: self.space_hash,
            evaluator_id: self.evaluator_id.clone(),
            genome: genome.clone(),
        }
    }
}

impl<E: Evaluator> Evaluator for CachedEvaluator<E> {
    fn id(&self) -> String {
        self.evaluator_id.clone()
    }

    fn evaluate_batch(&self, genomes: &[Genome]) -> Result<Vec<Fitness>, EvalError> {
        let mut out: Vec<Option<Fitness>> = {
            let cache = self.cache.lock().expect("cache lock poisoned");
            genomes.iter().map(|g| cache.get(&self.key(g)).copied()).collect()
        };
        // Unique misses, in first-seen order.
        let mut missing: Vec<Genome> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (g, f) in genomes.iter().zip(&out) {
            if f.is_none() && seen.insert(g) {
                missing.push(g.clone());
            }
        }
        self.hits
            .fetch_add((genomes.len() - missing.len()) as u64, Ordering::Relaxed);
        self.misses
            .fetch_add(missing.len() as u64, Ordering::Relaxed);
        if !missing.is_empty() {
            let fresh = self.inner.evaluate_batch(&missing)?;
            let mut cache = self.cache.lock().expect("cache lock poisoned");
            for (g, f) in missing.iter().zip(fresh) {
                cache.insert(self.key(g), f);
            }
            for (g, slot) in genomes.iter().zip(out.iter_mut()) {
                if slot.is_none() {
                    *slot = cache.get(&self.key(g)).copied();
                }
            }
        }
        Ok(out.into_iter().map(|f| f.expect("filled above")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search_space::{ModuleGenome, ModuleId};

    struct Counting(AtomicU64);

    impl Evaluator for Counting {
        fn id(&self) -> String {
            "counting".into()
        }

        fn evaluate_batch(&self, genomes: &[Genome]) -> Result<Vec<Fitness>, EvalError> {
            self.0.fetch_add(genomes.len() as u64, Ordering::Relaxed);
            genomes
                .iter()
                .map(|g| Fitness::new(f64::from(g.flat_genes()[0]) / 10.0))
                .collect()
        }
    }

    fn g(x: u32) -> Genome {
        [ModuleGenome::new(ModuleId::Backbone, vec![x])]
            .into_iter()
            .collect()
    }

    #[test]
    fn fitness_range_is_enforced() {
        assert!(Fitness::new(0.0).is_ok());
        assert!(Fitness::new(1.0).is_ok());
        assert!(Fitness::new(1.0000001).is_err());
        assert!(Fitness::new(-0.1).is_err());
        assert!(Fitness::new(f64::NAN).is_err());
        assert!(serde_json::from_str::<Fitness>("1.5").is_err());
    }

    #[test]
    fn cache_agrees_with_uncached_and_deduplicates() {
        let cached = CachedEvaluator::new(Counting(AtomicU64::new(0)), SpaceHash(7));
        let batch = vec![g(1), g(2), g(1), g(3)];
        let first = cached.evaluate_batch(&batch).unwrap();
        let direct = Counting(AtomicU64::new(0)).evaluate_batch(&batch).unwrap();
        assert_eq!(first, direct);
        assert_eq!(cached.inner().0.load(Ordering::Relaxed), 3);
        let again = cached.evaluate_batch(&batch).unwrap();
        assert_eq!(again, first);
        assert_eq!(cached.inner().0.load(Ordering::Relaxed), 3);
        assert_eq!(cached.stats(), (5, 3));
    }
}
