//! Random-sampling statistics of a search space, jointly or with all but one
//! module fixed, and tables comparing such samplings.
//!
//! Variances are population variances (divisor `n`).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{CostError, ResourceBudget};
use crate::evaluator::{EvalError, Evaluator};
use crate::rng::{Purpose, Stream};
use crate::search_space::{
    sample_genome, sample_random, DetectionSearchSpace, Genome, ModuleId, SpaceError, SpaceHash,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("found {found} of {needed} feasible samples after {draws} draws")]
    Exhausted { draws: usize, found: usize, needed: usize },
    #[error("need at least 2 reports to compare, got {0}")]
    TooFewReports(usize),
    #[error("report {index} is over space {found}, the baseline over {expected}")]
    SpaceMismatch {
        index: usize,
        expected: SpaceHash,
        found: SpaceHash,
    },
    #[error("report {index} used evaluator {found}, the baseline {expected}")]
    EvaluatorMismatch {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("{0}")]
    Condition(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// What is sampled and what is held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Condition {
    /// Every module random.
    Joint,
    /// `module` random, everything else taken from `complement`.
    Conditioned { module: ModuleId, complement: Genome },
}

impl Condition {
    pub fn default_label(&self) -> String {
        match self {
            Condition::Joint => "joint".into(),
            Condition::Conditioned { module, complement } => {
                let fixed: Vec<String> = complement
                    .modules()
                    .filter(|m| m != module)
                    .map(|m| format!("{m}={:?}", complement.genes(m).unwrap_or_default()))
                    .collect();
                format!("{module}|{}", fixed.join(";"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSpec {
    pub condition: Condition,
    pub n: usize,
    pub seed: u64,
    /// Reject repeated genomes. With `n` equal to the feasible population
    /// this yields every feasible genome exactly once.
    pub distinct: bool,
    /// Row label in exported tables; [`Condition::default_label`] if absent.
    pub label: Option<String>,
    /// Draw limit per requested sample.
    pub max_draws_per_sample: usize,
}

impl SamplingSpec {
    pub fn new(condition: Condition, n: usize, seed: u64) -> Self {
        SamplingSpec {
            condition,
            n,
            seed,
            distinct: false,
            label: None,
            max_draws_per_sample: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub genome: Genome,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingReport {
    pub label: String,
    pub condition: Condition,
    pub space_hash: SpaceHash,
    pub evaluator: String,
    pub n_samples: usize,
    pub mean: f64,
    pub std: f64,
    /// Population variance.
    pub variance: f64,
    pub samples: Vec<SampleRecord>,
}

/// Mean and population variance by Welford's recurrence.
pub fn mean_variance(values: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    if values.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (mean, m2 / values.len() as f64)
    }
}

/// Draws `spec.n` feasible genomes under `spec.condition` and evaluates them.
pub fn sample_stats<E: Evaluator + ?Sized>(
    space: &DetectionSearchSpace,
    budget: &ResourceBudget,
    evaluator: &E,
    spec: &SamplingSpec,
) -> Result<SamplingReport, AnalysisError> {
    if spec.n < 2 {
        return Err(AnalysisError::TooFewSamples(spec.n));
    }
    let stream_tag = match &spec.condition {
        Condition::Joint => 0,
        Condition::Conditioned { module, complement } => {
            if space.module(*module).is_none() {
                return Err(AnalysisError::Condition(format!("space has no {module} module")));
            }
            for m in space.module_ids().filter(|m| m != module) {
                let mg = complement.module_genome(m).ok_or_else(|| {
                    AnalysisError::Condition(format!("fixed complement lacks module {m}"))
                })?;
                space.module(m).expect("listed by the space").validate(&mg)?;
            }
            module.tag()
        }
    };
    let mut rng = Stream::for_purpose(spec.seed, Purpose::Sampling, &[stream_tag]);
    let max_draws = spec.max_draws_per_sample.saturating_mul(spec.n);
    let mut seen = BTreeSet::new();
    let mut genomes = Vec::with_capacity(spec.n);
    let mut draws = 0;
    while genomes.len() < spec.n {
        if draws == max_draws {
            return Err(AnalysisError::Exhausted {
                draws,
                found: genomes.len(),
                needed: spec.n,
            });
        }
        draws += 1;
        let g = match &spec.condition {
            Condition::Joint => sample_genome(space, &mut rng),
            Condition::Conditioned { module, complement } => {
                let mspace = space.module(*module).expect("checked above");
                complement.with_module(&sample_random(mspace, &mut rng))
            }
        };
        if spec.distinct && seen.contains(&g) {
            continue;
        }
        if !budget.admits(space, &g)? {
            continue;
        }
        if spec.distinct {
            seen.insert(g.clone());
        }
        genomes.push(g);
    }

    let fitness = evaluator.evaluate_batch(&genomes)?;
    let values: Vec<f64> = fitness.iter().map(|f| f.value()).collect();
    let (mean, variance) = mean_variance(&values);
    Ok(SamplingReport {
        label: spec
            .label
            .clone()
            .unwrap_or_else(|| spec.condition.default_label()),
        condition: spec.condition.clone(),
        space_hash: space.space_hash(),
        evaluator: evaluator.id(),
        n_samples: values.len(),
        mean,
        std: variance.sqrt(),
        variance,
        samples: genomes
            .into_iter()
            .zip(values)
            .map(|(genome, fitness)| SampleRecord { genome, fitness })
            .collect(),
    })
}

#[derive(Debug, Serialize)]
struct StatsRow<'a> {
    condition: &'a str,
    n: usize,
    mean: f64,
    std: f64,
    variance: f64,
}

#[derive(Debug, Serialize)]
struct SampleRow<'a> {
    condition: &'a str,
    sample_idx: usize,
    fitness: f64,
    genome_json: String,
}

fn into_string(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is utf-8")
}

/// `stats.csv`: `condition,n,mean,std,variance`, population variance.
pub fn stats_csv(reports: &[SamplingReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(StatsRow {
            condition: &r.label,
            n: r.n_samples,
            mean: r.mean,
            std: r.std,
            variance: r.variance,
        })
        .expect("writing to memory");
    }
    into_string(w)
}

/// `samples.csv`: `condition,sample_idx,fitness,genome_json`.
pub fn samples_csv(reports: &[SamplingReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        for (i, s) in r.samples.iter().enumerate() {
            w.serialize(SampleRow {
                condition: &r.label,
                sample_idx: i,
                fitness: s.fitness,
                genome_json: s.genome.to_json(),
            })
            .expect("writing to memory");
        }
    }
    into_string(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub condition: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub variance: f64,
    /// `mean - baseline mean`.
    pub mean_delta: f64,
    /// `variance / baseline variance`; empty when the baseline variance is 0.
    pub variance_ratio: Option<f64>,
}

/// Rows relative to the first (baseline) report.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

pub fn compare_conditions(reports: &[SamplingReport]) -> Result<ComparisonTable, AnalysisError> {
    let base = match reports {
        [base, _, ..] => base,
        _ => return Err(AnalysisError::TooFewReports(reports.len())),
    };
    let mut rows = Vec::with_capacity(reports.len());
    for (index, r) in reports.iter().enumerate() {
        if r.space_hash != base.space_hash {
            return Err(AnalysisError::SpaceMismatch {
                index,
                expected: base.space_hash,
                found: r.space_hash,
            });
        }
        if r.evaluator != base.evaluator {
            return Err(AnalysisError::EvaluatorMismatch {
                index,
                expected: base.evaluator.clone(),
                found: r.evaluator.clone(),
            });
        }
        rows.push(ComparisonRow {
            condition: r.label.clone(),
            n: r.n_samples,
            mean: r.mean,
            std: r.std,
            variance: r.variance,
            mean_delta: r.mean - base.mean,
            variance_ratio: (base.variance != 0.0).then(|| r.variance / base.variance),
        });
    }
    Ok(ComparisonTable { rows })
}

impl ComparisonTable {
    /// Columns `condition,n,mean,std,variance,mean_delta,variance_ratio`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("writing to memory");
        }
        into_string(w)
    }

    pub fn from_csv(text: &str) -> Result<Self, AnalysisError> {
        let rows = csv::Reader::from_reader(text.as_bytes())
            .deserialize()
            .collect::<Result<Vec<ComparisonRow>, _>>()?;
        Ok(ComparisonTable { rows })
    }
}
