use super::{EvalError, Evaluator, Fitness};
use crate::cost::ResourceBudget;
use crate::search_space::{DetectionSearchSpace, Genome};

const CHUNK: usize = 4096;

/// Exhaustively evaluates every (feasible, if `budget` is given) genome and
/// returns the best. Ties go to the lexicographically smallest genome.
///
/// Returns `Ok(None)` only when no genome satisfies `budget`.
pub fn oracle_best<E: Evaluator + ?Sized>(
    space: &DetectionSearchSpace,
    evaluator: &E,
    budget: Option<&ResourceBudget>,
    cap: u128,
) -> Result<Option<(Genome, Fitness)>, EvalError> {
    let mut best: Option<(Genome, Fitness)> = None;
    let mut chunk = Vec::with_capacity(CHUNK);
    let mut flush = |chunk: &mut Vec<Genome>| -> Result<(), EvalError> {
        let scores = evaluator.evaluate_batch(chunk)?;
        for (g, f) in chunk.drain(..).zip(scores) {
            if best.as_ref().is_none_or(|(_, b)| f.value() > b.value()) {
                best = Some((g, f));
            }
        }
        Ok(())
    };
    for genome in space.enumerate(cap)? {
        if let Some(b) = budget {
            if !b.admits(space, &genome)? {
                continue;
            }
        }
        chunk.push(genome);
        if chunk.len() == CHUNK {
            flush(&mut chunk)?;
        }
    }
    if !chunk.is_empty() {
        flush(&mut chunk)?;
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::ConstantEvaluator;
    use crate::search_space::{parse_space, DEFAULT_ENUMERATION_CAP};

    const SPACE: &str = r#"{"version":1,"input":{"channels":3,"hw":[4,4]},"modules":{
        "backbone":{"axes":[{"name":"s0.width","choices":[8,16]},{"name":"s0.kernel","choices":[1,3]}],
            "skeleton":[{"stage":0,"hw":[4,4],"kind":"conv","in_link":"input"}]}}}"#;

    #[test]
    fn constant_evaluator_picks_smallest_genome() {
        let space = parse_space(SPACE).unwrap();
        let c = ConstantEvaluator(Fitness::new(0.5).unwrap());
        let (g, f) = oracle_best(&space, &c, None, DEFAULT_ENUMERATION_CAP)
            .unwrap()
            .unwrap();
        assert_eq!(g.flat_genes(), vec![0, 0]);
        assert_eq!(f.value(), 0.5);
    }

    #[test]
    fn budget_filters_candidates() {
        let space = parse_space(SPACE).unwrap();
        let c = ConstantEvaluator(Fitness::new(0.5).unwrap());
        // Smallest genome: 3*8*1 + 8 = 32 params = 128 bytes at 4 B/weight.
        let none = oracle_best(&space, &c, Some(&ResourceBudget::weight_limit(127)), 100).unwrap();
        assert!(none.is_none());
        let one = oracle_best(&space, &c, Some(&ResourceBudget::weight_limit(128)), 100)
            .unwrap()
            .unwrap();
        assert_eq!(one.0.flat_genes(), vec![0, 0]);
    }

    #[test]
    fn over_cap_is_refused() {
        let space = parse_space(SPACE).unwrap();
        let c = ConstantEvaluator(Fitness::new(0.5).unwrap());
        assert!(matches!(
            oracle_best(&space, &c, None, 3),
            Err(EvalError::Space(_))
        ));
    }
}
