use rand::Rng;

use super::{DetectionSearchSpace, Genome, ModuleGenome, ModuleSpace, SpaceError};

/// Draws every gene independently and uniformly over its axis.
pub fn sample_random<R: Rng + ?Sized>(space: &ModuleSpace, rng: &mut R) -> ModuleGenome {
    let genes = space
        .axes()
        .iter()
        .map(|a| rng.gen_range(0..a.len() as u32))
        .collect();
    ModuleGenome::new(space.module(), genes)
}

/// Joint uniform sample over every module.
pub fn sample_genome<R: Rng + ?Sized>(space: &DetectionSearchSpace, rng: &mut R) -> Genome {
    space.modules().map(|m| sample_random(m, rng)).collect()
}

/// Resamples each gene uniformly with probability `mutation_prob`; the
/// resample may land on the current value.
pub fn mutate<R: Rng + ?Sized>(
    space: &ModuleSpace,
    parent: &ModuleGenome,
    mutation_prob: f64,
    rng: &mut R,
) -> ModuleGenome {
    mutate_counted(space, parent, mutation_prob, rng).0
}

/// [`mutate`], also returning how many positions fired a resample event.
pub fn mutate_counted<R: Rng + ?Sized>(
    space: &ModuleSpace,
    parent: &ModuleGenome,
    mutation_prob: f64,
    rng: &mut R,
) -> (ModuleGenome, usize) {
    let p = mutation_prob.clamp(0.0, 1.0);
    let mut fired = 0;
    let genes = parent
        .genes
        .iter()
        .zip(space.axes())
        .map(|(&g, axis)| {
            if rng.gen_bool(p) {
                fired += 1;
                rng.gen_range(0..axis.len() as u32)
            } else {
                g
            }
        })
        .collect();
    (ModuleGenome::new(parent.module, genes), fired)
}

/// Uniform crossover: each gene comes from either parent with probability 1/2.
pub fn crossover<R: Rng + ?Sized>(
    space: &ModuleSpace,
    parent_a: &ModuleGenome,
    parent_b: &ModuleGenome,
    rng: &mut R,
) -> Result<ModuleGenome, SpaceError> {
    if parent_a.module != parent_b.module || parent_a.genes.len() != parent_b.genes.len() {
        return Err(SpaceError::GenomeMismatch(format!(
            "cannot cross a {} genome of {} genes with a {} genome of {} genes",
            parent_a.module,
            parent_a.genes.len(),
            parent_b.module,
            parent_b.genes.len()
        )));
    }
    space.validate(parent_a)?;
    space.validate(parent_b)?;
    let genes = parent_a
        .genes
        .iter()
        .zip(&parent_b.genes)
        .map(|(&a, &b)| if rng.gen_bool(0.5) { a } else { b })
        .collect();
    Ok(ModuleGenome::new(parent_a.module, genes))
}
