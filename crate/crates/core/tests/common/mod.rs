#![allow(dead_code)]

use std::path::PathBuf;

use altnas::cost::ResourceBudget;
use altnas::search_space::{parse_space, sample_genome, DetectionSearchSpace};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

pub fn space_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../spaces").join(name)
}

pub fn load(name: &str) -> DetectionSearchSpace {
    parse_space(&std::fs::read_to_string(space_path(name)).unwrap()).unwrap()
}

fn choices(rng: &mut StdRng, pool: &[u32], max: usize) -> Vec<u32> {
    let k = rng.gen_range(1..=max.min(pool.len()));
    let mut c: Vec<u32> = pool.choose_multiple(rng, k).copied().collect();
    c.sort_unstable();
    c
}

/// A random two-module space: conv or inverted-bottleneck stages with a few
/// choice axes each, every module keeping at least one axis.
pub fn random_space(seed: u64) -> DetectionSearchSpace {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut hw = [8u32, 16][rng.gen_range(0..2)];
    let input = json!({"channels": rng.gen_range(1..=4), "hw": [hw, hw]});
    let mut modules = serde_json::Map::new();
    let mut link = "input".to_string();
    for (name, n_stages) in [("backbone", rng.gen_range(1..=3)), ("head", rng.gen_range(1..=2))] {
        let mut axes = Vec::new();
        let mut skeleton = Vec::new();
        for st in 0..n_stages {
            if name == "backbone" && st > 0 && hw > 2 {
                hw /= 2;
            }
            let ib = st > 0 && rng.gen_bool(0.3);
            let mut stage = json!({
                "stage": st,
                "hw": [hw, hw],
                "kind": if ib { "inverted_bottleneck" } else { "conv" },
                "in_link": link,
            });
            axes.push(json!({"name": format!("s{st}.width"),
                             "choices": choices(&mut rng, &[4, 8, 12, 16, 24, 32], 3)}));
            if rng.gen_bool(0.6) {
                axes.push(json!({"name": format!("s{st}.kernel"), "choices": [1, 3]}));
            } else {
                stage["kernel"] = json!(3);
            }
            if rng.gen_bool(0.5) {
                axes.push(json!({"name": format!("s{st}.depth"), "choices": choices(&mut rng, &[1, 2, 3], 2)}));
            }
            if ib {
                axes.push(json!({"name": format!("s{st}.expand"), "choices": choices(&mut rng, &[2, 4, 6], 2)}));
            }
            skeleton.push(stage);
            link = format!("{name}:{st}");
        }
        modules.insert(name.into(), json!({"axes": axes, "skeleton": skeleton}));
    }
    let doc: Value = json!({"version": 1, "input": input, "modules": modules});
    parse_space(&doc.to_string()).unwrap()
}

/// A weight limit placed between the smallest and largest of a few random
/// genomes, so it binds without emptying the space.
pub fn random_budget(space: &DetectionSearchSpace, seed: u64) -> ResourceBudget {
    let mut rng = StdRng::seed_from_u64(seed ^ 0x5eed);
    let mut weights: Vec<u64> = (0..64)
        .map(|_| {
            let g = sample_genome(space, &mut rng);
            altnas::cost::estimate(space, &g, 4).unwrap().weight_bytes
        })
        .collect();
    weights.sort_unstable();
    let q = rng.gen_range(16..64);
    ResourceBudget::weight_limit(weights[q].saturating_mul(2).max(weights[q]))
}
