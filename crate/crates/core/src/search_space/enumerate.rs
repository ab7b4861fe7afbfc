//! Exhaustive lexicographic enumeration, used by oracles.

use super::{DetectionSearchSpace, Genome, ModuleGenome, ModuleId, ModuleSpace, SpaceError};

pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

fn check_cap(cardinality: Option<u128>, cap: u128) -> Result<(), SpaceError> {
    match cardinality {
        Some(c) if c <= cap => Ok(()),
        Some(c) => Err(SpaceError::TooLarge {
            cardinality: c.to_string(),
            cap,
        }),
        None => Err(SpaceError::TooLarge {
            cardinality: "more than 2^128".into(),
            cap,
        }),
    }
}

/// Mixed-radix counter; the last digit moves fastest.
#[derive(Debug, Clone)]
struct Odometer {
    radices: Vec<u32>,
    next: Option<Vec<u32>>,
}

impl Odometer {
    fn new(radices: Vec<u32>) -> Self {
        let next = Some(vec![0; radices.len()]);
        Odometer { radices, next }
    }
}

impl Iterator for Odometer {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        for i in (0..succ.len()).rev() {
            succ[i] += 1;
            if succ[i] < self.radices[i] {
                self.next = Some(succ);
                return Some(current);
            }
            succ[i] = 0;
        }
        Some(current)
    }
}

/// Every genome of one module, in lexicographic gene order.
#[derive(Debug, Clone)]
pub struct ModuleEnumerator {
    module: ModuleId,
    digits: Odometer,
}

impl Iterator for ModuleEnumerator {
    type Item = ModuleGenome;

    fn next(&mut self) -> Option<ModuleGenome> {
        self.digits
            .next()
            .map(|genes| ModuleGenome::new(self.module, genes))
    }
}

/// Every joint genome, lexicographic over the concatenated genes (backbone
/// genes first).
#[derive(Debug, Clone)]
pub struct GenomeEnumerator {
    split: Vec<(ModuleId, usize)>,
    digits: Odometer,
}

impl Iterator for GenomeEnumerator {
    type Item = Genome;

    fn next(&mut self) -> Option<Genome> {
        let flat = self.digits.next()?;
        let mut offset = 0;
        Some(
            self.split
                .iter()
                .map(|&(m, n)| {
                    let g = ModuleGenome::new(m, flat[offset..offset + n].to_vec());
                    offset += n;
                    g
                })
                .collect(),
        )
    }
}

impl ModuleSpace {
    pub fn enumerate(&self, cap: u128) -> Result<ModuleEnumerator, SpaceError> {
        check_cap(self.cardinality(), cap)?;
        Ok(ModuleEnumerator {
            module: self.module(),
            digits: Odometer::new(self.axes().iter().map(|a| a.len() as u32).collect()),
        })
    }
}

impl DetectionSearchSpace {
    pub fn enumerate(&self, cap: u128) -> Result<GenomeEnumerator, SpaceError> {
        check_cap(self.cardinality(), cap)?;
        let split = self
            .modules()
            .map(|m| (m.module(), m.gene_count()))
            .collect();
        let radices = self
            .modules()
            .flat_map(|m| m.axes().iter().map(|a| a.len() as u32))
            .collect();
        Ok(GenomeEnumerator {
            split,
            digits: Odometer::new(radices),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search_space::parse_space;

    fn space(axes_choices: &[&str]) -> DetectionSearchSpace {
        let roles = ["width", "kernel", "depth"];
        let axes: Vec<String> = axes_choices
            .iter()
            .zip(roles)
            .map(|(c, r)| format!(r#"{{"name":"s0.{r}","choices":{c}}}"#))
            .collect();
        let kernel = if axes_choices.len() < 2 {
            r#","kernel":1"#
        } else {
            ""
        };
        let doc = format!(
            r#"{{"version":1,"input":{{"channels":1,"hw":[2,2]}},"modules":{{"backbone":{{"axes":[{}],
            "skeleton":[{{"stage":0,"hw":[2,2],"kind":"conv","in_link":"input"{kernel}}}]}}}}}}"#,
            axes.join(",")
        );
        parse_space(&doc).unwrap()
    }

    #[test]
    fn two_by_two_in_lexicographic_order() {
        let s = space(&["[1,2]", "[1,3]"]);
        let all: Vec<Vec<u32>> = s.enumerate(DEFAULT_ENUMERATION_CAP).unwrap().map(|g| g.flat_genes()).collect();
        assert_eq!(all, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn cardinality_one_yields_single_genome() {
        let s = space(&["[4]"]);
        assert_eq!(s.enumerate(10).unwrap().count(), 1);
        let m = s.module(ModuleId::Backbone).unwrap();
        assert_eq!(m.enumerate(10).unwrap().count(), 1);
    }

    #[test]
    fn over_cap_is_refused_with_cardinality() {
        let s = space(&["[1,2,3]", "[1,3]", "[1,2]"]);
        let err = s.enumerate(11).unwrap_err();
        assert!(err.to_string().contains("12"), "{err}");
    }
}
