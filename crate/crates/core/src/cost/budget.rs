use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{estimate, CostError, CostReport};
use crate::search_space::{DetectionSearchSpace, Genome, ModuleId};

/// Hard resource limits. `tau_*` values are weight bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceBudget {
    pub tau_total: u64,
    #[serde(default)]
    pub tau_per_module: BTreeMap<ModuleId, u64>,
    pub bytes_per_weight: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_macs: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_layers: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_channels: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_activation_bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_kernels: Option<BTreeSet<u64>>,
}

impl ResourceBudget {
    /// Only a total weight limit, with 32-bit weights.
    pub fn weight_limit(tau_total: u64) -> Self {
        ResourceBudget {
            tau_total,
            tau_per_module: BTreeMap::new(),
            bytes_per_weight: 4,
            max_macs: None,
            max_layers: None,
            max_channels: None,
            max_activation_bytes: None,
            allowed_kernels: None,
        }
    }

    /// No effective limits.
    pub fn unlimited() -> Self {
        ResourceBudget::weight_limit(u64::MAX)
    }

    /// Fills in an even split of `tau_total` for every module of `modules`
    /// that has no explicit per-module limit. Explicit entries are kept.
    pub fn with_default_split(mut self, modules: impl IntoIterator<Item = ModuleId>) -> Self {
        let modules: Vec<ModuleId> = modules.into_iter().collect();
        let assigned: u64 = self.tau_per_module.values().sum();
        let missing: Vec<ModuleId> = modules
            .iter()
            .copied()
            .filter(|m| !self.tau_per_module.contains_key(m))
            .collect();
        if !missing.is_empty() && self.tau_total != u64::MAX {
            let share = self.tau_total.saturating_sub(assigned) / missing.len() as u64;
            for m in missing {
                self.tau_per_module.insert(m, share);
            }
        }
        self
    }

    /// Checks that per-module limits fit inside the total.
    pub fn validate(&self) -> Result<(), CostError> {
        if self.bytes_per_weight == 0 {
            return Err(CostError::Budget("bytes_per_weight must be positive".into()));
        }
        let sum = self
            .tau_per_module
            .values()
            .try_fold(0u64, |acc, &t| acc.checked_add(t));
        match sum {
            Some(s) if s <= self.tau_total => Ok(()),
            _ => Err(CostError::Budget(format!(
                "per-module limits {:?} exceed the total {}",
                self.tau_per_module, self.tau_total
            ))),
        }
    }

    /// Estimates `genome` at this budget's precision and checks it.
    pub fn assess(
        &self,
        space: &DetectionSearchSpace,
        genome: &Genome,
    ) -> Result<Assessment, CostError> {
        let report = estimate(space, genome, self.bytes_per_weight)?;
        let verdict = check_budget(&report, self);
        Ok(Assessment { report, verdict })
    }

    pub fn admits(&self, space: &DetectionSearchSpace, genome: &Genome) -> Result<bool, CostError> {
        Ok(self.assess(space, genome)?.verdict.pass())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assessment {
    pub report: CostReport,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "constraint", rename_all = "snake_case")]
pub enum Violation {
    WeightBytes { measured: u64, allowed: u64 },
    ModuleWeightBytes { module: ModuleId, measured: u64, allowed: u64 },
    Macs { measured: u64, allowed: u64 },
    Layers { measured: u64, allowed: u64 },
    Channels { measured: u64, allowed: u64 },
    ActivationBytes { measured: u64, allowed: u64 },
    Kernel { kernel: u64, allowed: BTreeSet<u64> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::WeightBytes { measured, allowed } => {
                write!(f, "weight memory {measured} B > {allowed} B")
            }
            Violation::ModuleWeightBytes {
                module,
                measured,
                allowed,
            } => write!(f, "{module} weight memory {measured} B > {allowed} B"),
            Violation::Macs { measured, allowed } => write!(f, "MACs {measured} > {allowed}"),
            Violation::Layers { measured, allowed } => write!(f, "layers {measured} > {allowed}"),
            Violation::Channels { measured, allowed } => {
                write!(f, "channels per layer {measured} > {allowed}")
            }
            Violation::ActivationBytes { measured, allowed } => {
                write!(f, "activation memory {measured} B > {allowed} B")
            }
            Violation::Kernel { kernel, allowed } => {
                write!(f, "kernel {kernel}x{kernel} not in {allowed:?}")
            }
        }
    }
}

/// Feasibility verdict; empty violation list means pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub violations: Vec<Violation>,
}

impl Verdict {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every violated constraint. All limits are inclusive.
pub fn check_budget(report: &CostReport, budget: &ResourceBudget) -> Verdict {
    let mut violations = Vec::new();
    if report.weight_bytes > budget.tau_total {
        violations.push(Violation::WeightBytes {
            measured: report.weight_bytes,
            allowed: budget.tau_total,
        });
    }
    for (&module, &allowed) in &budget.tau_per_module {
        let measured = report
            .per_module
            .get(&module)
            .map_or(0, |m| m.weight_bytes);
        if measured > allowed {
            violations.push(Violation::ModuleWeightBytes {
                module,
                measured,
                allowed,
            });
        }
    }
    let caps = [
        (budget.max_macs, report.macs, 0),
        (budget.max_layers, report.layer_count, 1),
        (budget.max_channels, report.max_channels, 2),
        (budget.max_activation_bytes, report.peak_activation_bytes, 3),
    ];
    for (cap, measured, which) in caps {
        if let Some(allowed) = cap {
            if measured > allowed {
                violations.push(match which {
                    0 => Violation::Macs { measured, allowed },
                    1 => Violation::Layers { measured, allowed },
                    2 => Violation::Channels { measured, allowed },
                    _ => Violation::ActivationBytes { measured, allowed },
                });
            }
        }
    }
    if let Some(allowed) = &budget.allowed_kernels {
        for &k in report.kernels.difference(allowed) {
            violations.push(Violation::Kernel {
                kernel: k,
                allowed: allowed.clone(),
            });
        }
    }
    Verdict { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::ModuleCost;

    fn report(weight_bytes: u64) -> CostReport {
        CostReport {
            params: weight_bytes,
            weight_bytes,
            ..CostReport::default()
        }
    }

    #[test]
    fn limit_is_inclusive() {
        let b = ResourceBudget::weight_limit(1000);
        assert!(check_budget(&report(1000), &b).pass());
        assert!(!check_budget(&report(1001), &b).pass());
    }

    #[test]
    fn every_violation_is_listed() {
        let mut r = report(500);
        r.layer_count = 40;
        r.kernels.insert(5);
        r.per_module.insert(
            ModuleId::Head,
            ModuleCost {
                params: 400,
                weight_bytes: 400,
                macs: 0,
            },
        );
        let mut b = ResourceBudget::weight_limit(400);
        b.tau_per_module.insert(ModuleId::Head, 200);
        b.max_layers = Some(32);
        b.allowed_kernels = Some([1, 3].into());
        let v = check_budget(&r, &b);
        assert_eq!(v.violations.len(), 4, "{v:?}");
        assert!(v.violations.contains(&Violation::ModuleWeightBytes {
            module: ModuleId::Head,
            measured: 400,
            allowed: 200
        }));
    }

    #[test]
    fn default_split_is_even_and_fits() {
        let b = ResourceBudget::weight_limit(1001).with_default_split(ModuleId::ALL);
        assert_eq!(b.tau_per_module[&ModuleId::Backbone], 500);
        assert_eq!(b.tau_per_module[&ModuleId::Head], 500);
        b.validate().unwrap();

        let mut explicit = ResourceBudget::weight_limit(1000);
        explicit.tau_per_module.insert(ModuleId::Backbone, 800);
        let explicit = explicit.with_default_split(ModuleId::ALL);
        assert_eq!(explicit.tau_per_module[&ModuleId::Head], 200);
    }

    #[test]
    fn oversubscribed_split_is_rejected() {
        let mut b = ResourceBudget::weight_limit(100);
        b.tau_per_module.insert(ModuleId::Backbone, 60);
        b.tau_per_module.insert(ModuleId::Head, 60);
        assert!(b.validate().is_err());
    }
}
