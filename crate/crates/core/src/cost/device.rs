use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CostError, ResourceBudget};

/// Memory and structural limits of a CNN accelerator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    pub weight_mem_bytes: u64,
    pub data_mem_bytes: u64,
    pub allowed_kernels: BTreeSet<u64>,
    pub max_layers: u64,
    /// `None` when the vendor states no per-layer channel limit.
    #[serde(default)]
    pub max_channels_per_layer: Option<u64>,
    pub bytes_per_weight: u32,
}

impl DeviceProfile {
    /// MAX78000: 432 KB weights, 32 KB data, 1x1/3x3 kernels, 32 layers,
    /// 1024 channels per layer, 8-bit weights.
    pub fn max78000() -> Self {
        DeviceProfile {
            name: "max78000".into(),
            weight_mem_bytes: 432 * 1024,
            data_mem_bytes: 32 * 1024,
            allowed_kernels: [1, 3].into(),
            max_layers: 32,
            max_channels_per_layer: Some(1024),
            bytes_per_weight: 1,
        }
    }

    /// MAX78002: 2.3 MB weights, 80 KB data, 128 layers. No channel limit is
    /// published; kernels follow the MAX78000 accelerator.
    pub fn max78002() -> Self {
        DeviceProfile {
            name: "max78002".into(),
            // 2.3 * 1024 * 1024, truncated to whole bytes.
            weight_mem_bytes: 2_411_724,
            data_mem_bytes: 80 * 1024,
            allowed_kernels: [1, 3].into(),
            max_layers: 128,
            max_channels_per_layer: None,
            bytes_per_weight: 1,
        }
    }

    pub fn builtin(name: &str) -> Result<Self, CostError> {
        match name.to_ascii_lowercase().as_str() {
            "max78000" => Ok(DeviceProfile::max78000()),
            "max78002" => Ok(DeviceProfile::max78002()),
            _ => Err(CostError::UnknownDevice(name.to_string())),
        }
    }
}

/// Budget enforcing the profile. The per-module split is left empty.
pub fn device_budget(profile: &DeviceProfile) -> ResourceBudget {
    ResourceBudget {
        tau_total: profile.weight_mem_bytes,
        tau_per_module: BTreeMap::new(),
        bytes_per_weight: profile.bytes_per_weight,
        max_macs: None,
        max_layers: Some(profile.max_layers),
        max_channels: profile.max_channels_per_layer,
        max_activation_bytes: Some(profile.data_mem_bytes),
        allowed_kernels: Some(profile.allowed_kernels.clone()),
    }
}

/// Named profiles: the built-in ones plus any loaded from a JSON registry
/// `{"profiles":[{...}, ...]}`. Loaded profiles shadow built-ins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviceRegistry {
    pub profiles: Vec<DeviceProfile>,
}

impl Default for DeviceRegistry {
    fn default() -> Self {
        DeviceRegistry {
            profiles: vec![DeviceProfile::max78000(), DeviceProfile::max78002()],
        }
    }
}

impl DeviceRegistry {
    pub fn from_json(text: &str) -> Result<Self, CostError> {
        let loaded: DeviceRegistry =
            serde_json::from_str(text).map_err(|e| CostError::Registry(e.to_string()))?;
        let mut registry = DeviceRegistry::default();
        for p in loaded.profiles {
            if p.bytes_per_weight == 0 || p.max_layers == 0 {
                return Err(CostError::Registry(format!(
                    "profile {:?} has a zero limit",
                    p.name
                )));
            }
            registry.profiles.retain(|q| q.name != p.name);
            registry.profiles.push(p);
        }
        Ok(registry)
    }

    pub fn load(path: &Path) -> Result<Self, CostError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CostError::Registry(format!("{}: {e}", path.display())))?;
        DeviceRegistry::from_json(&text)
    }

    pub fn get(&self, name: &str) -> Result<&DeviceProfile, CostError> {
        self.profiles
            .iter()
            .find(|p| p.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| CostError::UnknownDevice(name.to_string()))
    }
}
