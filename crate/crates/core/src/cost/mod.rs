//! Analytical cost model: parameters, MACs, weight and activation memory.
//!
//! A genome is decoded against the space skeleton into a flat list of
//! convolution layers; every reported quantity is a sum or a max over that
//! list. Only multiply-accumulates are counted as compute. Activation memory
//! uses a sequential liveness model where the input and output of one layer
//! are live at a time, with activations stored at the weight precision.

mod budget;
mod device;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::search_space::{
    DetectionSearchSpace, Genome, InLink, ModuleId, Role, SpaceError, StageKind,
};

pub use budget::{check_budget, Assessment, ResourceBudget, Verdict, Violation};
pub use device::{device_budget, DeviceProfile, DeviceRegistry};

#[derive(Debug, Error)]
pub enum CostError {
    #[error(transparent)]
    Genome(#[from] SpaceError),
    #[error("internal cost-model error: {0}")]
    Internal(String),
    #[error("unknown device profile {0:?}")]
    UnknownDevice(String),
    #[error("device registry: {0}")]
    Registry(String),
    #[error("invalid budget: {0}")]
    Budget(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Standard,
    Depthwise,
    Pointwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub kind: LayerKind,
    pub c_in: u64,
    pub c_out: u64,
    pub kernel: u64,
    pub h_in: u64,
    pub w_in: u64,
    pub h_out: u64,
    pub w_out: u64,
    pub has_bias: bool,
}

impl LayerShape {
    /// Standard convolution with equal input and output spatial size.
    pub fn conv(c_in: u64, c_out: u64, kernel: u64, hw: [u64; 2], has_bias: bool) -> Self {
        LayerShape {
            kind: if kernel == 1 {
                LayerKind::Pointwise
            } else {
                LayerKind::Standard
            },
            c_in,
            c_out,
            kernel,
            h_in: hw[0],
            w_in: hw[1],
            h_out: hw[0],
            w_out: hw[1],
            has_bias,
        }
    }

    pub fn params(&self) -> u64 {
        let k2 = self.kernel * self.kernel;
        match self.kind {
            LayerKind::Depthwise => self.c_in * k2 + if self.has_bias { self.c_in } else { 0 },
            LayerKind::Standard | LayerKind::Pointwise => {
                self.c_in * self.c_out * k2 + if self.has_bias { self.c_out } else { 0 }
            }
        }
    }

    pub fn macs(&self) -> u64 {
        let k2 = self.kernel * self.kernel;
        let out = self.h_out * self.w_out;
        match self.kind {
            LayerKind::Depthwise => self.c_in * k2 * out,
            LayerKind::Standard | LayerKind::Pointwise => self.c_in * self.c_out * k2 * out,
        }
    }

    /// Input plus output activation elements.
    pub fn activation_elements(&self) -> u64 {
        self.c_in * self.h_in * self.w_in + self.c_out * self.h_out * self.w_out
    }
}

/// A layer together with where it came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedLayer {
    pub module: ModuleId,
    pub stage: u32,
    pub shape: LayerShape,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleCost {
    pub params: u64,
    pub weight_bytes: u64,
    pub macs: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub params: u64,
    pub weight_bytes: u64,
    pub macs: u64,
    pub peak_activation_bytes: u64,
    pub layer_count: u64,
    pub max_channels: u64,
    /// Distinct kernel sizes used by the network.
    pub kernels: BTreeSet<u64>,
    pub per_module: BTreeMap<ModuleId, ModuleCost>,
}

fn lookup(
    space: &DetectionSearchSpace,
    genes: &[u32],
    module: ModuleId,
    stage: u32,
    role: Role,
) -> Result<u64, CostError> {
    space
        .module(module)
        .and_then(|m| m.stage_value(genes, stage, role))
        .map(u64::from)
        .ok_or_else(|| CostError::Internal(format!("{module} stage {stage} has no {role}")))
}

/// Decodes `genome` into concrete layers, in module then stage order.
///
/// Depth selects how many layers (or bottleneck blocks) of a stage are
/// active; inactive ones are omitted.
pub fn instantiate_layers(
    space: &DetectionSearchSpace,
    genome: &Genome,
) -> Result<Vec<PlacedLayer>, CostError> {
    space.validate(genome)?;
    let mut outputs: BTreeMap<(ModuleId, u32), (u64, [u64; 2])> = BTreeMap::new();
    let mut layers = Vec::new();

    for mspace in space.modules() {
        let module = mspace.module();
        let genes = genome.genes(module).expect("validated");
        for st in mspace.skeleton() {
            let (src_channels, src_hw) = match st.in_link {
                InLink::Input => {
                    let input = space
                        .input()
                        .ok_or_else(|| CostError::Internal("missing input entry".into()))?;
                    (
                        u64::from(input.channels),
                        [u64::from(input.hw[0]), u64::from(input.hw[1])],
                    )
                }
                InLink::Stage { module, stage } => {
                    *outputs.get(&(module, stage)).ok_or_else(|| {
                        CostError::Internal(format!("link {} resolved before its source", st.in_link))
                    })?
                }
            };
            let hw = [u64::from(st.hw[0]), u64::from(st.hw[1])];
            let width = lookup(space, genes, module, st.stage, Role::Width)?;
            let kernel = lookup(space, genes, module, st.stage, Role::Kernel)?;
            let depth = lookup(space, genes, module, st.stage, Role::Depth)?;

            let mut c_in = src_channels;
            let mut hw_in = src_hw;
            for _ in 0..depth {
                let place = |shape| PlacedLayer {
                    module,
                    stage: st.stage,
                    shape,
                };
                match st.kind {
                    StageKind::Conv => {
                        let mut shape = LayerShape::conv(c_in, width, kernel, hw, st.bias);
                        shape.h_in = hw_in[0];
                        shape.w_in = hw_in[1];
                        layers.push(place(shape));
                    }
                    StageKind::InvertedBottleneck => {
                        let expand = lookup(space, genes, module, st.stage, Role::Expand)?;
                        let hidden = c_in * expand;
                        layers.push(place(LayerShape::conv(c_in, hidden, 1, hw_in, st.bias)));
                        layers.push(place(LayerShape {
                            kind: LayerKind::Depthwise,
                            c_in: hidden,
                            c_out: hidden,
                            kernel,
                            h_in: hw_in[0],
                            w_in: hw_in[1],
                            h_out: hw[0],
                            w_out: hw[1],
                            has_bias: st.bias,
                        }));
                        layers.push(place(LayerShape::conv(hidden, width, 1, hw, st.bias)));
                    }
                }
                c_in = width;
                hw_in = hw;
            }
            outputs.insert((module, st.stage), (width, hw));
        }
    }
    Ok(layers)
}

/// Sums and maxima over an explicit layer list.
pub fn estimate_layers(layers: &[PlacedLayer], bytes_per_weight: u32) -> CostReport {
    let bpw = u64::from(bytes_per_weight);
    let mut report = CostReport::default();
    for layer in layers {
        let s = &layer.shape;
        let params = s.params();
        let macs = s.macs();
        report.params += params;
        report.macs += macs;
        report.layer_count += 1;
        report.max_channels = report.max_channels.max(s.c_in).max(s.c_out);
        report.peak_activation_bytes = report
            .peak_activation_bytes
            .max(s.activation_elements() * bpw);
        report.kernels.insert(s.kernel);
        let m = report.per_module.entry(layer.module).or_default();
        m.params += params;
        m.weight_bytes += params * bpw;
        m.macs += macs;
    }
    report.weight_bytes = report.params * bpw;
    report
}

/// Cost of a full genome. Every module of the space appears in `per_module`.
pub fn estimate(
    space: &DetectionSearchSpace,
    genome: &Genome,
    bytes_per_weight: u32,
) -> Result<CostReport, CostError> {
    let layers = instantiate_layers(space, genome)?;
    let mut report = estimate_layers(&layers, bytes_per_weight);
    for m in space.module_ids() {
        report.per_module.entry(m).or_default();
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search_space::{parse_space, ModuleGenome};

    #[test]
    fn unit_conv() {
        let l = LayerShape::conv(1, 1, 1, [1, 1], true);
        assert_eq!((l.params(), l.macs()), (2, 1));
    }

    #[test]
    fn three_by_three_conv_golden() {
        // 16*32*9 + 32 and 16*32*9*64, by hand.
        let l = LayerShape::conv(16, 32, 3, [8, 8], true);
        assert_eq!(l.params(), 4640);
        assert_eq!(l.macs(), 294_912);
    }

    #[test]
    fn depthwise_formula() {
        let l = LayerShape {
            kind: LayerKind::Depthwise,
            c_in: 64,
            c_out: 64,
            kernel: 3,
            h_in: 8,
            w_in: 8,
            h_out: 4,
            w_out: 4,
            has_bias: true,
        };
        assert_eq!(l.params(), 64 * 9 + 64);
        assert_eq!(l.macs(), 64 * 9 * 16);
    }

    #[test]
    fn empty_layer_list_is_zero() {
        let r = estimate_layers(&[], 1);
        assert_eq!(r, CostReport::default());
    }

    const BOTTLENECK: &str = r#"{"version":1,"input":{"channels":16,"hw":[8,8]},"modules":{
        "backbone":{"axes":[{"name":"s0.expand","choices":[2,4]},{"name":"s0.depth","choices":[1,2]}],
        "skeleton":[{"stage":0,"hw":[4,4],"kind":"inverted_bottleneck","in_link":"input","width":24,"kernel":3}]}}}"#;

    fn bb(genes: Vec<u32>) -> Genome {
        [ModuleGenome::new(ModuleId::Backbone, genes)]
            .into_iter()
            .collect()
    }

    #[test]
    fn bottleneck_expands_to_triples() {
        let space = parse_space(BOTTLENECK).unwrap();
        let layers = instantiate_layers(&space, &bb(vec![1, 0])).unwrap();
        assert_eq!(layers.len(), 3);
        assert_eq!(layers[0].shape.kind, LayerKind::Pointwise);
        assert_eq!((layers[0].shape.c_in, layers[0].shape.c_out), (16, 64));
        assert_eq!(layers[1].shape.kind, LayerKind::Depthwise);
        assert_eq!((layers[1].shape.h_in, layers[1].shape.h_out), (8, 4));
        assert_eq!((layers[2].shape.c_in, layers[2].shape.c_out), (64, 24));

        let deeper = instantiate_layers(&space, &bb(vec![1, 1])).unwrap();
        assert_eq!(deeper.len(), 6);
        // Second block reads the first block's 24-channel output.
        assert_eq!((deeper[3].shape.c_in, deeper[3].shape.c_out), (24, 96));
    }

    #[test]
    fn minimal_depth_gives_mandatory_layers_only() {
        let space = parse_space(BOTTLENECK).unwrap();
        let shallow = estimate(&space, &bb(vec![0, 0]), 1).unwrap();
        assert_eq!(shallow.layer_count, 3);
    }

    #[test]
    fn weight_bytes_scale_with_precision() {
        let space = parse_space(BOTTLENECK).unwrap();
        let r1 = estimate(&space, &bb(vec![1, 1]), 1).unwrap();
        let r4 = estimate(&space, &bb(vec![1, 1]), 4).unwrap();
        assert_eq!(r1.params, r4.params);
        assert_eq!(r4.weight_bytes, 4 * r1.weight_bytes);
        assert_eq!(r1.per_module[&ModuleId::Backbone].params, r1.params);
    }

    #[test]
    fn invalid_genome_is_an_error() {
        let space = parse_space(BOTTLENECK).unwrap();
        assert!(matches!(
            estimate(&space, &bb(vec![2, 0]), 1),
            Err(CostError::Genome(_))
        ));
    }
}
