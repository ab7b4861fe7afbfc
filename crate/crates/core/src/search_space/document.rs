//! Space documents: parsing, validation and canonical serialization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ModuleId, SpaceError};

pub const SPACE_DOCUMENT_VERSION: u32 = 1;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Content digest of a canonical space document, rendered as 16 hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpaceHash(pub u64);

impl fmt::Display for SpaceHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for SpaceHash {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 16 {
            return Err(format!("space hash must be 16 hex digits, got {s:?}"));
        }
        u64::from_str_radix(s, 16)
            .map(SpaceHash)
            .map_err(|e| format!("bad space hash {s:?}: {e}"))
    }
}

impl Serialize for SpaceHash {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SpaceHash {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One searchable gene position: an ordered list of integer option values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChoiceAxis {
    pub name: String,
    pub choices: Vec<u32>,
}

impl ChoiceAxis {
    pub fn new(name: impl Into<String>, choices: Vec<u32>) -> Self {
        ChoiceAxis {
            name: name.into(),
            choices,
        }
    }

    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    /// `depth` standard convolutions.
    Conv,
    /// `depth` blocks of pointwise-expand, depthwise, pointwise-project.
    InvertedBottleneck,
}

/// What an axis controls within its stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Width,
    Kernel,
    Depth,
    Expand,
}

impl Role {
    fn parse(s: &str) -> Option<Role> {
        match s {
            "width" => Some(Role::Width),
            "kernel" => Some(Role::Kernel),
            "depth" => Some(Role::Depth),
            "expand" => Some(Role::Expand),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Width => "width",
            Role::Kernel => "kernel",
            Role::Depth => "depth",
            Role::Expand => "expand",
        })
    }
}

/// Where a stage takes its input from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InLink {
    /// The network input described by the document's `input` entry.
    Input,
    /// Output of another stage, possibly in an earlier module.
    Stage { module: ModuleId, stage: u32 },
}

impl fmt::Display for InLink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InLink::Input => f.write_str("input"),
            InLink::Stage { module, stage } => write!(f, "{module}:{stage}"),
        }
    }
}

impl FromStr for InLink {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "input" {
            return Ok(InLink::Input);
        }
        let (module, stage) = s
            .split_once(':')
            .ok_or_else(|| format!("expected \"input\" or \"<module>:<stage>\", got {s:?}"))?;
        let module = module.parse::<ModuleId>()?;
        let stage = stage
            .parse::<u32>()
            .map_err(|_| format!("bad stage index in link {s:?}"))?;
        Ok(InLink::Stage { module, stage })
    }
}

impl Serialize for InLink {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for InLink {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn default_true() -> bool {
    true
}

/// Fixed structure of one stage. Roles without an axis take the fixed value
/// given here.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub stage: u32,
    /// Output feature-map size `[h, w]`.
    pub hw: [u32; 2],
    pub kind: StageKind,
    pub in_link: InLink,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expand: Option<u32>,
    #[serde(default = "default_true")]
    pub bias: bool,
}

impl StageSpec {
    fn fixed(&self, role: Role) -> Option<u32> {
        match role {
            Role::Width => self.width,
            Role::Kernel => self.kernel,
            Role::Depth => self.depth,
            Role::Expand => self.expand,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub channels: u32,
    pub hw: [u32; 2],
}

/// On-disk form of one module.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleDocument {
    pub axes: Vec<ChoiceAxis>,
    pub skeleton: Vec<StageSpec>,
}

/// On-disk form of a whole space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceDocument {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<InputSpec>,
    pub modules: BTreeMap<ModuleId, ModuleDocument>,
}

/// Binding of a gene position to the stage parameter it controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneBinding {
    pub stage: u32,
    pub role: Role,
}

/// Searchable axes and fixed skeleton of a single module.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleSpace {
    module: ModuleId,
    axes: Vec<ChoiceAxis>,
    skeleton: Vec<StageSpec>,
    bindings: Vec<GeneBinding>,
}

impl ModuleSpace {
    pub fn module(&self) -> ModuleId {
        self.module
    }

    pub fn axes(&self) -> &[ChoiceAxis] {
        &self.axes
    }

    pub fn skeleton(&self) -> &[StageSpec] {
        &self.skeleton
    }

    pub fn bindings(&self) -> &[GeneBinding] {
        &self.bindings
    }

    pub fn gene_count(&self) -> usize {
        self.axes.len()
    }

    /// Number of distinct genomes, or `None` if it does not fit in `u128`.
    pub fn cardinality(&self) -> Option<u128> {
        self.axes
            .iter()
            .try_fold(1u128, |acc, a| acc.checked_mul(a.len() as u128))
    }

    pub fn stage(&self, stage: u32) -> Option<&StageSpec> {
        self.skeleton.iter().find(|s| s.stage == stage)
    }

    /// Value of `role` in `stage` under the given gene indices: the axis
    /// choice when the role is searched, otherwise the fixed skeleton value.
    pub fn stage_value(&self, genes: &[u32], stage: u32, role: Role) -> Option<u32> {
        if let Some(pos) = self
            .bindings
            .iter()
            .position(|b| b.stage == stage && b.role == role)
        {
            let idx = *genes.get(pos)? as usize;
            return self.axes[pos].choices.get(idx).copied();
        }
        let spec = self.stage(stage)?;
        match role {
            Role::Depth => Some(spec.depth.unwrap_or(1)),
            _ => spec.fixed(role),
        }
    }

    /// Largest value `role` can take in `stage`.
    pub fn stage_max(&self, stage: u32, role: Role) -> Option<u32> {
        if let Some(pos) = self
            .bindings
            .iter()
            .position(|b| b.stage == stage && b.role == role)
        {
            return self.axes[pos].choices.iter().copied().max();
        }
        let spec = self.stage(stage)?;
        match role {
            Role::Depth => Some(spec.depth.unwrap_or(1)),
            _ => spec.fixed(role),
        }
    }

    fn to_document(&self) -> ModuleDocument {
        ModuleDocument {
            axes: self.axes.clone(),
            skeleton: self.skeleton.clone(),
        }
    }
}

/// A validated multi-module search space with its content hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionSearchSpace {
    version: u32,
    input: Option<InputSpec>,
    modules: BTreeMap<ModuleId, ModuleSpace>,
    space_hash: SpaceHash,
}

impl DetectionSearchSpace {
    pub fn from_document(doc: SpaceDocument) -> Result<Self, SpaceError> {
        validate_document(&doc)?;
        let canonical = canonical_json(&doc);
        let space_hash = SpaceHash(fnv1a64(canonical.as_bytes()));
        let mut modules = BTreeMap::new();
        for (&module, mdoc) in &doc.modules {
            let bindings = mdoc
                .axes
                .iter()
                .map(|a| parse_axis_name(&a.name).expect("validated"))
                .collect();
            modules.insert(
                module,
                ModuleSpace {
                    module,
                    axes: mdoc.axes.clone(),
                    skeleton: mdoc.skeleton.clone(),
                    bindings,
                },
            );
        }
        Ok(DetectionSearchSpace {
            version: doc.version,
            input: doc.input,
            modules,
            space_hash,
        })
    }

    pub fn to_document(&self) -> SpaceDocument {
        SpaceDocument {
            version: self.version,
            input: self.input,
            modules: self
                .modules
                .iter()
                .map(|(&m, s)| (m, s.to_document()))
                .collect(),
        }
    }

    /// Sorted keys, no insignificant whitespace.
    pub fn to_canonical_json(&self) -> String {
        canonical_json(&self.to_document())
    }

    pub fn space_hash(&self) -> SpaceHash {
        self.space_hash
    }

    pub fn input(&self) -> Option<&InputSpec> {
        self.input.as_ref()
    }

    pub fn module_ids(&self) -> impl Iterator<Item = ModuleId> + '_ {
        self.modules.keys().copied()
    }

    pub fn modules(&self) -> impl Iterator<Item = &ModuleSpace> {
        self.modules.values()
    }

    pub fn module(&self, id: ModuleId) -> Option<&ModuleSpace> {
        self.modules.get(&id)
    }

    pub fn module_count(&self) -> usize {
        self.modules.len()
    }

    /// Joint cardinality (product over modules), `None` on overflow.
    pub fn cardinality(&self) -> Option<u128> {
        self.modules
            .values()
            .try_fold(1u128, |acc, m| acc.checked_mul(m.cardinality()?))
    }
}

/// Parse-side mirror of [`SpaceDocument`] with string module keys, so that
/// error paths can name the module.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    version: u32,
    #[serde(default)]
    input: Option<InputSpec>,
    modules: BTreeMap<String, ModuleDocument>,
}

/// Parses and validates a space document.
pub fn parse_space(text: &str) -> Result<DetectionSearchSpace, SpaceError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawDocument =
        serde_path_to_error::deserialize(de).map_err(|e| SpaceError::Malformed {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    let mut modules = BTreeMap::new();
    for (key, mdoc) in raw.modules {
        let id = key.parse::<ModuleId>().map_err(|message| SpaceError::Malformed {
            path: format!("modules.{key}"),
            message,
        })?;
        modules.insert(id, mdoc);
    }
    DetectionSearchSpace::from_document(SpaceDocument {
        version: raw.version,
        input: raw.input,
        modules,
    })
}

fn canonical_json(doc: &SpaceDocument) -> String {
    // serde_json::Value keeps object keys in a BTreeMap, so this sorts keys.
    let value = serde_json::to_value(doc).expect("space documents always serialize");
    serde_json::to_string(&value).expect("values always serialize")
}

fn parse_axis_name(name: &str) -> Option<GeneBinding> {
    let (stage, role) = name.strip_prefix('s')?.split_once('.')?;
    Some(GeneBinding {
        stage: stage.parse().ok()?,
        role: Role::parse(role)?,
    })
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> SpaceError {
    SpaceError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

fn validate_document(doc: &SpaceDocument) -> Result<(), SpaceError> {
    if doc.version != SPACE_DOCUMENT_VERSION {
        return Err(invalid(
            "version",
            format!(
                "unsupported version {} (expected {SPACE_DOCUMENT_VERSION})",
                doc.version
            ),
        ));
    }
    if doc.modules.is_empty() {
        return Err(invalid("modules", "at least one module is required"));
    }
    if let Some(input) = &doc.input {
        if input.channels == 0 {
            return Err(invalid("input.channels", "must be positive"));
        }
        if input.hw.contains(&0) {
            return Err(invalid("input.hw", "must be positive"));
        }
    }
    for (&module, mdoc) in &doc.modules {
        validate_module(doc, module, mdoc)?;
    }
    Ok(())
}

fn validate_module(
    doc: &SpaceDocument,
    module: ModuleId,
    mdoc: &ModuleDocument,
) -> Result<(), SpaceError> {
    let base = format!("modules.{module}");

    let mut last_stage = None;
    for (i, st) in mdoc.skeleton.iter().enumerate() {
        let path = format!("{base}.skeleton[{i}]");
        if last_stage.is_some_and(|prev| st.stage <= prev) {
            return Err(invalid(
                format!("{path}.stage"),
                "stage indices must be unique and increasing",
            ));
        }
        last_stage = Some(st.stage);
        if st.hw.contains(&0) {
            return Err(invalid(format!("{path}.hw"), "must be positive"));
        }
        for (role, v) in [
            (Role::Width, st.width),
            (Role::Kernel, st.kernel),
            (Role::Depth, st.depth),
            (Role::Expand, st.expand),
        ] {
            if v == Some(0) {
                return Err(invalid(format!("{path}.{role}"), "must be positive"));
            }
        }
        if st.kind == StageKind::Conv && st.expand.is_some() {
            return Err(invalid(
                format!("{path}.expand"),
                "expand only applies to inverted_bottleneck stages",
            ));
        }
        match st.in_link {
            InLink::Input => {
                if doc.input.is_none() {
                    return Err(invalid(
                        format!("{path}.in_link"),
                        "links to \"input\" but the document has no input entry",
                    ));
                }
            }
            InLink::Stage {
                module: src_module,
                stage: src_stage,
            } => {
                let earlier = src_module < module || (src_module == module && src_stage < st.stage);
                if !earlier {
                    return Err(invalid(
                        format!("{path}.in_link"),
                        format!("link {} must point to an earlier stage", st.in_link),
                    ));
                }
                let exists = doc
                    .modules
                    .get(&src_module)
                    .is_some_and(|m| m.skeleton.iter().any(|s| s.stage == src_stage));
                if !exists {
                    return Err(invalid(
                        format!("{path}.in_link"),
                        format!("missing skeleton entry for linked stage {}", st.in_link),
                    ));
                }
            }
        }
    }

    let mut bound = BTreeSet::new();
    for (i, axis) in mdoc.axes.iter().enumerate() {
        let path = format!("{base}.axes[{i}]");
        let binding = parse_axis_name(&axis.name).ok_or_else(|| {
            invalid(
                format!("{path}.name"),
                format!(
                    "axis name {:?} must be s<stage>.<width|kernel|depth|expand>",
                    axis.name
                ),
            )
        })?;
        if axis.choices.is_empty() {
            return Err(invalid(format!("{path}.choices"), "empty axis"));
        }
        let mut seen = BTreeSet::new();
        for (j, &c) in axis.choices.iter().enumerate() {
            if c == 0 {
                return Err(invalid(
                    format!("{path}.choices[{j}]"),
                    "choice values must be positive",
                ));
            }
            if !seen.insert(c) {
                return Err(invalid(
                    format!("{path}.choices[{j}]"),
                    format!("duplicate choice value {c}"),
                ));
            }
        }
        let stage = mdoc
            .skeleton
            .iter()
            .find(|s| s.stage == binding.stage)
            .ok_or_else(|| {
                invalid(
                    format!("{path}.name"),
                    format!("missing skeleton entry for stage {}", binding.stage),
                )
            })?;
        if !bound.insert((binding.stage, binding.role)) {
            return Err(invalid(
                format!("{path}.name"),
                format!("stage {} already has a {} axis", binding.stage, binding.role),
            ));
        }
        if stage.fixed(binding.role).is_some() {
            return Err(invalid(
                format!("{path}.name"),
                format!(
                    "stage {} fixes {} in the skeleton and also searches it",
                    binding.stage, binding.role
                ),
            ));
        }
        if binding.role == Role::Expand && stage.kind == StageKind::Conv {
            return Err(invalid(
                format!("{path}.name"),
                "expand only applies to inverted_bottleneck stages",
            ));
        }
    }

    for (i, st) in mdoc.skeleton.iter().enumerate() {
        let mut required = vec![Role::Width, Role::Kernel];
        if st.kind == StageKind::InvertedBottleneck {
            required.push(Role::Expand);
        }
        for role in required {
            if st.fixed(role).is_none() && !bound.contains(&(st.stage, role)) {
                return Err(invalid(
                    format!("{base}.skeleton[{i}].{role}"),
                    format!("stage {} has neither a fixed {role} nor an axis", st.stage),
                ));
            }
        }
    }
    Ok(())
}
