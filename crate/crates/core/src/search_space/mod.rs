//! Modular architecture search spaces, genome encoding and genetic operators.
//!
//! Genes are choice *indices* into each axis, never raw option values, so the
//! operators here are space-agnostic and lexicographic order on genomes is
//! well defined. Raw values only live in [`ChoiceAxis`].

mod document;
mod enumerate;
mod genome;
mod ops;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use document::{
    fnv1a64, parse_space, ChoiceAxis, DetectionSearchSpace, GeneBinding, InLink, InputSpec,
    ModuleDocument, ModuleSpace, Role, SpaceDocument, SpaceHash, StageKind, StageSpec,
    SPACE_DOCUMENT_VERSION,
};
pub use enumerate::{GenomeEnumerator, ModuleEnumerator, DEFAULT_ENUMERATION_CAP};
pub use genome::{Genome, ModuleGenome};
pub use ops::{crossover, mutate, mutate_counted, sample_genome, sample_random};

/// A module of the detector pipeline. The neck is folded into the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModuleId {
    Backbone,
    Head,
}

impl ModuleId {
    pub const ALL: [ModuleId; 2] = [ModuleId::Backbone, ModuleId::Head];

    pub fn as_str(self) -> &'static str {
        match self {
            ModuleId::Backbone => "backbone",
            ModuleId::Head => "head",
        }
    }

    /// Stable small integer used by the synthetic landscape hash.
    pub fn tag(self) -> u64 {
        match self {
            ModuleId::Backbone => 1,
            ModuleId::Head => 2,
        }
    }
}

impl fmt::Display for ModuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModuleId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "backbone" => Ok(ModuleId::Backbone),
            "head" => Ok(ModuleId::Head),
            other => Err(format!("unknown module {other:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("malformed space document at `{path}`: {message}")]
    Malformed { path: String, message: String },
    #[error("invalid space document at `{path}`: {message}")]
    Invalid { path: String, message: String },
    #[error("genome does not match the space: {0}")]
    GenomeMismatch(String),
    #[error("space cardinality {cardinality} exceeds the enumeration cap {cap}")]
    TooLarge { cardinality: String, cap: u128 },
}
