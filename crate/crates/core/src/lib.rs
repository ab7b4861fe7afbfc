//! Alternating per-module evolutionary architecture search under hardware
//! resource budgets.
//!
//! The engine searches one module of a detector (backbone or head) at a time
//! with the other module fixed, carries a ranked elite buffer per module
//! across alternation cycles, filters every candidate through an analytical
//! microcontroller cost model, and scores full genomes through a pluggable
//! [`evaluator::Evaluator`].

pub mod analysis;
pub mod controller;
pub mod cost;
pub mod evaluator;
pub mod evolution;
pub mod passthrough;
pub mod rng;
pub mod search_space;
