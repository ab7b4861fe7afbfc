use serde::{Deserialize, Serialize};

use super::ControllerError;

/// How "within 1% of the final value" is read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceMode {
    /// `best >= (1 - tolerance) * final`.
    #[default]
    Relative,
    /// `best >= final - tolerance`.
    Absolute,
}

pub const DEFAULT_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// First generation whose best fitness clears the threshold.
    pub converged_generation: usize,
    pub final_best: f64,
    pub threshold: f64,
    pub mode: ConvergenceMode,
    pub generations: usize,
}

/// Finds the first generation within `tolerance` of the last value.
pub fn detect_convergence(
    best_per_generation: &[f64],
    mode: ConvergenceMode,
    tolerance: f64,
) -> Result<ConvergenceReport, ControllerError> {
    let &final_best = best_per_generation
        .last()
        .ok_or(ControllerError::EmptyHistory)?;
    let threshold = match mode {
        ConvergenceMode::Relative => (1.0 - tolerance) * final_best,
        ConvergenceMode::Absolute => final_best - tolerance,
    };
    let converged_generation = best_per_generation
        .iter()
        .position(|&b| b >= threshold)
        .expect("the final value always clears its own threshold");
    Ok(ConvergenceReport {
        converged_generation,
        final_best,
        threshold,
        mode,
        generations: best_per_generation.len(),
    })
}
