use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::state::write_atomic;
use super::{BestRecord, ControllerError, ConvergenceReport, HistoryRow, SearchState};
use crate::search_space::SpaceHash;

pub const RUN_DOCUMENT_VERSION: u32 = 1;

pub const CONFIG_FILE: &str = "config.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const BEST_FILE: &str = "best_genome.json";
pub const CONVERGENCE_FILE: &str = "convergence.json";

/// Renders history rows with the header
/// `cycle,phase_module,generation,best_fitness,mean_fitness,evaluations,feasible_rejections`.
pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record([
            "cycle",
            "phase_module",
            "generation",
            "best_fitness",
            "mean_fitness",
            "evaluations",
            "feasible_rejections",
        ])
        .expect("writing to memory");
    }
    for r in rows {
        w.serialize(r).expect("history rows always serialize");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is utf-8")
}

pub fn parse_history_csv(text: &str) -> Result<Vec<HistoryRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestGenomeDocument {
    pub version: u32,
    pub space_hash: SpaceHash,
    #[serde(flatten)]
    pub best: BestRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceDocument {
    pub version: u32,
    pub space_hash: SpaceHash,
    #[serde(flatten)]
    pub report: ConvergenceReport,
}

/// The files of one run: frozen config, history, latest checkpoint, best
/// genome and convergence report.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    /// Creates `root`, refusing an existing non-empty directory.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, ControllerError> {
        let root = root.into();
        if root.exists() {
            if !root.is_dir() {
                return Err(ControllerError::RunDir(format!(
                    "{} exists and is not a directory",
                    root.display()
                )));
            }
            if fs::read_dir(&root)?.next().is_some() {
                return Err(ControllerError::RunDir(format!(
                    "{} is not empty; refusing to overwrite a run",
                    root.display()
                )));
            }
        }
        fs::create_dir_all(&root)?;
        Ok(RunDir { root })
    }

    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ControllerError> {
        let root = root.into();
        if !root.join(CHECKPOINT_FILE).is_file() {
            return Err(ControllerError::RunDir(format!(
                "{} has no {CHECKPOINT_FILE}",
                root.display()
            )));
        }
        Ok(RunDir { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.root.join(file)
    }

    pub fn write_json<T: Serialize>(&self, file: &str, value: &T) -> Result<(), ControllerError> {
        let mut text = serde_json::to_string_pretty(value).expect("run documents always serialize");
        text.push('\n');
        write_atomic(&self.path(file), text.as_bytes())
    }

    pub fn read_json<T: DeserializeOwned>(&self, file: &str) -> Result<T, ControllerError> {
        let path = self.path(file);
        let text = fs::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| ControllerError::Document {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Writes the checkpoint and the history derived from it. Called at
    /// every generation boundary.
    pub fn checkpoint(&self, state: &SearchState) -> Result<(), ControllerError> {
        state.save(&self.path(CHECKPOINT_FILE))?;
        write_atomic(&self.path(HISTORY_FILE), history_csv(&state.history).as_bytes())
    }

    pub fn load_checkpoint(&self) -> Result<SearchState, ControllerError> {
        SearchState::load(&self.path(CHECKPOINT_FILE))
    }

    /// Writes `best_genome.json` and `convergence.json` for `state`.
    pub fn write_results(&self, state: &SearchState) -> Result<(), ControllerError> {
        let best = state.best.clone().ok_or(ControllerError::EmptyHistory)?;
        self.write_json(
            BEST_FILE,
            &BestGenomeDocument {
                version: RUN_DOCUMENT_VERSION,
                space_hash: state.space_hash,
                best,
            },
        )?;
        let report = state.convergence(super::ConvergenceMode::Relative, super::DEFAULT_TOLERANCE)?;
        self.write_json(
            CONVERGENCE_FILE,
            &ConvergenceDocument {
                version: RUN_DOCUMENT_VERSION,
                space_hash: state.space_hash,
                report,
            },
        )
    }
}
