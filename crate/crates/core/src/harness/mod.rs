//! Experiment grid: strategies × retentions × trials, metrics and reports.

mod grid;
mod metrics;
mod report;

use thiserror::Error;

pub use grid::{
    run_grid, run_trial, trial_seed, truncation_seed, CellStatus, CellSummary, EvalResult, GeneratorBackend,
    GeneratorTrialInfo, GridReport, GridSpec, Stage, StageLog, StageObserver, StrategyEntry, StrategyGap,
    StrategyKind, StrategyResources, TrialKey, TrialOutcome,
};
pub use metrics::{average_gap_to_best, f1, gap_points, mean_std, Confusion, Scores};
pub use report::{
    emit_report, read_report, ManifestExtra, CELLS_FILE, COMPARISON_FILE, GAPS_FILE, MANIFEST_FILE, REPORT_FILE,
    SUMMARY_FILE,
};

use crate::augment::AugmentError;
use crate::classify::ClassifyError;
use crate::corpus::CorpusError;
use crate::generator::GeneratorError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
    #[error("strategy {0} needs a generator transport but none is configured")]
    MissingGenerator(StrategyKind),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

impl HarnessError {
    /// Errors that would recur in every cell, so the grid stops.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            HarnessError::MissingGenerator(_) | HarnessError::Generator(GeneratorError::Transport(_))
        )
    }
}
