//! Evaluation harness: datasets, synthetic scenes, metrics and reports.

pub mod compose;
pub mod dataset;
pub mod metrics;
pub mod oracle;
pub mod report;
pub mod runner;
pub mod synth;

use thiserror::Error;

pub use compose::{Sprite, composite_scene};
pub use dataset::{Dataset, DatasetError, Manifest, TaskKind, load_dataset};
pub use metrics::{Confusion, MetricsReport, NoVerdictPolicy, RecognitionMatcher, SampleOutcome};
pub use oracle::{ground_truth_backend, ground_truth_backends};
pub use report::{ReportFormat, parse_report, render_report, render_table};
pub use runner::{EvalOptions, ObstructionMethod, evaluate_manipulation, evaluate_obstruction};

use crate::error::ImagingError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset has no samples")]
    EmptyDataset,
    #[error("expected a {expected} dataset, found {found}")]
    WrongKind { expected: TaskKind, found: TaskKind },
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}
