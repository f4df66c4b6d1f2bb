//! Detection metrics and protocols.

mod ap;
mod recall;
mod remap;

pub use ap::{ap50, average_precision, iou, ApReport, GroundTruthBox};
pub use recall::{recall_task, EpisodeTally, RecallReport, RecallTaskConfig};
pub use remap::{remap_classes, remap_truth, Remap, RemappedTable};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("malformed detection stream: {0}")]
    MalformedStream(String),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
}
