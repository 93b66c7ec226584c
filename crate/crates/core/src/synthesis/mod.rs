//! From subgraphs to calibrated multi-hop questions and training mixes.

mod calibrate;
mod mask;
mod mix;
mod paths;
mod question;

use thiserror::Error;

use crate::clients::ClientError;

pub use calibrate::{
    calibrate_difficulty, panel_accuracy, CalibrationOutcome, PathExtendingRegenerator, Regenerator,
    PASS_THRESHOLD,
};
pub use mask::{mask_path, MaskedScaffold, MaskedStep, MASK_TOKEN};
pub use mix::{mix_dataset, MixConfig};
pub use paths::{
    enumerate_paths, longest_valid_path, AcceptAll, DefaultValidity, DistinctPredicates, PathValidity,
    ReasoningPath, RejectContext, DEFAULT_NODE_CAP, REFUTED_MARKER,
};
pub use question::{path_to_question, question_prompt, QAItem, QaStatus, QuestionConfig, TemplateQuestionWriter};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("subgraph has no relations")]
    NoRelations,
    #[error("subgraph has {nodes} nodes, above the exhaustive-search cap of {cap}")]
    NodeCapExceeded { nodes: usize, cap: usize },
    #[error("no path satisfies the validity predicate")]
    NoValidPath,
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("{0}")]
    Argument(String),
    #[error("question generation failed: {0}")]
    Generation(#[source] ClientError),
    #[error("question still contains its answer after {attempts} attempts")]
    Leakage { attempts: u32 },
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("item is already {0:?}")]
    AlreadyFinal(QaStatus),
    #[error("{pool} pool has {available} records, {needed} needed")]
    Supply {
        pool: &'static str,
        needed: usize,
        available: usize,
    },
}
