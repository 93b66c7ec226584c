//! Authority-aware document ranking and naive-Bayes differential diagnosis.

mod bayes;
mod ranking;

use thiserror::Error;

pub use bayes::{
    diagnosis_posterior, diagnosis_posterior_exact, update_posterior, update_posterior_exact, EvidenceTable,
    Posterior, PosteriorOptions, LIKELIHOOD_FLOOR, NORMALIZATION_TOLERANCE,
};
pub use ranking::{
    authority_score, blend_score, embed_missing, order_by_score, rank_documents, read_documents, relevance,
    score_document, Document, GuidelineStatus, RankedDocument, RankerConfig,
};

#[derive(Debug, Error)]
pub enum MedToolsError {
    #[error("document `{0}` has no embedding")]
    MissingEmbedding(String),
    #[error("embedding arity {found} does not match query arity {expected}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("invalid ranker configuration: {0}")]
    Config(String),
    #[error("invalid document `{id}`: {reason}")]
    Document { id: String, reason: String },
    #[error("invalid evidence table: {0}")]
    Table(String),
    #[error("no likelihood for symptom `{symptom}` under diagnosis `{diagnosis}`")]
    MissingLikelihood { symptom: String, diagnosis: String },
    #[error("every diagnosis has zero joint probability for the observed symptoms")]
    DegenerateEvidence,
    #[error("current posterior is not a distribution over the table's diagnoses: {0}")]
    Posterior(String),
    #[error("{0}")]
    Argument(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Client(#[from] crate::clients::ClientError),
}
