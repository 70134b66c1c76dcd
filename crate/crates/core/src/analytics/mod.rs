//! Classification and correlation metrics, and embedding analysis.

mod embedding;
mod metrics;

pub use embedding::{
    pca_project, profile_embedding, silhouette, silhouette_samples, Distance, EmbeddingSet, Projection, PCA_MAX_ITER,
};
pub use metrics::{
    accuracy, auprc, auroc, mcc, pearson_r, weighted_f1, weighted_f1_from_stats, ConfusionCounts, ConfusionMatrix,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("input is empty")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("input is constant")]
    ConstantInput,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("need both classes: {positives} positives, {negatives} negatives")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("sequence of {len} nt has no complete {k}-mer")]
    SequenceTooShort { len: usize, k: usize },
    #[error("k must be in 1..=8, got {0}")]
    BadK(usize),
    #[error("row {row} has dimension {got}, expected {expected}")]
    RaggedEmbedding { row: usize, expected: usize, got: usize },
    #[error("silhouette needs at least two clusters")]
    SingleCluster,
    #[error("line {line}: {reason}")]
    BadRow { line: usize, reason: String },
}
