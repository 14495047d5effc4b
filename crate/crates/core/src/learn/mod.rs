//! Learning primitives written from first principles: CART decision trees and
//! a bagged random forest, QR-based least squares, Pearson correlation,
//! stratified train/test splitting and confusion matrices.

mod confusion;
mod forest;
mod ols;
mod splits;
mod stats;
mod tree;

pub use confusion::ConfusionMatrix;
pub use forest::{fit_forest, ForestConfig, Prediction, RandomForest, FOREST_SCHEMA_VERSION};
pub use ols::{fit_ols, LinearModel, OlsFactor, Ridge};
pub use splits::{make_splits, stratified_splits, Split};
pub use stats::{mean, pearson, t_interval};
pub use tree::{Criterion, DecisionTree, Node, TreeParams};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnError {
    #[error("empty training input")]
    EmptyInput,
    #[error("feature matrix contains NaN at row {row}, column {col}")]
    NanFeature { row: usize, col: usize },
    #[error("non-finite value in regression input")]
    NonFinite,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("feature dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("undefined correlation: zero variance")]
    UndefinedCorrelation,
    #[error("design matrix is rank deficient (column {0})")]
    RankDeficient(usize),
    #[error("stratification cell {cell} has {size} items; train fraction leaves no test or no train items")]
    CellTooSmall { cell: String, size: usize },
    #[error("model document error: {0}")]
    Serialization(String),
}
