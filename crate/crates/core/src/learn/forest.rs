use super::tree::{Criterion, DecisionTree, TreeParams};
use super::LearnError;
use crate::matrix::Matrix;
use crate::par::{self, Execution};
use crate::seed;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const FOREST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Features per node; `None` means ⌈√d⌉.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub bootstrap: bool,
    pub criterion: Criterion,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 32,
            mtry: None,
            min_leaf: 1,
            bootstrap: true,
            criterion: Criterion::Gini,
            seed: 2024,
            execution: Execution::default(),
        }
    }
}

impl ForestConfig {
    pub fn resolved_mtry(&self, d: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d.max(1))
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        if self.n_trees == 0 {
            return Err(LearnError::InvalidConfig("n_trees must be at least 1".into()));
        }
        if self.max_depth == 0 {
            return Err(LearnError::InvalidConfig("max_depth must be at least 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(LearnError::InvalidConfig("min_leaf must be at least 1".into()));
        }
        if self.mtry == Some(0) {
            return Err(LearnError::InvalidConfig("mtry must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub schema_version: u32,
    pub config: ForestConfig,
    pub n_classes: usize,
    pub n_features: usize,
    pub trees: Vec<DecisionTree>,
}

/// Predicted labels plus the per-class share of tree votes for each row.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    /// `[row][class]`, rows sum to 1.
    pub vote_fractions: Matrix,
}

/// Trains a forest on `x` (rows = samples) and integer labels `y`. Classes are
/// `0..=max(y)`.
pub fn fit_forest(x: &Matrix, y: &[usize], cfg: &ForestConfig) -> Result<RandomForest, LearnError> {
    cfg.validate()?;
    if x.rows() == 0 || y.is_empty() {
        return Err(LearnError::EmptyInput);
    }
    if x.rows() != y.len() {
        return Err(LearnError::LengthMismatch(format!("{} rows vs {} labels", x.rows(), y.len())));
    }
    for r in 0..x.rows() {
        if let Some(c) = x.row(r).iter().position(|v| v.is_nan()) {
            return Err(LearnError::NanFeature { row: r, col: c });
        }
    }
    let n_classes = y.iter().max().unwrap() + 1;
    let d = x.cols();
    let params = TreeParams {
        max_depth: cfg.max_depth,
        min_leaf: cfg.min_leaf,
        mtry: Some(cfg.resolved_mtry(d)),
        criterion: cfg.criterion,
    };
    let n = x.rows();

    let trees: Result<Vec<DecisionTree>, LearnError> =
        par::map_range(cfg.execution, cfg.n_trees, |t| {
            let mut rng = seed::rng(seed::derive(cfg.seed, t as u64));
            let rows: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            DecisionTree::fit(x, y, n_classes, rows, params, &mut rng)
        })
        .into_iter()
        .collect();

    Ok(RandomForest {
        schema_version: FOREST_SCHEMA_VERSION,
        config: cfg.clone(),
        n_classes,
        n_features: d,
        trees: trees?,
    })
}

impl RandomForest {
    fn check_dim(&self, x: &Matrix) -> Result<(), LearnError> {
        if x.cols() != self.n_features {
            return Err(LearnError::DimensionMismatch {
                expected: self.n_features,
                got: x.cols(),
            });
        }
        Ok(())
    }

    fn votes(&self, row: &[f64]) -> Vec<u32> {
        let mut v = vec![0u32; self.n_classes];
        for t in &self.trees {
            v[t.predict_one(row)] += 1;
        }
        v
    }

    /// Majority vote; ties go to the lower class index.
    pub fn predict(&self, x: &Matrix) -> Result<Prediction, LearnError> {
        self.check_dim(x)?;
        let n_trees = self.trees.len() as f64;
        let mut labels = Vec::with_capacity(x.rows());
        let mut fractions = Matrix::zeros(x.rows(), self.n_classes);
        for r in 0..x.rows() {
            let v = self.votes(x.row(r));
            let mut best = 0;
            for (k, &c) in v.iter().enumerate() {
                if c > v[best] {
                    best = k;
                }
                fractions.set(r, k, c as f64 / n_trees);
            }
            labels.push(best);
        }
        Ok(Prediction {
            labels,
            vote_fractions: fractions,
        })
    }

    pub fn predict_labels(&self, x: &Matrix) -> Result<Vec<usize>, LearnError> {
        Ok(self.predict(x)?.labels)
    }

    /// Split-variable usage summed over trees.
    pub fn split_counts(&self) -> Vec<usize> {
        let mut total = vec![0; self.n_features];
        for t in &self.trees {
            for (a, b) in total.iter_mut().zip(t.split_counts()) {
                *a += b;
            }
        }
        total
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("forest serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, LearnError> {
        let f: RandomForest =
            serde_json::from_str(s).map_err(|e| LearnError::Serialization(e.to_string()))?;
        if f.schema_version != FOREST_SCHEMA_VERSION {
            return Err(LearnError::Serialization(format!(
                "unsupported schema_version {}",
                f.schema_version
            )));
        }
        Ok(f)
    }
}
