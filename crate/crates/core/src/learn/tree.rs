use super::LearnError;
use crate::matrix::Matrix;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Gini,
    Entropy,
}

impl Criterion {
    /// Impurity of a node with the given class counts, scaled by its size
    /// (so children can be summed directly).
    fn weighted_impurity(self, counts: &[u32], n: u32) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let nf = n as f64;
        match self {
            Criterion::Gini => {
                let sq: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
                nf - sq / nf
            }
            Criterion::Entropy => counts
                .iter()
                .filter(|&&c| c > 0)
                .map(|&c| {
                    let c = c as f64;
                    -c * (c / nf).ln()
                })
                .sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features examined per node; `None` or a value ≥ d means all of them.
    pub mtry: Option<usize>,
    pub criterion: Criterion,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 32,
            min_leaf: 1,
            mtry: None,
            criterion: Criterion::Gini,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        class: usize,
        counts: Vec<u32>,
    },
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left.
        #[serde(with = "decimal")]
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Thresholds travel as decimal strings so the JSON document round-trips
/// every bit of the value.
mod decimal {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:?}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_features: usize,
    n_classes: usize,
    depth: usize,
}

struct Builder<'a, R> {
    x: &'a Matrix,
    y: &'a [usize],
    n_classes: usize,
    params: TreeParams,
    mtry: usize,
    rng: &'a mut R,
    nodes: Vec<Node>,
    depth: usize,
}

fn majority(counts: &[u32]) -> usize {
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = k;
        }
    }
    best
}

impl<R: Rng> Builder<'_, R> {
    fn counts(&self, rows: &[usize]) -> Vec<u32> {
        let mut counts = vec![0u32; self.n_classes];
        for &r in rows {
            counts[self.y[r]] += 1;
        }
        counts
    }

    fn features_for_node(&mut self) -> Vec<usize> {
        let d = self.x.cols();
        if self.mtry >= d {
            return (0..d).collect();
        }
        let mut f = sample(self.rng, d, self.mtry).into_vec();
        f.sort_unstable();
        f
    }

    /// Best split over the sampled features: lowest summed child impurity,
    /// ties resolved towards the lower feature index, then lower threshold.
    fn best_split(&mut self, rows: &[usize]) -> Option<(usize, f64)> {
        let features = self.features_for_node();
        let min_leaf = self.params.min_leaf.max(1);
        let n = rows.len();
        let total = self.counts(rows);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
        let mut left = vec![0u32; self.n_classes];

        for f in features {
            order.clear();
            order.extend(rows.iter().map(|&r| (self.x.get(r, f), self.y[r])));
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            if order[0].0 == order[n - 1].0 {
                continue;
            }
            left.iter_mut().for_each(|c| *c = 0);
            let mut right = total.clone();
            for i in 0..n - 1 {
                let (v, label) = order[i];
                left[label] += 1;
                right[label] -= 1;
                let next = order[i + 1].0;
                if v == next {
                    continue;
                }
                let n_left = i + 1;
                if n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let score = self.params.criterion.weighted_impurity(&left, n_left as u32)
                    + self.params.criterion.weighted_impurity(&right, (n - n_left) as u32);
                if best.is_none_or(|(s, _, _)| score < s) {
                    let mut thr = v + (next - v) / 2.0;
                    if thr >= next {
                        thr = v;
                    }
                    best = Some((score, f, thr));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        self.depth = self.depth.max(depth);
        let counts = self.counts(&rows);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let splittable = !pure
            && depth < self.params.max_depth
            && rows.len() >= 2 * self.params.min_leaf.max(1);

        let split = if splittable { self.best_split(&rows) } else { None };
        let id = self.nodes.len();
        match split {
            None => {
                self.nodes.push(Node::Leaf {
                    class: majority(&counts),
                    counts,
                });
            }
            Some((feature, threshold)) => {
                self.nodes.push(Node::Leaf {
                    class: 0,
                    counts: Vec::new(),
                });
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.into_iter().partition(|&row| self.x.get(row, feature) <= threshold);
                let left = self.build(l, depth + 1);
                let right = self.build(r, depth + 1);
                self.nodes[id] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
            }
        }
        id
    }
}

impl DecisionTree {
    /// Grows a tree on the listed rows of `x` (duplicates allowed, as in a
    /// bootstrap sample). Labels must be `< n_classes`.
    pub fn fit<R: Rng>(
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        rows: Vec<usize>,
        params: TreeParams,
        rng: &mut R,
    ) -> Result<Self, LearnError> {
        if rows.is_empty() || x.rows() == 0 {
            return Err(LearnError::EmptyInput);
        }
        if x.rows() != y.len() {
            return Err(LearnError::LengthMismatch(format!("{} rows vs {} labels", x.rows(), y.len())));
        }
        if params.max_depth == 0 {
            return Err(LearnError::InvalidConfig("max_depth must be at least 1".into()));
        }
        if let Some(&bad) = y.iter().find(|&&l| l >= n_classes) {
            return Err(LearnError::InvalidConfig(format!("label {bad} >= n_classes {n_classes}")));
        }
        let mtry = params.mtry.unwrap_or(x.cols()).max(1);
        let mut b = Builder {
            x,
            y,
            n_classes,
            params,
            mtry,
            rng,
            nodes: Vec::new(),
            depth: 0,
        };
        b.build(rows, 0);
        Ok(DecisionTree {
            nodes: b.nodes,
            n_features: x.cols(),
            n_classes,
            depth: b.depth,
        })
    }

    pub fn predict_one(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { class, .. } => return *class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Smallest number of training rows held by any leaf.
    pub fn min_leaf_size(&self) -> u32 {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { counts, .. } => Some(counts.iter().sum()),
                Node::Split { .. } => None,
            })
            .min()
            .unwrap_or(0)
    }

    /// How often each feature is used as a split variable.
    pub fn split_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_features];
        for n in &self.nodes {
            if let Node::Split { feature, .. } = n {
                c[*feature] += 1;
            }
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn fit_all(x: &Matrix, y: &[usize], params: TreeParams) -> DecisionTree {
        let n_classes = y.iter().max().unwrap() + 1;
        DecisionTree::fit(x, y, n_classes, (0..x.rows()).collect(), params, &mut seed::rng(0)).unwrap()
    }

    #[test]
    fn xor_needs_two_levels() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]);
        let y = [0, 1, 1, 0];
        let t = fit_all(&x, &y, TreeParams { max_depth: 2, ..Default::default() });
        for r in 0..4 {
            assert_eq!(t.predict_one(x.row(r)), y[r]);
        }
        // Root gain is zero on both features; the lower index wins.
        match &t.nodes()[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 0.5);
            }
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(t.depth(), 2);

        let stump = fit_all(&x, &y, TreeParams { max_depth: 1, ..Default::default() });
        let correct = (0..4).filter(|&r| stump.predict_one(x.row(r)) == y[r]).count();
        assert_eq!(correct, 2);
    }

    #[test]
    fn stump_on_separable_line() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [10.0], [11.0]]);
        let y = [0, 0, 0, 1, 1];
        let t = fit_all(&x, &y, TreeParams::default());
        assert_eq!(t.nodes().len(), 3);
        match &t.nodes()[0] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 6.5),
            _ => panic!(),
        }
        assert_eq!(t.predict_one(&[6.5]), 0);
        assert_eq!(t.predict_one(&[6.6]), 1);
    }

    #[test]
    fn min_leaf_respected() {
        let x = Matrix::from_rows(&(0..20).map(|i| [i as f64]).collect::<Vec<_>>());
        let y: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let t = fit_all(&x, &y, TreeParams { min_leaf: 3, ..Default::default() });
        assert!(t.min_leaf_size() >= 3);
    }

    #[test]
    fn constant_features_give_leaf() {
        let x = Matrix::from_rows(&[[1.0], [1.0], [1.0]]);
        let t = fit_all(&x, &[0, 1, 1], TreeParams::default());
        assert_eq!(t.nodes().len(), 1);
        assert_eq!(t.predict_one(&[0.0]), 1);
    }

    #[test]
    fn majority_tie_prefers_lower_class() {
        assert_eq!(majority(&[2, 2, 1]), 0);
        assert_eq!(majority(&[0, 3, 3]), 1);
    }

    #[test]
    fn entropy_criterion_also_separates() {
        let x = Matrix::from_rows(&[[0.0, 5.0], [1.0, 5.0], [2.0, 6.0], [3.0, 6.0]]);
        let y = [0, 0, 1, 1];
        let t = fit_all(&x, &y, TreeParams { criterion: Criterion::Entropy, ..Default::default() });
        for r in 0..4 {
            assert_eq!(t.predict_one(x.row(r)), y[r]);
        }
    }

    #[test]
    fn threshold_between_adjacent_floats() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let x = Matrix::from_rows(&[[a], [b]]);
        let t = fit_all(&x, &[0, 1], TreeParams::default());
        assert_eq!(t.predict_one(&[a]), 0);
        assert_eq!(t.predict_one(&[b]), 1);
    }
}
