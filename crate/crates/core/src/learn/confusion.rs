use serde::{Deserialize, Serialize};

/// Square count matrix: rows are ground truth, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn from_pairs(labels: Vec<String>, truth: &[usize], predicted: &[usize]) -> Self {
        let mut m = ConfusionMatrix::new(labels);
        for (&t, &p) in truth.iter().zip(predicted) {
            m.record(t, p);
        }
        m
    }

    /// Element-wise sum. Panics if the label sets differ.
    pub fn add(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        assert_eq!(self.labels, other.labels, "confusion label mismatch");
        let counts = self
            .counts
            .iter()
            .zip(&other.counts)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        ConfusionMatrix {
            labels: self.labels.clone(),
            counts,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.size()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// CSV with a header row of predicted labels and one row per true label.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("truth\\predicted");
        for l in &self.labels {
            s.push(',');
            s.push_str(l);
        }
        s.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            s.push_str(l);
            for c in row {
                s.push_str(&format!(",{c}"));
            }
            s.push('\n');
        }
        s
    }

    /// Fixed-width text table.
    pub fn to_table(&self) -> String {
        let w = self.labels.iter().map(|l| l.len()).max().unwrap_or(1).max(4);
        let mut s = format!("{:>w$}", "");
        for l in &self.labels {
            s.push_str(&format!(" {l:>w$}"));
        }
        s.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            s.push_str(&format!("{l:>w$}"));
            for c in row {
                s.push_str(&format!(" {c:>w$}"));
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels() -> Vec<String> {
        vec!["a".into(), "b".into(), "c".into()]
    }

    #[test]
    fn counting_and_sum() {
        let m = ConfusionMatrix::from_pairs(labels(), &[0, 1, 2, 2], &[0, 2, 2, 1]);
        assert_eq!(m.total(), 4);
        assert_eq!(m.trace(), 2);
        assert_eq!(m.accuracy(), 0.5);
        let s = m.add(&m);
        assert_eq!(s.total(), 8);
        assert_eq!(s.counts[2][1], 2);
        assert_eq!(s.row_sums(), vec![2, 2, 4]);
    }

    #[test]
    fn csv_layout() {
        let m = ConfusionMatrix::from_pairs(labels(), &[0], &[1]);
        assert_eq!(m.to_csv(), "truth\\predicted,a,b,c\na,0,1,0\nb,0,0,0\nc,0,0,0\n");
        assert!(m.to_table().lines().count() == 4);
    }
}
