use super::LearnError;
use crate::matrix::Matrix;
use crate::par::{self, Execution};
use serde::{Deserialize, Serialize};

/// Ridge penalty on the weights (never on the intercept).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ridge {
    /// 1e-6 × the mean diagonal of XᵀX: numerical stabilization only.
    #[default]
    Auto,
    Fixed(f64),
}

impl Ridge {
    pub fn resolve(self, x: &Matrix) -> f64 {
        match self {
            Ridge::Fixed(v) => v,
            Ridge::Auto => {
                let (n, d) = x.shape();
                if n == 0 || d == 0 {
                    return 0.0;
                }
                let diag: f64 = x.as_slice().iter().map(|v| v * v).sum();
                let mean = diag / d as f64;
                if mean > 0.0 {
                    1e-6 * mean
                } else {
                    1e-6
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|r| self.predict_row(x.row(r))).collect()
    }
}

/// Householder QR factorization of the (ridge-augmented) design `[1 | X]`,
/// reusable across many targets.
///
/// With penalty λ the design gets d extra rows `√λ·e_j` (zero in the
/// intercept column), so the least-squares solution of the augmented system
/// is the ridge estimate with an unpenalized intercept.
#[derive(Debug, Clone)]
pub struct OlsFactor {
    n_rows: usize,
    n_aug: usize,
    p: usize,
    /// Householder vectors, column k holds v_k on rows k.. (column-major).
    v: Vec<Vec<f64>>,
    beta: Vec<f64>,
    /// Upper-triangular R, row-major p×p.
    r: Vec<f64>,
    pub ridge: f64,
    execution: Execution,
}

impl OlsFactor {
    pub fn new(x: &Matrix, ridge: Ridge, execution: Execution) -> Result<Self, LearnError> {
        let (n, d) = x.shape();
        if n == 0 || d == 0 {
            return Err(LearnError::EmptyInput);
        }
        if !x.is_finite() {
            return Err(LearnError::NonFinite);
        }
        let lambda = ridge.resolve(x);
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(LearnError::InvalidConfig(format!("ridge {lambda} must be finite and >= 0")));
        }
        let p = d + 1;
        let n_aug = if lambda > 0.0 { n + d } else { n };
        if n_aug < p {
            return Err(LearnError::RankDeficient(n_aug));
        }

        // column-major augmented design
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p);
        let mut ones = vec![1.0; n];
        ones.resize(n_aug, 0.0);
        cols.push(ones);
        let sq = lambda.sqrt();
        for j in 0..d {
            let mut c = Vec::with_capacity(n_aug);
            c.extend((0..n).map(|r| x.get(r, j)));
            if lambda > 0.0 {
                c.resize(n_aug, 0.0);
                c[n + j] = sq;
            }
            cols.push(c);
        }

        let mut beta = vec![0.0; p];
        let mut r = vec![0.0; p * p];
        let mut vs: Vec<Vec<f64>> = Vec::with_capacity(p);
        let mut max_diag = 0.0f64;
        for k in 0..p {
            let col = &cols[k];
            let norm = col[k..].iter().map(|v| v * v).sum::<f64>().sqrt();
            let alpha = if col[k] > 0.0 { -norm } else { norm };
            let mut v: Vec<f64> = col[k..].to_vec();
            v[0] -= alpha;
            let vnorm2: f64 = v.iter().map(|a| a * a).sum();
            let b = if vnorm2 > 0.0 { 2.0 / vnorm2 } else { 0.0 };

            let (_, rest) = cols.split_at_mut(k + 1);
            par::for_each_mut(
                if rest.len() > 64 { execution } else { Execution::Sequential },
                rest,
                |_, c| {
                    let s: f64 = c[k..].iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() * b;
                    if s != 0.0 {
                        for (a, vi) in c[k..].iter_mut().zip(&v) {
                            *a -= s * vi;
                        }
                    }
                },
            );
            r[k * p + k] = alpha;
            for j in k + 1..p {
                r[k * p + j] = cols[j][k];
            }
            max_diag = max_diag.max(alpha.abs());
            beta[k] = b;
            vs.push(v);
        }

        let tol = max_diag * (n_aug.max(p) as f64) * f64::EPSILON;
        if let Some(k) = (0..p).find(|&k| r[k * p + k].abs() <= tol) {
            return Err(LearnError::RankDeficient(k));
        }

        Ok(OlsFactor {
            n_rows: n,
            n_aug,
            p,
            v: vs,
            beta,
            r,
            ridge: lambda,
            execution,
        })
    }

    /// Least-squares fit of one target.
    pub fn solve(&self, y: &[f64]) -> Result<LinearModel, LearnError> {
        if y.len() != self.n_rows {
            return Err(LearnError::LengthMismatch(format!(
                "{} targets for {} design rows",
                y.len(),
                self.n_rows
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(LearnError::NonFinite);
        }
        let mut qty = y.to_vec();
        qty.resize(self.n_aug, 0.0);
        for k in 0..self.p {
            let v = &self.v[k];
            let s: f64 = qty[k..].iter().zip(v).map(|(a, b)| a * b).sum::<f64>() * self.beta[k];
            for (a, vi) in qty[k..].iter_mut().zip(v) {
                *a -= s * vi;
            }
        }
        let mut coef = vec![0.0; self.p];
        for k in (0..self.p).rev() {
            let mut acc = qty[k];
            for j in k + 1..self.p {
                acc -= self.r[k * self.p + j] * coef[j];
            }
            coef[k] = acc / self.r[k * self.p + k];
        }
        Ok(LinearModel {
            intercept: coef[0],
            weights: coef[1..].to_vec(),
        })
    }

    /// Fits every target independently (parallel across targets).
    pub fn solve_many(&self, targets: &[Vec<f64>]) -> Result<Vec<LinearModel>, LearnError> {
        par::map_slice(self.execution, targets, |y| self.solve(y))
            .into_iter()
            .collect()
    }
}

/// Minimizes ‖y − Xw − b‖² + λ‖w‖².
pub fn fit_ols(x: &Matrix, y: &[f64], ridge: Ridge) -> Result<LinearModel, LearnError> {
    if y.iter().any(|v| v.is_nan()) {
        return Err(LearnError::NonFinite);
    }
    OlsFactor::new(x, ridge, Execution::Sequential)?.solve(y)
}
