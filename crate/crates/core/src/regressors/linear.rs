//! Least squares and ridge through a thin SVD of the centred design.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Thin SVD of the column-centred design with the centred target projected onto
/// the left singular vectors. Solving for any ridge penalty costs O(n·r).
#[derive(Debug, Clone)]
pub struct CenteredSvd {
    x_mean: DVector<f64>,
    y_mean: f64,
    singular: DVector<f64>,
    v: DMatrix<f64>,
    uty: DVector<f64>,
    rank_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolution {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub rank: usize,
    pub rank_deficient: bool,
}

impl CenteredSvd {
    pub fn new(x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        let (m, n) = x.shape();
        if m == 0 {
            return Err(Error::Empty("cannot fit a model on zero rows".into()));
        }
        if y.len() != m {
            return Err(Error::Dimension(format!("{m} rows but {} targets", y.len())));
        }
        let x_mean = x.row_mean().transpose();
        let y_mean = y.iter().sum::<f64>() / m as f64;
        let mut xc = x.clone();
        for (j, mut col) in xc.column_iter_mut().enumerate() {
            col.add_scalar_mut(-x_mean[j]);
        }
        let yc = DVector::from_iterator(m, y.iter().map(|v| v - y_mean));
        if n == 0 {
            return Ok(CenteredSvd {
                x_mean,
                y_mean,
                singular: DVector::zeros(0),
                v: DMatrix::zeros(0, 0),
                uty: DVector::zeros(0),
                rank_tol: 0.0,
            });
        }
        let svd = xc
            .try_svd(true, true, f64::EPSILON, 0)
            .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
        let u = svd.u.expect("u requested");
        let v = svd.v_t.expect("v_t requested").transpose();
        let uty = u.tr_mul(&yc);
        let s_max = svd.singular_values.max();
        let rank_tol = m.max(n) as f64 * f64::EPSILON * s_max;
        Ok(CenteredSvd {
            x_mean,
            y_mean,
            singular: svd.singular_values,
            v,
            uty,
            rank_tol,
        })
    }

    pub fn rank(&self) -> usize {
        self.singular.iter().filter(|s| **s > self.rank_tol).count()
    }

    pub fn nfeatures(&self) -> usize {
        self.x_mean.len()
    }

    /// Minimises `||y - Xb - c||^2 + lambda ||b||^2` with `c` unpenalised.
    /// `lambda = 0` gives the minimum-norm least-squares solution.
    pub fn solve(&self, lambda: f64) -> LinearSolution {
        let n = self.nfeatures();
        let mut coef = DVector::zeros(self.singular.len());
        for (k, &s) in self.singular.iter().enumerate() {
            let keep = if lambda == 0.0 { s > self.rank_tol } else { s > 0.0 };
            if keep {
                coef[k] = s / (s * s + lambda) * self.uty[k];
            }
        }
        let beta = if n == 0 { DVector::zeros(0) } else { &self.v * coef };
        let intercept = self.y_mean - self.x_mean.dot(&beta);
        let rank = self.rank();
        LinearSolution {
            weights: beta.iter().copied().collect(),
            intercept,
            rank,
            rank_deficient: rank < n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = DMatrix::from_column_slice(5, 1, &[0.0, 1.0, 2.0, 3.0, 4.0]);
        let y: Vec<f64> = (0..5).map(|i| 2.0 * i as f64 + 1.0).collect();
        let s = CenteredSvd::new(&x, &y).unwrap().solve(0.0);
        assert!((s.weights[0] - 2.0).abs() < 1e-10);
        assert!((s.intercept - 1.0).abs() < 1e-10);
        assert!(!s.rank_deficient);
    }

    #[test]
    fn single_row_reproduces_target() {
        let x = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let s = CenteredSvd::new(&x, &[42.0]).unwrap().solve(0.0);
        assert_eq!(s.weights, vec![0.0; 3]);
        assert_eq!(s.intercept, 42.0);
        assert!(s.rank_deficient);
    }

    #[test]
    fn collinear_columns_flagged() {
        let x = DMatrix::from_fn(6, 2, |i, j| (i as f64) * (j as f64 + 1.0));
        let y: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let s = CenteredSvd::new(&x, &y).unwrap().solve(0.0);
        assert!(s.rank_deficient);
        assert_eq!(s.rank, 1);
        // minimum norm: weights proportional to (1, 2) with 1*w0 + 2*w1 = 1
        assert!((s.weights[0] - 0.2).abs() < 1e-10 && (s.weights[1] - 0.4).abs() < 1e-10);
    }

    #[test]
    fn zero_rows_error() {
        assert!(CenteredSvd::new(&DMatrix::zeros(0, 2), &[]).is_err());
    }
}
