//! Orthogonal matching pursuit run until the measurements are matched.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{least_squares, norm2, sub, DenseMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmpReport {
    pub solution: Vec<f64>,
    /// Selected columns in selection order.
    pub support: Vec<usize>,
    pub iterations: usize,
    pub residual_norm: f64,
    /// `residual_norm <= residual_tol * (1 + |y|)`.
    pub converged: bool,
}

/// Greedy selection of the column most correlated (after normalization)
/// with the residual, followed by a least-squares refit on the support.
///
/// Stops once `|y - A x| <= residual_tol * (1 + |y|)` or the support
/// holds `min(M, N)` columns.
pub fn omp(a: &DenseMatrix, y: &[f64], residual_tol: f64) -> Result<OmpReport> {
    let (m, n) = (a.rows(), a.cols());
    if y.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} observations for {m} rows",
            y.len()
        )));
    }
    let threshold = residual_tol * (1.0 + norm2(y));
    let col_norms: Vec<f64> = (0..n).map(|j| norm2(&a.col(j))).collect();
    let mut support: Vec<usize> = Vec::new();
    let mut coef: Vec<f64> = Vec::new();
    let mut residual = y.to_vec();
    let mut rnorm = norm2(&residual);
    let max_support = m.min(n);

    while rnorm > threshold && support.len() < max_support {
        let corr = a.tr_mul_vec(&residual);
        let pick = (0..n)
            .filter(|j| !support.contains(j) && col_norms[*j] > 0.0)
            .map(|j| (j, corr[j].abs() / col_norms[j]))
            .max_by(|x, y| x.1.total_cmp(&y.1));
        let Some((j, c)) = pick else {
            return Err(Error::NoProgress(support.len()));
        };
        if c <= f64::EPSILON * rnorm {
            return Err(Error::NoProgress(support.len()));
        }
        support.push(j);
        let sub_a = a.select_columns(&support);
        coef = least_squares(&sub_a, y).map_err(|_| Error::NoProgress(support.len()))?;
        residual = sub(y, &sub_a.mul_vec(&coef));
        let next = norm2(&residual);
        if next >= rnorm * (1.0 - 1e-12) && next > threshold {
            return Err(Error::NoProgress(support.len()));
        }
        rnorm = next;
    }

    let mut solution = vec![0.0; n];
    for (&j, &c) in support.iter().zip(&coef) {
        solution[j] = c;
    }
    Ok(OmpReport {
        solution,
        iterations: support.len(),
        support,
        residual_norm: rnorm,
        converged: rnorm <= threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{draw_row, EnsembleKind, RandomStream};
    use crate::linalg::DenseMatrix;

    fn rotation(theta: f64) -> DenseMatrix {
        let (s, c) = theta.sin_cos();
        DenseMatrix::new(2, 2, vec![c, -s, s, c]).unwrap()
    }

    #[test]
    fn zero_observations() {
        let a = DenseMatrix::identity(4);
        let rep = omp(&a, &[0.0; 4], 1e-10).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.solution.iter().all(|v| *v == 0.0));
        assert!(rep.converged);
    }

    #[test]
    fn orthonormal_columns() {
        let a = rotation(0.7);
        let y = [0.3, -1.1];
        let rep = omp(&a, &y, 1e-12).unwrap();
        let expect = a.tr_mul_vec(&y);
        assert!(rep.iterations <= 2);
        for (u, v) in rep.solution.iter().zip(&expect) {
            assert!((u - v).abs() < 1e-12);
        }
        // y = 2.5 * A e_1 takes one step.
        let y: Vec<f64> = a.col(0).iter().map(|v| 2.5 * v).collect();
        let rep = omp(&a, &y, 1e-12).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!((rep.solution[0] - 2.5).abs() < 1e-12 && rep.solution[1].abs() < 1e-12);
    }

    #[test]
    fn recovers_exact_support() {
        let mut s = RandomStream::from_seed(2024);
        let rows: Vec<Vec<f64>> = (0..20).map(|_| draw_row(EnsembleKind::Gaussian, 50, &mut s)).collect();
        let a = DenseMatrix::from_rows(&rows, 50).unwrap();
        let mut x = vec![0.0; 50];
        x[4] = 3.0;
        x[17] = -2.0;
        x[33] = 1.5;
        let y = a.mul_vec(&x);
        let rep = omp(&a, &y, 1e-10).unwrap();
        assert!(rep.converged);
        let mut support = rep.support.clone();
        support.sort_unstable();
        assert_eq!(support, vec![4, 17, 33]);
        for (u, v) in rep.solution.iter().zip(&x) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn feasible_when_converged() {
        for seed in 0..20 {
            let mut s = RandomStream::from_seed(seed);
            let rows: Vec<Vec<f64>> = (0..12).map(|_| draw_row(EnsembleKind::Gaussian, 30, &mut s)).collect();
            let a = DenseMatrix::from_rows(&rows, 30).unwrap();
            let y: Vec<f64> = (0..12).map(|_| s.standard_normal()).collect();
            let tol = 1e-9;
            let rep = omp(&a, &y, tol).unwrap();
            let r = norm2(&sub(&a.mul_vec(&rep.solution), &y));
            assert!(rep.converged);
            assert!(r <= tol * (1.0 + norm2(&y)));
        }
    }
}
