//! Householder QR of a tall matrix, stored column by column.

use crate::error::{Error, Result};

/// Relative threshold on |R_kk| below which the factored matrix is
/// treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Qr {
    m: usize,
    /// Columns after reduction; entries above the diagonal hold R.
    cols: Vec<Vec<f64>>,
    /// Householder vectors, `vs[k]` acts on rows `k..m`.
    vs: Vec<Vec<f64>>,
    betas: Vec<f64>,
    rdiag: Vec<f64>,
}

impl Qr {
    /// Factors the `m x n` matrix whose columns are `cols` (requires `m >= n`).
    pub fn factor(mut cols: Vec<Vec<f64>>, m: usize) -> Result<Self> {
        let n = cols.len();
        if n > m {
            return Err(Error::DimensionMismatch(format!(
                "QR needs a tall matrix, got {m}x{n}"
            )));
        }
        if let Some(c) = cols.iter().find(|c| c.len() != m) {
            return Err(Error::DimensionMismatch(format!(
                "column of length {} in a matrix with {m} rows",
                c.len()
            )));
        }
        let mut vs = Vec::with_capacity(n);
        let mut betas = Vec::with_capacity(n);
        let mut rdiag = Vec::with_capacity(n);
        for k in 0..n {
            let x = &cols[k][k..];
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let alpha = if x[0] >= 0.0 { -norm } else { norm };
            let mut v = x.to_vec();
            v[0] -= alpha;
            let vnorm2: f64 = v.iter().map(|t| t * t).sum();
            let beta = if vnorm2 > 0.0 { 2.0 / vnorm2 } else { 0.0 };
            for col in cols.iter_mut().skip(k + 1) {
                let tail = &mut col[k..];
                let s = beta * dot(&v, tail);
                for (t, vi) in tail.iter_mut().zip(&v) {
                    *t -= s * vi;
                }
            }
            rdiag.push(alpha);
            vs.push(v);
            betas.push(beta);
        }
        Ok(Qr {
            m,
            cols,
            vs,
            betas,
            rdiag,
        })
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.cols.len()
    }

    pub fn r_diag(&self) -> &[f64] {
        &self.rdiag
    }

    /// `R[i][j]` for `i <= j`.
    pub fn r(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.rdiag[i]
        } else if i < j {
            self.cols[j][i]
        } else {
            0.0
        }
    }

    /// Fails with `RankDeficient` when some |R_kk| < RANK_TOL * max |R_kk|.
    pub fn check_full_rank(&self) -> Result<()> {
        let n = self.cols();
        if n == 0 {
            return Ok(());
        }
        let largest = self.rdiag.iter().fold(0.0_f64, |a, r| a.max(r.abs()));
        if largest == 0.0 {
            return Err(Error::RankDeficient("all-zero matrix".into()));
        }
        for (k, r) in self.rdiag.iter().enumerate() {
            if r.abs() < RANK_TOL * largest {
                return Err(Error::RankDeficient(format!(
                    "|R[{k}][{k}]| = {:e} below {RANK_TOL:e} * {largest:e}",
                    r.abs()
                )));
            }
        }
        Ok(())
    }

    /// Overwrites `b` (length m) with `Q' b`.
    pub fn apply_qt(&self, b: &mut [f64]) {
        for ((k, v), beta) in self.vs.iter().enumerate().zip(&self.betas) {
            let tail = &mut b[k..];
            let s = beta * dot(v, tail);
            for (t, vi) in tail.iter_mut().zip(v) {
                *t -= s * vi;
            }
        }
    }

    /// Overwrites `b` (length m) with `Q b`.
    pub fn apply_q(&self, b: &mut [f64]) {
        for ((k, v), beta) in self.vs.iter().enumerate().zip(&self.betas).rev() {
            let tail = &mut b[k..];
            let s = beta * dot(v, tail);
            for (t, vi) in tail.iter_mut().zip(v) {
                *t -= s * vi;
            }
        }
    }

    /// Solves `R x = c` for the leading n entries of `c`.
    pub fn solve_r(&self, c: &[f64]) -> Vec<f64> {
        let n = self.cols();
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = c[i];
            for (j, xj) in x.iter().enumerate().skip(i + 1) {
                s -= self.r(i, j) * xj;
            }
            x[i] = s / self.rdiag[i];
        }
        x
    }

    /// Solves `R' w = b` (forward substitution).
    pub fn solve_rt(&self, b: &[f64]) -> Vec<f64> {
        let n = self.cols();
        let mut w = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for (j, wj) in w.iter().enumerate().take(i) {
                s -= self.r(j, i) * wj;
            }
            w[i] = s / self.rdiag[i];
        }
        w
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
