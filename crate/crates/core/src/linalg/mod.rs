//! Dense real linear algebra.

mod qr;

pub use qr::{Qr, RANK_TOL};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from equally long rows. An empty slice gives a 0x`cols` matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has length {}, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "row of length {} appended to {} columns",
                row.len(),
                self.cols
            )));
        }
        if let Some(pos) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(self.data.len() + pos));
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    pub fn remove_row(&mut self, i: usize) {
        self.data.drain(i * self.cols..(i + 1) * self.cols);
        self.rows -= 1;
    }

    /// First `m` rows.
    pub fn top_rows(&self, m: usize) -> DenseMatrix {
        let m = m.min(self.rows);
        DenseMatrix {
            rows: m,
            cols: self.cols,
            data: self.data[..m * self.cols].to_vec(),
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        DenseMatrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn select_columns(&self, idx: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.rows);
        for i in 0..self.rows {
            let r = self.row(i);
            data.extend(idx.iter().map(|&j| r[j]));
        }
        DenseMatrix {
            rows: self.rows,
            cols: idx.len(),
            data,
        }
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.get(i, j);
            }
        }
        DenseMatrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn scale_column(&mut self, j: usize, s: f64) {
        for i in 0..self.rows {
            self.data[i * self.cols + j] *= s;
        }
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `A' v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, vi) in v.iter().enumerate() {
            if *vi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += vi * a;
            }
        }
        out
    }

    fn rows_as_vecs(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    fn cols_as_vecs(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|j| self.col(j)).collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    qr::dot(a, b)
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn norm1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Number of entries with magnitude above `tol`.
pub fn count_nonzeros(x: &[f64], tol: f64) -> usize {
    x.iter().filter(|v| v.abs() > tol).count()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Minimum-norm solution of the underdetermined system `A x = b` (`A` is
/// `M x N` with `M <= N` and full row rank), via a QR factorization of `A'`.
pub fn min_norm_solution(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let (m, n) = (a.rows(), a.cols());
    if b.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "rhs of length {} for {m} rows",
            b.len()
        )));
    }
    if m > n {
        return Err(Error::DimensionMismatch(format!(
            "min-norm solve needs M <= N, got {m}x{n}"
        )));
    }
    if m == 0 {
        return Ok(vec![0.0; n]);
    }
    // A' = QR, so A = R'Q' and x = Q [R'^{-1} b; 0].
    let qr = Qr::factor(a.rows_as_vecs(), n)?;
    qr.check_full_rank()?;
    let w = qr.solve_rt(b);
    let mut x = vec![0.0; n];
    x[..m].copy_from_slice(&w);
    qr.apply_q(&mut x);
    Ok(x)
}

/// Least-squares solution of an overdetermined (or square) full column
/// rank system.
pub fn least_squares(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let (m, k) = (a.rows(), a.cols());
    if b.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "rhs of length {} for {m} rows",
            b.len()
        )));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let qr = Qr::factor(a.cols_as_vecs(), m)?;
    qr.check_full_rank()?;
    let mut c = b.to_vec();
    qr.apply_qt(&mut c);
    Ok(qr.solve_r(&c))
}

/// Solves the normal equations `(A'A) x = rhs` for a full column rank `A`
/// through its QR factor, without forming `A'A`.
pub fn solve_normal_equations(a: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let k = a.cols();
    if rhs.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "rhs of length {} for {k} columns",
            rhs.len()
        )));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let qr = Qr::factor(a.cols_as_vecs(), a.rows())?;
    qr.check_full_rank()?;
    let w = qr.solve_rt(rhs);
    Ok(qr.solve_r(&w))
}

/// Euclidean distance from `x_hat` to the affine space `{x : A x = y}`.
///
/// Equals `|A'(AA')^{-1}(A x_hat - y)|`, the length of the projection of
/// `x_hat - x0` onto the row space of `A` for any feasible `x0`.
pub fn affine_distance(a: &DenseMatrix, y: &[f64], x_hat: &[f64]) -> Result<f64> {
    if x_hat.len() != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "point of length {} for {} columns",
            x_hat.len(),
            a.cols()
        )));
    }
    if y.len() != a.rows() {
        return Err(Error::DimensionMismatch(format!(
            "rhs of length {} for {} rows",
            y.len(),
            a.rows()
        )));
    }
    let residual = sub(&a.mul_vec(x_hat), y);
    Ok(norm2(&min_norm_solution(a, &residual)?))
}

/// Largest absolute inner product between distinct unit-normalized columns.
pub fn mutual_coherence(a: &DenseMatrix) -> Result<f64> {
    let cols: Vec<Vec<f64>> = a.cols_as_vecs();
    let scale = cols.iter().map(|c| norm2(c)).fold(0.0_f64, f64::max);
    let mut units = Vec::with_capacity(cols.len());
    for (j, c) in cols.into_iter().enumerate() {
        let nrm = norm2(&c);
        if nrm <= 1e-12 * scale.max(1e-300) || nrm == 0.0 {
            return Err(Error::ZeroColumn(j));
        }
        units.push(c.into_iter().map(|v| v / nrm).collect::<Vec<_>>());
    }
    let mut best = 0.0_f64;
    for i in 0..units.len() {
        for j in i + 1..units.len() {
            best = best.max(dot(&units[i], &units[j]).abs());
        }
    }
    Ok(best.min(1.0))
}

/// Inverse of a square row-major matrix by Gauss-Jordan elimination with
/// partial pivoting. Fails when a pivot falls below `tol` times the largest
/// entry of the input.
pub fn invert_square(m: &[f64], n: usize, tol: f64) -> Result<Vec<f64>> {
    debug_assert_eq!(m.len(), n * n);
    let scale = norm_inf(m).max(f64::MIN_POSITIVE);
    let mut a = m.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for c in 0..n {
        let (p, pv) = (c..n)
            .map(|r| (r, a[r * n + c].abs()))
            .fold((c, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pv < tol * scale {
            return Err(Error::RankDeficient(format!(
                "pivot {pv:e} in column {c} of a {n}x{n} basis"
            )));
        }
        if p != c {
            for j in 0..n {
                a.swap(p * n + j, c * n + j);
                inv.swap(p * n + j, c * n + j);
            }
        }
        let d = a[c * n + c];
        for v in &mut a[c * n + c..(c + 1) * n] {
            *v /= d;
        }
        for v in &mut inv[c * n..(c + 1) * n] {
            *v /= d;
        }
        let pivot_a = a[c * n + c..(c + 1) * n].to_vec();
        let pivot_inv = inv[c * n..(c + 1) * n].to_vec();
        for r in (0..n).filter(|&r| r != c) {
            let f = a[r * n + c];
            if f == 0.0 {
                continue;
            }
            for (v, p) in a[r * n + c..(r + 1) * n].iter_mut().zip(&pivot_a) {
                *v -= f * p;
            }
            for (v, p) in inv[r * n..(r + 1) * n].iter_mut().zip(&pivot_inv) {
                *v -= f * p;
            }
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        DenseMatrix::new(rows, cols, data).unwrap()
    }

    /// Plain Gaussian elimination, independent of the QR path.
    fn gauss_solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n)
                .max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))
                .unwrap();
            m.swap(p, c);
            b.swap(p, c);
            for r in c + 1..n {
                let f = m[r][c] / m[c][c];
                for j in c..n {
                    m[r][j] -= f * m[c][j];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / m[i][i];
        }
        x
    }

    /// x = A'(AA')^{-1} b.
    fn normal_equations_min_norm(a: &DenseMatrix, b: &[f64]) -> Vec<f64> {
        let m = a.rows();
        let gram: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|j| dot(a.row(i), a.row(j))).collect())
            .collect();
        let w = gauss_solve(gram, b.to_vec());
        a.tr_mul_vec(&w)
    }

    #[test]
    fn rejects_non_finite_entries() {
        assert_eq!(
            DenseMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite(1))
        );
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn min_norm_identity() {
        let x = min_norm_solution(&DenseMatrix::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        for (a, b) in x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn min_norm_equal_split() {
        let a = DenseMatrix::new(1, 2, vec![1.0, 1.0]).unwrap();
        let x = min_norm_solution(&a, &[2.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn min_norm_matches_normal_equations() {
        let a = random_matrix(3, 5, 11);
        let b = [0.3, -1.2, 2.5];
        let x = min_norm_solution(&a, &b).unwrap();
        let oracle = normal_equations_min_norm(&a, &b);
        for (u, v) in x.iter().zip(&oracle) {
            assert!((u - v).abs() < 1e-9, "{u} vs {v}");
        }
        let r = sub(&a.mul_vec(&x), &b);
        assert!(norm2(&r) <= 1e-9 * (1.0 + norm2(&b)));
    }

    #[test]
    fn min_norm_detects_rank_deficiency() {
        let a = DenseMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 2.0, 4.0, 6.0]).unwrap();
        assert!(matches!(
            min_norm_solution(&a, &[1.0, 2.0]),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn affine_distance_examples() {
        let a = DenseMatrix::new(1, 2, vec![1.0, 0.0]).unwrap();
        assert!((affine_distance(&a, &[0.0], &[3.0, 7.0]).unwrap() - 3.0).abs() < 1e-14);

        let a = random_matrix(4, 9, 3);
        let x = random_matrix(1, 9, 4).row(0).to_vec();
        let y = a.mul_vec(&x);
        assert!(affine_distance(&a, &y, &x).unwrap() < 1e-12);
    }

    #[test]
    fn affine_distance_matches_projection_oracle() {
        let a = random_matrix(5, 20, 21);
        let y: Vec<f64> = (0..5).map(|i| i as f64 - 2.0).collect();
        let x_hat = random_matrix(1, 20, 22).row(0).to_vec();
        // Closest feasible point: x_hat - A'(AA')^{-1}(A x_hat - y).
        let r = sub(&a.mul_vec(&x_hat), &y);
        let correction = normal_equations_min_norm(&a, &r);
        let closest = sub(&x_hat, &correction);
        let feas = sub(&a.mul_vec(&closest), &y);
        assert!(norm2(&feas) < 1e-10);
        let oracle = distance(&x_hat, &closest);
        let d = affine_distance(&a, &y, &x_hat).unwrap();
        assert!((d - oracle).abs() < 1e-9, "{d} vs {oracle}");
    }

    #[test]
    fn coherence_examples() {
        assert_eq!(mutual_coherence(&DenseMatrix::identity(3)).unwrap(), 0.0);
        let a = DenseMatrix::new(2, 3, vec![1.0, 1.0, 0.0, 2.0, 2.0, 1.0]).unwrap();
        assert!((mutual_coherence(&a).unwrap() - 1.0).abs() < 1e-15);
        let z = DenseMatrix::new(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(mutual_coherence(&z), Err(Error::ZeroColumn(1)));
    }

    #[test]
    fn coherence_matches_double_loop() {
        let a = random_matrix(10, 30, 5);
        let mut oracle = 0.0_f64;
        for i in 0..30 {
            for j in 0..30 {
                if i == j {
                    continue;
                }
                let (ci, cj) = (a.col(i), a.col(j));
                let c = dot(&ci, &cj) / (norm2(&ci) * norm2(&cj));
                oracle = oracle.max(c.abs());
            }
        }
        let got = mutual_coherence(&a).unwrap();
        assert!((got - oracle).abs() < 1e-15, "{got} vs {oracle}");
    }

    #[test]
    fn least_squares_recovers_consistent_system() {
        let a = random_matrix(8, 3, 9);
        let x = [1.0, -2.0, 0.5];
        let b = a.mul_vec(&x);
        let got = least_squares(&a, &b).unwrap();
        for (u, v) in got.iter().zip(&x) {
            assert!((u - v).abs() < 1e-12);
        }
        let got = solve_normal_equations(&a, &a.tr_mul_vec(&b)).unwrap();
        for (u, v) in got.iter().zip(&x) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn invert_square_round_trip() {
        let a = random_matrix(6, 6, 13);
        let inv = invert_square(a.data(), 6, 1e-12).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let s: f64 = (0..6).map(|k| a.get(i, k) * inv[k * 6 + j]).sum();
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((s - e).abs() < 1e-10);
            }
        }
        assert!(invert_square(&[1.0, 2.0, 2.0, 4.0], 2, 1e-12).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn min_norm_is_orthogonal_to_nullspace(seed in 0u64..500) {
                let a = random_matrix(4, 9, seed);
                let b: Vec<f64> = random_matrix(1, 4, seed + 1000).row(0).to_vec();
                let x = min_norm_solution(&a, &b).unwrap();
                // v - A'(AA')^{-1}A v lies in the nullspace.
                let v = random_matrix(1, 9, seed + 2000).row(0).to_vec();
                let pv = min_norm_solution(&a, &a.mul_vec(&v)).unwrap();
                let null = sub(&v, &pv);
                prop_assert!(norm2(&a.mul_vec(&null)) < 1e-10);
                prop_assert!(dot(&x, &null).abs() <= 1e-8 * norm2(&x) * norm2(&null));
            }

            #[test]
            fn affine_distance_row_permutation_invariant(seed in 0u64..500) {
                let a = random_matrix(5, 12, seed);
                let y = random_matrix(1, 5, seed + 7).row(0).to_vec();
                let x = random_matrix(1, 12, seed + 9).row(0).to_vec();
                let perm = [3usize, 0, 4, 1, 2];
                let ap = a.select_rows(&perm);
                let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
                let d = affine_distance(&a, &y, &x).unwrap();
                let dp = affine_distance(&ap, &yp, &x).unwrap();
                prop_assert!((d - dp).abs() <= 1e-9 * d.max(1e-300) + 1e-15);
            }

            #[test]
            fn affine_distance_zero_iff_feasible(seed in 0u64..300, shift in -1.0f64..1.0) {
                let a = random_matrix(3, 7, seed);
                let x = random_matrix(1, 7, seed + 5).row(0).to_vec();
                let mut y = a.mul_vec(&x);
                prop_assert!(affine_distance(&a, &y, &x).unwrap() < 1e-12);
                y[0] += shift;
                let d = affine_distance(&a, &y, &x).unwrap();
                prop_assert_eq!(d < 1e-12, shift.abs() < 1e-12);
            }

            #[test]
            fn coherence_invariant_under_column_scaling(seed in 0u64..300, s in 0.1f64..10.0, neg in any::<bool>()) {
                let a = random_matrix(6, 10, seed);
                let mut scaled = a.clone();
                scaled.scale_column((seed % 10) as usize, if neg { -s } else { s });
                let c0 = mutual_coherence(&a).unwrap();
                let c1 = mutual_coherence(&scaled).unwrap();
                prop_assert!((c0 - c1).abs() < 1e-12);
            }
        }
    }
}
