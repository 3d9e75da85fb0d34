//! Error certificates from held-out measurements.
//!
//! Two routes are provided. The angle route needs a reconstruction that
//! satisfies its own `M` measurements and uses the distance `d` from it to
//! the affine space of all `M + T` measurements: the error is `C_T d` with
//! `C_T = 1 / sin(theta_T)`, whose mean and variance are bounded in closed
//! form, giving a Chebyshev bound. The chi-square route only needs the
//! holdout deviations `z_i = a_i . x_hat - y_i`, which for Gaussian rows are
//! i.i.d. `N(0, |delta|^2 + sigma_n^2)`.

use serde::{Deserialize, Serialize};

use crate::ensembles::{EnsembleKind, MeasurementRecord};
use crate::error::{Error, Result};
use crate::linalg::{affine_distance, dot, norm_inf, sub, DenseMatrix};
use crate::stats::chi2_quantile;

/// Relative residual above which a reconstruction is not considered to
/// satisfy its own measurements.
pub const FEASIBILITY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CertMethod {
    /// Chebyshev bound on `C_T` with `k` standard deviations.
    ChebyshevCt { k: f64 },
    /// Chi-square holdout interval at level `alpha`.
    Chi2 { alpha: f64 },
}

impl CertMethod {
    pub fn label(&self) -> String {
        match self {
            CertMethod::ChebyshevCt { k } => format!("chebyshev-ct(k={k})"),
            CertMethod::Chi2 { alpha } => format!("chi2(alpha={alpha})"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertFlags {
    /// The noise correction made a radicand negative; the value was clamped to 0.
    pub below_noise_floor: bool,
    /// The chi-square mapping is not exact for the ensemble (Bernoulli rows).
    pub approximate: bool,
}

impl CertFlags {
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.below_noise_floor {
            parts.push("below-noise-floor");
        }
        if self.approximate {
            parts.push("approximate");
        }
        parts.join("|")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCertificate {
    /// Measurements behind the certified reconstruction (0 when unknown).
    pub m: usize,
    pub t: usize,
    pub point_estimate: f64,
    pub upper_bound: f64,
    pub confidence: f64,
    pub method: CertMethod,
    pub noise_sigma: f64,
    pub flags: CertFlags,
}

impl ErrorCertificate {
    pub const CSV_HEADER: [&'static str; 7] =
        ["M", "T", "method", "point", "bound", "confidence", "flags"];

    pub fn at_step(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    pub fn csv_record(&self) -> [String; 7] {
        [
            self.m.to_string(),
            self.t.to_string(),
            self.method.label(),
            self.point_estimate.to_string(),
            self.upper_bound.to_string(),
            self.confidence.to_string(),
            self.flags.label(),
        ]
    }

    pub fn covers(&self, true_error: f64) -> bool {
        true_error <= self.upper_bound * (1.0 + 1e-9) + 1e-12
    }
}

/// `T` measurements drawn after the reconstruction was fixed, with their
/// deviations `z_i = row_i . x_hat - value_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutBatch {
    pub records: Vec<MeasurementRecord>,
    pub deviations: Vec<f64>,
}

impl HoldoutBatch {
    pub fn new(records: Vec<MeasurementRecord>, x_hat: &[f64]) -> Result<Self> {
        let mut deviations = Vec::with_capacity(records.len());
        for r in &records {
            if r.row.len() != x_hat.len() {
                return Err(Error::DimensionMismatch(format!(
                    "holdout row of length {} for a reconstruction of length {}",
                    r.row.len(),
                    x_hat.len()
                )));
            }
            deviations.push(dot(&r.row, x_hat) - r.value);
        }
        Ok(HoldoutBatch {
            records,
            deviations,
        })
    }

    /// Batch known only through its deviations.
    pub fn from_deviations(deviations: Vec<f64>) -> Self {
        HoldoutBatch {
            records: Vec::new(),
            deviations,
        }
    }

    pub fn len(&self) -> usize {
        self.deviations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deviations.is_empty()
    }

    /// `Z_T = sum z_i^2`.
    pub fn sum_of_squares(&self) -> f64 {
        self.deviations.iter().map(|z| z * z).sum()
    }
}

/// `sqrt(L / T)`, the Jensen estimate of `E[C_T]`.
pub fn ct_mean_estimate(l: usize, t: usize) -> f64 {
    debug_assert!(t >= 1 && l >= t);
    (l as f64 / t as f64).sqrt()
}

/// `sqrt((L-2)/(T-2))`, an upper bound on `E[C_T]`.
pub fn ct_mean_bound(l: usize, t: usize) -> Result<f64> {
    Ok(inverse_sin2_mean(l, t)?.sqrt())
}

/// `(L-2)/(T-2) - L/T`, an upper bound on `Var[C_T]`.
pub fn ct_var_bound(l: usize, t: usize) -> Result<f64> {
    Ok(inverse_sin2_mean(l, t)? - l as f64 / t as f64)
}

fn inverse_sin2_mean(l: usize, t: usize) -> Result<f64> {
    if t <= 2 {
        return Err(Error::DegreesOfFreedom(t));
    }
    if l < t {
        return Err(Error::InvalidArgument(format!(
            "need L >= T, got L = {l}, T = {t}"
        )));
    }
    Ok((l as f64 - 2.0) / (t as f64 - 2.0))
}

/// `C^k_T = sqrt((L-2)/(T-2)) + k sqrt((L-2)/(T-2) - L/T)`.
pub fn chebyshev_multiplier(l: usize, t: usize, k: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::InvalidArgument(format!("k must be positive, got {k}")));
    }
    Ok(ct_mean_bound(l, t)? + k * ct_var_bound(l, t)?.max(0.0).sqrt())
}

/// Bound `|x* - x_hat| <= C^k_T d` holding with probability at least
/// `1 - 1/k^2` (Gaussian rows, feasible reconstruction).
pub fn chebyshev_bound(d: f64, l: usize, t: usize, k: f64) -> Result<ErrorCertificate> {
    if !(d >= 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be nonnegative, got {d}")));
    }
    let mult = chebyshev_multiplier(l, t, k)?;
    Ok(ErrorCertificate {
        m: 0,
        t,
        point_estimate: ct_mean_estimate(l, t) * d,
        upper_bound: mult * d,
        confidence: 1.0 - 1.0 / (k * k),
        method: CertMethod::ChebyshevCt { k },
        noise_sigma: 0.0,
        flags: CertFlags::default(),
    })
}

/// Largest violation of `A x_hat = y`, relative to `1 + |y|_inf`.
fn relative_violation(a: &DenseMatrix, y: &[f64], x_hat: &[f64]) -> f64 {
    if a.rows() == 0 {
        return 0.0;
    }
    norm_inf(&sub(&a.mul_vec(x_hat), y)) / (1.0 + norm_inf(y))
}

fn require_feasible(a: &DenseMatrix, y: &[f64], x_hat: &[f64]) -> Result<()> {
    let v = relative_violation(a, y, x_hat);
    if v > FEASIBILITY_TOL {
        Err(Error::InfeasibleReconstruction(v))
    } else {
        Ok(())
    }
}

/// Stacks the first `M` measurements and a holdout batch.
fn stack(a_m: &DenseMatrix, y_m: &[f64], holdout: &HoldoutBatch) -> Result<(DenseMatrix, Vec<f64>)> {
    let mut a = a_m.clone();
    let mut y = y_m.to_vec();
    for r in &holdout.records {
        a.push_row(&r.row)?;
        y.push(r.value);
    }
    Ok((a, y))
}

/// Chebyshev certificate for `x_hat` fitted to `(a_m, y_m)` using the
/// holdout rows: `d` is the distance to the affine space of all `M + T`
/// measurements and `L = N - M`.
pub fn certify_chebyshev(
    a_m: &DenseMatrix,
    y_m: &[f64],
    holdout: &HoldoutBatch,
    x_hat: &[f64],
    k: f64,
) -> Result<ErrorCertificate> {
    require_feasible(a_m, y_m, x_hat)?;
    let (m, n, t) = (a_m.rows(), a_m.cols(), holdout.records.len());
    if m + t > n {
        return Err(Error::InvalidArgument(format!(
            "M + T = {} exceeds N = {n}",
            m + t
        )));
    }
    let (a_all, y_all) = stack(a_m, y_m, holdout)?;
    let d = affine_distance(&a_all, &y_all, x_hat)?;
    Ok(chebyshev_bound(d, n - m, t, k)?.at_step(m))
}

/// Chi-square interval on `|delta|` from the holdout deviations.
///
/// With `Z_T = sum z_i^2` and `z* = chi2_quantile(alpha, T)`, the bound is
/// `sqrt(max(0, (Z_T / z* - sigma_n^2) / v))` and the point estimate
/// `sqrt(max(0, (Z_T / T - sigma_n^2) / v))`, `v` the per-entry variance of
/// the ensemble.
pub fn chi2_interval(
    batch: &HoldoutBatch,
    alpha: f64,
    noise_sigma: f64,
    ensemble: EnsembleKind,
) -> Result<ErrorCertificate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be nonnegative, got {noise_sigma}"
        )));
    }
    let t = batch.len();
    if t == 0 {
        return Err(Error::InvalidArgument("empty holdout batch".into()));
    }
    let v = ensemble.entry_variance();
    let z_t = batch.sum_of_squares();
    let z_star = chi2_quantile(alpha, t)?;
    let noise2 = noise_sigma * noise_sigma;
    let upper_sq = (z_t / z_star - noise2) / v;
    let point_sq = (z_t / t as f64 - noise2) / v;
    Ok(ErrorCertificate {
        m: 0,
        t,
        point_estimate: point_sq.max(0.0).sqrt(),
        upper_bound: upper_sq.max(0.0).sqrt(),
        confidence: 1.0 - alpha,
        method: CertMethod::Chi2 { alpha },
        noise_sigma,
        flags: CertFlags {
            below_noise_floor: point_sq < 0.0 || upper_sq < 0.0,
            approximate: !ensemble.chi2_exact(),
        },
    })
}

/// `sqrt(Z_T / T)`.
pub fn jl_style_estimate(batch: &HoldoutBatch) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    (batch.sum_of_squares() / batch.len() as f64).sqrt()
}

/// `sqrt(L/T)` times the distance from `x_hat` to the affine space of all
/// `M + T` rows of `a_all`. `x_hat` must satisfy the first `M = rows - T`.
pub fn sin_theta_point_estimate(
    a_all: &DenseMatrix,
    y_all: &[f64],
    x_hat: &[f64],
    l: usize,
    t: usize,
) -> Result<f64> {
    if t == 0 || t > a_all.rows() {
        return Err(Error::InvalidArgument(format!(
            "holdout size {t} for {} rows",
            a_all.rows()
        )));
    }
    let m = a_all.rows() - t;
    require_feasible(&a_all.top_rows(m), &y_all[..m], x_hat)?;
    let d = affine_distance(a_all, y_all, x_hat)?;
    Ok(ct_mean_estimate(l, t) * d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{draw_row, RandomStream};

    fn record(row: Vec<f64>, x: &[f64]) -> MeasurementRecord {
        MeasurementRecord {
            value: dot(&row, x),
            row,
            noise_sigma: 0.0,
        }
    }

    #[test]
    fn closed_forms() {
        assert!((ct_mean_estimate(100, 10) - 10f64.sqrt()).abs() < 1e-15);
        assert_eq!(ct_mean_estimate(40, 40), 1.0);
        assert!((ct_mean_bound(100, 10).unwrap() - 3.5).abs() < 1e-15);
        assert!((ct_mean_bound(30, 30).unwrap() - 1.0).abs() < 1e-15);
        assert!((ct_var_bound(100, 10).unwrap() - 2.25).abs() < 1e-12);
        assert!(ct_var_bound(30, 30).unwrap().abs() < 1e-15);
        assert_eq!(ct_mean_bound(100, 2), Err(Error::DegreesOfFreedom(2)));
        assert_eq!(ct_var_bound(100, 1), Err(Error::DegreesOfFreedom(1)));
    }

    #[test]
    fn chebyshev_examples() {
        assert!((chebyshev_multiplier(100, 10, 3.0).unwrap() - 8.0).abs() < 1e-12);
        let c = chebyshev_bound(0.0, 100, 10, 3.0).unwrap();
        assert_eq!((c.upper_bound, c.point_estimate), (0.0, 0.0));
        let c = chebyshev_bound(0.5, 100, 10, 3.0).unwrap();
        assert!((c.upper_bound - 4.0).abs() < 1e-12);
        assert!((c.confidence - 8.0 / 9.0).abs() < 1e-15);
        assert!(chebyshev_bound(1.0, 100, 2, 3.0).is_err());
    }

    #[test]
    fn chebyshev_refuses_infeasible_reconstruction() {
        let a = DenseMatrix::new(1, 4, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let holdout = HoldoutBatch::new(
            (0..3).map(|i| record(vec![0.0, 1.0, i as f64, 1.0], &[0.0; 4])).collect(),
            &[0.5, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let err = certify_chebyshev(&a, &[0.0], &holdout, &[0.5, 0.0, 0.0, 0.0], 3.0);
        assert!(matches!(err, Err(Error::InfeasibleReconstruction(_))));
    }

    #[test]
    fn chi2_zero_deviations() {
        let b = HoldoutBatch::from_deviations(vec![0.0; 8]);
        let c = chi2_interval(&b, 0.1, 0.0, EnsembleKind::Gaussian).unwrap();
        assert_eq!((c.upper_bound, c.point_estimate), (0.0, 0.0));
        assert!(!c.flags.below_noise_floor);
        let c = chi2_interval(&b, 0.1, 0.01, EnsembleKind::Bernoulli).unwrap();
        assert_eq!(c.upper_bound, 0.0);
        assert!(c.flags.below_noise_floor && c.flags.approximate);
        assert!(chi2_interval(&b, 1.0, 0.0, EnsembleKind::Gaussian).is_err());
    }

    #[test]
    fn jl_constant_deviations() {
        let b = HoldoutBatch::from_deviations(vec![-0.3; 9]);
        assert!((jl_style_estimate(&b) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn sin_theta_exact_and_empty_prefix() {
        let mut s = RandomStream::from_seed(4);
        let n = 30;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let rows: Vec<Vec<f64>> = (0..12).map(|_| draw_row(EnsembleKind::Gaussian, n, &mut s)).collect();
        let a = DenseMatrix::from_rows(&rows, n).unwrap();
        let y = a.mul_vec(&x);
        assert!(sin_theta_point_estimate(&a, &y, &x, n - 7, 5).unwrap() < 1e-12);

        // M = 0: sqrt(N/T) times the row-space projection of delta.
        let delta: Vec<f64> = (0..n).map(|i| if i == 3 { 1.0 } else { 0.0 }).collect();
        let x_hat: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + b).collect();
        let a5 = a.top_rows(5);
        let proj = crate::linalg::min_norm_solution(&a5, &a5.mul_vec(&delta)).unwrap();
        let expect = (n as f64 / 5.0).sqrt() * crate::linalg::norm2(&proj);
        let got = sin_theta_point_estimate(&a5, &y[..5], &x_hat, n, 5).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn chi2_coverage_small_scale() {
        let (n, t, trials) = (60, 25, 1000);
        let mut s = RandomStream::from_seed(17);
        let mut covered = 0;
        for _ in 0..trials {
            let mut delta: Vec<f64> = (0..n).map(|_| s.standard_normal()).collect();
            let nrm = crate::linalg::norm2(&delta);
            delta.iter_mut().for_each(|v| *v /= nrm);
            let z: Vec<f64> = (0..t)
                .map(|_| dot(&draw_row(EnsembleKind::Gaussian, n, &mut s), &delta))
                .collect();
            let c = chi2_interval(&HoldoutBatch::from_deviations(z), 0.1, 0.0, EnsembleKind::Gaussian).unwrap();
            if c.covers(1.0) {
                covered += 1;
            }
        }
        let p = covered as f64 / trials as f64;
        let se = (0.9 * 0.1 / trials as f64).sqrt();
        assert!(p >= 0.9 - 3.0 * se, "coverage {p}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn chi2_scale_equivariant(z in prop::collection::vec(-5.0f64..5.0, 1..30), c in 0.01f64..100.0) {
                let b = HoldoutBatch::from_deviations(z.clone());
                let bs = HoldoutBatch::from_deviations(z.iter().map(|v| v * c).collect());
                let x = chi2_interval(&b, 0.1, 0.0, EnsembleKind::Gaussian).unwrap();
                let y = chi2_interval(&bs, 0.1, 0.0, EnsembleKind::Gaussian).unwrap();
                prop_assert!((y.upper_bound - c * x.upper_bound).abs() <= 1e-12 * (1.0 + y.upper_bound));
                prop_assert!((y.point_estimate - c * x.point_estimate).abs() <= 1e-12 * (1.0 + y.point_estimate));
                prop_assert!((jl_style_estimate(&bs) - c * jl_style_estimate(&b)).abs() <= 1e-12 * (1.0 + jl_style_estimate(&bs)));
            }

            #[test]
            fn chi2_never_negative(z in prop::collection::vec(-1.0f64..1.0, 1..20), sigma in 0.0f64..2.0) {
                let c = chi2_interval(&HoldoutBatch::from_deviations(z), 0.05, sigma, EnsembleKind::Gaussian).unwrap();
                prop_assert!(c.upper_bound >= 0.0 && c.point_estimate >= 0.0);
            }

            #[test]
            fn chebyshev_bound_dominates_point(t in 3usize..60, extra in 0usize..200, k in 0.01f64..10.0, d in 0.0f64..10.0) {
                let l = t + extra;
                let c = chebyshev_bound(d, l, t, k).unwrap();
                prop_assert!(c.upper_bound >= c.point_estimate);
                prop_assert!(ct_mean_estimate(l, t) <= ct_mean_bound(l, t).unwrap() + 1e-12);
            }

            #[test]
            fn chebyshev_scale_equivariant(d in 0.0f64..5.0, c in 0.01f64..100.0) {
                let a = chebyshev_bound(d, 80, 6, 3.0).unwrap();
                let b = chebyshev_bound(c * d, 80, 6, 3.0).unwrap();
                prop_assert!((b.upper_bound - c * a.upper_bound).abs() <= 1e-12 * (1.0 + b.upper_bound));
            }
        }
    }
}
