//! Basis pursuit denoising `min 1/2 |y - A x|^2 + lambda |x|_1` by
//! accelerated proximal gradient with backtracking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm1, solve_normal_equations, sub, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpdnOptions {
    /// Stop when the optimality residual is at most `tol * lambda`.
    pub tol: f64,
    pub max_iterations: usize,
    /// FISTA iterations before switching to the homotopy path.
    pub homotopy_after: usize,
}

impl Default for BpdnOptions {
    fn default() -> Self {
        BpdnOptions {
            tol: 1e-8,
            max_iterations: 200_000,
            homotopy_after: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpdnReport {
    pub solution: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub optimality_residual: f64,
}

/// `c * sqrt(M ln N)`.
pub fn lambda_schedule(m: usize, n: usize, c: f64) -> f64 {
    c * ((m as f64) * (n as f64).ln()).sqrt()
}

pub fn bpdn_objective(a: &DenseMatrix, y: &[f64], lambda: f64, x: &[f64]) -> f64 {
    let r = sub(&a.mul_vec(x), y);
    0.5 * dot(&r, &r) + lambda * norm1(x)
}

/// Largest violation of the subgradient conditions: with `g = A'(Ax - y)`,
/// `g_i = -lambda sign(x_i)` where `x_i != 0` and `|g_i| <= lambda` where
/// `x_i == 0`.
pub fn bpdn_optimality_residual(a: &DenseMatrix, y: &[f64], lambda: f64, x: &[f64]) -> f64 {
    let g = a.tr_mul_vec(&sub(&a.mul_vec(x), y));
    g.iter()
        .zip(x)
        .map(|(gi, xi)| {
            if *xi > 0.0 {
                (gi + lambda).abs()
            } else if *xi < 0.0 {
                (gi - lambda).abs()
            } else {
                (gi.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

fn smooth_value(a: &DenseMatrix, y: &[f64], x: &[f64]) -> f64 {
    let r = sub(&a.mul_vec(x), y);
    0.5 * dot(&r, &r)
}

fn smooth_part(a: &DenseMatrix, y: &[f64], x: &[f64]) -> (f64, Vec<f64>) {
    let r = sub(&a.mul_vec(x), y);
    (0.5 * dot(&r, &r), a.tr_mul_vec(&r))
}

/// Solves the optimality conditions exactly on the current support with
/// the current signs. Returns `None` if the result flips a sign.
fn polish(a: &DenseMatrix, y: &[f64], lambda: f64, x: &[f64]) -> Option<Vec<f64>> {
    let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
    if support.is_empty() || support.len() > a.rows() {
        return None;
    }
    let sub_a = a.select_columns(&support);
    let aty = sub_a.tr_mul_vec(y);
    let rhs: Vec<f64> = support
        .iter()
        .zip(&aty)
        .map(|(&i, v)| v - lambda * x[i].signum())
        .collect();
    let coef = solve_normal_equations(&sub_a, &rhs).ok()?;
    let mut out = vec![0.0; x.len()];
    for (&i, c) in support.iter().zip(&coef) {
        if c.signum() != x[i].signum() {
            return None;
        }
        out[i] = *c;
    }
    Some(out)
}

/// Iterations between optimality checks.
const RESIDUAL_EVERY: usize = 5;

pub fn bpdn(a: &DenseMatrix, y: &[f64], lambda: f64, opts: &BpdnOptions) -> Result<BpdnReport> {
    let n = a.cols();
    if y.len() != a.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} observations for {} rows",
            y.len(),
            a.rows()
        )));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    let target = opts.tol * lambda;
    let x = vec![0.0; n];
    let res = bpdn_optimality_residual(a, y, lambda, &x);
    if res <= target {
        return Ok(finish(a, y, lambda, x, 0, res));
    }

    let first = opts.homotopy_after.min(opts.max_iterations);
    let x = match fista(a, y, lambda, target, x, first) {
        Fista::Converged(x, it, res) => return Ok(finish(a, y, lambda, x, it, res)),
        Fista::Stalled(x) => x,
    };
    let mut used = first;
    let start = match homotopy(a, y, lambda) {
        Some((h, steps)) => {
            used += steps;
            let res = bpdn_optimality_residual(a, y, lambda, &h);
            if res <= target {
                return Ok(finish(a, y, lambda, h, used, res));
            }
            h
        }
        None => x,
    };
    let rest = opts.max_iterations.saturating_sub(first);
    match fista(a, y, lambda, target, start, rest) {
        Fista::Converged(x, it, res) => Ok(finish(a, y, lambda, x, used + it, res)),
        Fista::Stalled(_) => Err(Error::IterationLimit(opts.max_iterations)),
    }
}

enum Fista {
    Converged(Vec<f64>, usize, f64),
    Stalled(Vec<f64>),
}

fn fista(a: &DenseMatrix, y: &[f64], lambda: f64, target: f64, mut x: Vec<f64>, max_it: usize) -> Fista {
    let mut z = x.clone();
    let mut t = 1.0_f64;
    let mut lip = 1.0_f64;
    for it in 1..=max_it {
        let (fz, gz) = smooth_part(a, y, &z);
        let x_new = loop {
            let cand: Vec<f64> = z
                .iter()
                .zip(&gz)
                .map(|(zi, gi)| soft_threshold(zi - gi / lip, lambda / lip))
                .collect();
            let d = sub(&cand, &z);
            let fc = smooth_value(a, y, &cand);
            if fc <= fz + dot(&gz, &d) + 0.5 * lip * dot(&d, &d) * (1.0 + 1e-12) {
                break cand;
            }
            lip *= 2.0;
        };

        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let step = sub(&x_new, &x);
        // Restart momentum when it points uphill.
        if dot(&sub(&z, &x_new), &step) > 0.0 {
            t = 1.0;
            z = x_new.clone();
        } else {
            let beta = (t - 1.0) / t_new;
            z = x_new.iter().zip(&step).map(|(xi, si)| xi + beta * si).collect();
            t = t_new;
        }
        x = x_new;

        if it % RESIDUAL_EVERY != 0 {
            continue;
        }
        let res = bpdn_optimality_residual(a, y, lambda, &x);
        if res <= target {
            return Fista::Converged(x, it, res);
        }
        if it % (5 * RESIDUAL_EVERY) == 0 && res < 1e-2 * lambda {
            if let Some(p) = polish(a, y, lambda, &x) {
                let pres = bpdn_optimality_residual(a, y, lambda, &p);
                if pres <= target {
                    return Fista::Converged(p, it, pres);
                }
            }
        }
    }
    Fista::Stalled(x)
}

/// Lasso homotopy: follows the piecewise-linear solution path from
/// `lambda = |A'y|_inf` down to `lambda`, adding and dropping one column
/// per breakpoint. Returns the endpoint and the number of breakpoints, or
/// `None` if the active Gram matrix turns singular.
fn homotopy(a: &DenseMatrix, y: &[f64], lambda: f64) -> Option<(Vec<f64>, usize)> {
    let n = a.cols();
    let max_steps = 20 * (a.rows() + n);
    let mut x = vec![0.0; n];
    let mut c = a.tr_mul_vec(y);
    let (j0, mut lam) = c
        .iter()
        .map(|v| v.abs())
        .enumerate()
        .max_by(|p, q| p.1.total_cmp(&q.1))?;
    if lam <= lambda {
        return Some((x, 0));
    }
    let mut active = vec![j0];
    let mut is_active = vec![false; n];
    is_active[j0] = true;
    let mut dropped: Option<usize> = None;

    for step in 1..=max_steps {
        if active.len() > a.rows() {
            return None;
        }
        let signs: Vec<f64> = active.iter().map(|&j| c[j].signum()).collect();
        let sub_a = a.select_columns(&active);
        let d = solve_normal_equations(&sub_a, &signs).ok()?;
        let v = a.tr_mul_vec(&sub_a.mul_vec(&d));

        let mut gamma = lam - lambda;
        let mut event: Option<(usize, bool)> = None;
        for j in 0..n {
            if is_active[j] || dropped == Some(j) {
                continue;
            }
            for g in [(lam - c[j]) / (1.0 - v[j]), (lam + c[j]) / (1.0 + v[j])] {
                if g > 1e-14 * lam && g < gamma {
                    gamma = g;
                    event = Some((j, true));
                }
            }
        }
        for (k, &j) in active.iter().enumerate() {
            let g = -x[j] / d[k];
            if g > 1e-14 * lam && g < gamma {
                gamma = g;
                event = Some((k, false));
            }
        }

        for (k, &j) in active.iter().enumerate() {
            x[j] += gamma * d[k];
        }
        lam -= gamma;
        dropped = None;
        match event {
            None => return Some((x, step)),
            Some((j, true)) => {
                active.push(j);
                is_active[j] = true;
            }
            Some((k, false)) => {
                let j = active.remove(k);
                x[j] = 0.0;
                is_active[j] = false;
                dropped = Some(j);
            }
        }
        c = a.tr_mul_vec(&sub(y, &a.mul_vec(&x)));
    }
    None
}

fn finish(a: &DenseMatrix, y: &[f64], lambda: f64, x: Vec<f64>, it: usize, res: f64) -> BpdnReport {
    BpdnReport {
        objective: bpdn_objective(a, y, lambda, &x),
        solution: x,
        iterations: it,
        optimality_residual: res,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{draw_row, EnsembleKind, RandomStream};

    fn gaussian(m: usize, n: usize, seed: u64) -> DenseMatrix {
        let mut s = RandomStream::from_seed(seed);
        let rows: Vec<Vec<f64>> = (0..m).map(|_| draw_row(EnsembleKind::Gaussian, n, &mut s)).collect();
        DenseMatrix::from_rows(&rows, n).unwrap()
    }

    #[test]
    fn lambda_schedule_arithmetic() {
        assert!((lambda_schedule(100, 1000, 1.0) - 26.2826).abs() < 1e-4);
        let l1 = lambda_schedule(25, 300, 0.1);
        let l2 = lambda_schedule(100, 300, 0.1);
        assert!((l2 / l1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn large_lambda_gives_zero() {
        let a = gaussian(10, 30, 1);
        let y: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        let lam = crate::linalg::norm_inf(&a.tr_mul_vec(&y));
        let rep = bpdn(&a, &y, lam, &BpdnOptions::default()).unwrap();
        assert!(rep.solution.iter().all(|v| *v == 0.0));
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn identity_is_soft_threshold() {
        let a = DenseMatrix::identity(5);
        let y = [3.0, -0.2, 0.5, -4.0, 1.0];
        let lam = 0.7;
        let rep = bpdn(&a, &y, lam, &BpdnOptions::default()).unwrap();
        for (x, v) in rep.solution.iter().zip(&y) {
            let expect = v.signum() * (v.abs() - lam).max(0.0);
            assert!((x - expect).abs() < 1e-12, "{x} vs {expect}");
        }
    }

    #[test]
    fn matches_long_run_reference() {
        let a = gaussian(50, 200, 7);
        let mut x_true = vec![0.0; 200];
        for (k, i) in [3usize, 40, 77, 150, 199].iter().enumerate() {
            x_true[*i] = (k as f64 + 1.0) * if k % 2 == 0 { 1.0 } else { -1.0 };
        }
        let mut s = RandomStream::from_seed(8);
        let y: Vec<f64> = a.mul_vec(&x_true).iter().map(|v| v + 0.05 * s.standard_normal()).collect();
        let lam = lambda_schedule(50, 200, 0.1);
        let opts = BpdnOptions { tol: 1e-8, max_iterations: 20_000, ..Default::default() };
        let rep = bpdn(&a, &y, lam, &opts).unwrap();
        let reference = bpdn(&a, &y, lam, &BpdnOptions { tol: 1e-9, ..Default::default() }).unwrap();
        assert!(rep.optimality_residual <= opts.tol * lam);
        let rel = (rep.objective - reference.objective).abs() / reference.objective;
        assert!(rel < 1e-6, "relative objective gap {rel}");
    }

    #[test]
    fn homotopy_path_matches_fista() {
        let a = gaussian(30, 120, 11);
        let mut s = RandomStream::from_seed(12);
        let y: Vec<f64> = (0..30).map(|_| s.standard_normal()).collect();
        for c in [0.01, 0.1, 0.5] {
            let lam = lambda_schedule(30, 120, c);
            let path = bpdn(&a, &y, lam, &BpdnOptions { homotopy_after: 0, ..Default::default() }).unwrap();
            let plain = bpdn(&a, &y, lam, &BpdnOptions { homotopy_after: usize::MAX, ..Default::default() }).unwrap();
            assert!(path.optimality_residual <= 1e-8 * lam);
            let rel = (path.objective - plain.objective).abs() / plain.objective;
            assert!(rel < 1e-9, "c={c}: relative objective gap {rel}");
        }
    }

    #[test]
    fn rejects_nonpositive_lambda() {
        let a = DenseMatrix::identity(2);
        assert!(bpdn(&a, &[1.0, 1.0], 0.0, &BpdnOptions::default()).is_err());
    }
}
