//! Noiseless basis pursuit `min |x|_1 s.t. A x = y` as the standard-form LP
//! `min 1'x+ + 1'x-  s.t. [A -A][x+; x-] = y, x+, x- >= 0`, solved cold by
//! two-phase simplex or warm by appending one row with a big-M slack.

use serde::{Deserialize, Serialize};

use super::simplex::{iterate, pivot_out, Basis, Costs, Problem, SimplexOptions};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm_inf, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationCounts {
    pub phase1: usize,
    pub phase2: usize,
    /// Degenerate exchanges that move a zero-valued warm-start slack out of
    /// the basis.
    pub slack_removal: usize,
}

impl IterationCounts {
    pub fn total(&self) -> usize {
        self.phase1 + self.phase2 + self.slack_removal
    }
}

/// How the cost of the warm-start slack is realized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SlackCost {
    /// Symbolic big-M: the slack cost dominates every finite unit-cost combination.
    Lexicographic,
    /// Literal cost `Q` on the slack.
    Fixed(f64),
}

impl Default for SlackCost {
    fn default() -> Self {
        SlackCost::Lexicographic
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// `x = x+ - x-`.
    pub solution: Vec<f64>,
    pub objective: f64,
    pub iterations: IterationCounts,
    pub status: LpStatus,
    /// Constraint rows found linearly dependent on earlier ones and dropped.
    pub dropped_rows: usize,
    /// The warm start hit a singular augmented basis and re-solved cold.
    pub cold_fallback: bool,
}

/// An optimal basis of the basis-pursuit LP, ready to take another row.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexState {
    a: DenseMatrix,
    rhs: Vec<f64>,
    basis: Basis,
    status: LpStatus,
    iterations: IterationCounts,
    dropped_rows: usize,
    opts: SimplexOptions,
    /// Basis updates since `B^{-1}` was last rebuilt.
    stale: usize,
}

impl SimplexState {
    pub fn n(&self) -> usize {
        self.a.cols()
    }

    /// Number of constraint rows kept in the LP.
    pub fn rows(&self) -> usize {
        self.a.rows()
    }

    pub fn status(&self) -> LpStatus {
        self.status
    }

    pub fn iterations(&self) -> IterationCounts {
        self.iterations
    }

    /// Basic variables; `j < n` is `x+_j`, `n <= j < 2n` is `x-_{j-n}`.
    pub fn basis(&self) -> &[usize] {
        &self.basis.idx
    }

    pub fn basic_values(&self) -> &[f64] {
        &self.basis.xb
    }

    pub fn constraints(&self) -> (&DenseMatrix, &[f64]) {
        (&self.a, &self.rhs)
    }

    /// `(x+, x-)` split of the current basic solution.
    pub fn split_solution(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let mut plus = vec![0.0; n];
        let mut minus = vec![0.0; n];
        for (&j, &v) in self.basis.idx.iter().zip(&self.basis.xb) {
            if j < n {
                plus[j] = v;
            } else if j < 2 * n {
                minus[j - n] = v;
            }
        }
        (plus, minus)
    }

    pub fn solution(&self) -> Vec<f64> {
        let (p, m) = self.split_solution();
        p.iter().zip(&m).map(|(a, b)| a - b).collect()
    }

    pub fn objective(&self) -> f64 {
        let n = self.n();
        self.basis
            .idx
            .iter()
            .zip(&self.basis.xb)
            .filter(|(j, _)| **j < 2 * n)
            .map(|(_, v)| v)
            .sum()
    }

    fn report(&self, cold_fallback: bool) -> SolveReport {
        SolveReport {
            solution: self.solution(),
            objective: self.objective(),
            iterations: self.iterations,
            status: self.status,
            dropped_rows: self.dropped_rows,
            cold_fallback,
        }
    }
}

/// Solves basis pursuit from scratch.
pub fn basis_pursuit(a: &DenseMatrix, y: &[f64]) -> Result<SolveReport> {
    Ok(basis_pursuit_with_state(a, y, &SimplexOptions::default())?.0)
}

/// Cold two-phase solve that also returns the optimal basis for warm starts.
pub fn basis_pursuit_with_state(
    a: &DenseMatrix,
    y: &[f64],
    opts: &SimplexOptions,
) -> Result<(SolveReport, SimplexState)> {
    let (m, n) = (a.rows(), a.cols());
    if y.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} observations for {m} rows",
            y.len()
        )));
    }
    if let Some(p) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(p));
    }
    let cap = opts.iteration_cap(m, n);
    let mut counts = IterationCounts::default();

    // Phase 1: artificial s_i e_i with s_i = sign(y_i), starting at |y_i|.
    let signs: Vec<f64> = y.iter().map(|v| if *v < 0.0 { -1.0 } else { 1.0 }).collect();
    let artificials: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut c = vec![0.0; m];
            c[i] = signs[i];
            c
        })
        .collect();
    let problem = Problem {
        a,
        extra: &artificials,
    };
    let ncols = problem.num_columns();
    let mut binv = vec![0.0; m * m];
    for i in 0..m {
        binv[i * m + i] = signs[i];
    }
    let mut basis = Basis {
        idx: (0..m).map(|i| 2 * n + i).collect(),
        binv,
        xb: y.iter().map(|v| v.abs()).collect(),
    };
    let mut phase1 = Costs {
        big: vec![0.0; ncols],
        small: vec![0.0; ncols],
    };
    for c in &mut phase1.small[2 * n..] {
        *c = 1.0;
    }
    let all_active = vec![true; ncols];
    iterate(&problem, &phase1, &all_active, &mut basis, y, opts, cap, &mut counts.phase1)?;

    let infeasibility: f64 = basis
        .idx
        .iter()
        .zip(&basis.xb)
        .filter(|(j, _)| **j >= 2 * n)
        .map(|(_, v)| v)
        .sum();
    if infeasibility > 1e-8 * (1.0 + norm_inf(y)) * (m.max(1) as f64) {
        return Err(Error::Infeasible);
    }

    // Drive artificials left at zero out of the basis; rows where that is
    // impossible are linear combinations of the others.
    let mut real_only = vec![true; ncols];
    for f in &mut real_only[2 * n..] {
        *f = false;
    }
    let mut redundant = Vec::new();
    for slot in 0..m {
        let j = basis.idx[slot];
        if j < 2 * n {
            continue;
        }
        if pivot_out(&problem, &real_only, &mut basis, slot, opts) {
            counts.phase1 += 1;
        } else {
            redundant.push((slot, j - 2 * n));
        }
    }

    let mut a_kept = a.clone();
    let mut rhs = y.to_vec();
    if !redundant.is_empty() {
        let mut rows: Vec<usize> = redundant.iter().map(|(_, r)| *r).collect();
        rows.sort_unstable();
        for &r in rows.iter().rev() {
            a_kept.remove_row(r);
            rhs.remove(r);
        }
        let mut slots: Vec<usize> = redundant.iter().map(|(s, _)| *s).collect();
        slots.sort_unstable();
        for &s in slots.iter().rev() {
            basis.idx.remove(s);
        }
    }
    let reduced = Problem {
        a: &a_kept,
        extra: &[],
    };
    basis.refactor(&reduced, &rhs, opts.feasibility_tol)?;

    // Phase 2 on the unit costs.
    let ncols2 = reduced.num_columns();
    let phase2 = Costs {
        big: vec![0.0; ncols2],
        small: vec![1.0; ncols2],
    };
    iterate(
        &reduced,
        &phase2,
        &vec![true; ncols2],
        &mut basis,
        &rhs,
        opts,
        cap,
        &mut counts.phase2,
    )?;
    basis.refactor(&reduced, &rhs, opts.feasibility_tol)?;

    let state = SimplexState {
        a: a_kept,
        rhs,
        basis,
        status: LpStatus::Optimal,
        iterations: counts,
        dropped_rows: redundant.len(),
        opts: *opts,
        stale: 0,
    };
    Ok((state.report(false), state))
}

/// Adds the constraint `row . x = value` to an optimal basis-pursuit LP and
/// re-optimizes from the previous basis.
///
/// The augmented LP carries a slack `z >= 0` with `row.x+ - row.x- -/+ z =
/// value`, the sign picked so that the old solution with
/// `z = |row . x_hat - value|` is a basic feasible start. The slack cost
/// dominates the unit costs, so an optimum with `z = 0` solves the
/// (M+1)-row problem.
pub fn warm_start_add_row(
    state: &SimplexState,
    row: &[f64],
    value: f64,
    slack_cost: SlackCost,
) -> Result<(SolveReport, SimplexState)> {
    if state.status != LpStatus::Optimal {
        return Err(Error::InvalidArgument(
            "warm start needs an optimal previous state".into(),
        ));
    }
    let n = state.n();
    if row.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "row of length {} for {n} unknowns",
            row.len()
        )));
    }
    if !value.is_finite() {
        return Err(Error::NonFinite(0));
    }
    let opts = state.opts;
    let m = state.rows();
    let x_hat = state.solution();
    let residual = dot(row, &x_hat) - value;
    let sigma = if residual > 0.0 { -1.0 } else { 1.0 };

    let mut a = state.a.clone();
    a.push_row(row)?;
    let mut rhs = state.rhs.clone();
    rhs.push(value);
    let mut slack = vec![0.0; m + 1];
    slack[m] = sigma;
    let extra = vec![slack];
    let problem = Problem { a: &a, extra: &extra };
    let z = 2 * n;

    // [[B, 0], [r', s]]^{-1} = [[B^{-1}, 0], [-s r' B^{-1}, s]] with s = +-1.
    let r: Vec<f64> = state
        .basis
        .idx
        .iter()
        .map(|&j| if j < n { row[j] } else { -row[j - n] })
        .collect();
    let mut binv = vec![0.0; (m + 1) * (m + 1)];
    for i in 0..m {
        binv[i * (m + 1)..i * (m + 1) + m].copy_from_slice(state.basis.inverse_row(i));
    }
    for k in 0..m {
        let rb: f64 = (0..m).map(|i| r[i] * state.basis.binv[i * m + k]).sum();
        binv[m * (m + 1) + k] = -sigma * rb;
    }
    binv[m * (m + 1) + m] = sigma;
    let mut idx = state.basis.idx.clone();
    idx.push(z);
    let mut xb = state.basis.xb.clone();
    xb.push(residual.abs());
    let mut basis = Basis { idx, binv, xb };

    let mut stale = state.stale + 1;
    let rebuilt = stale >= opts.refactor_period(m + 1);
    if rebuilt {
        stale = 0;
    }
    if (rebuilt && basis.refactor(&problem, &rhs, opts.feasibility_tol).is_err())
        || basis.xb.iter().any(|v| *v < -1e-7 * (1.0 + norm_inf(&rhs)))
    {
        let (mut report, st) = basis_pursuit_with_state(&a, &rhs, &opts)?;
        report.cold_fallback = true;
        return Ok((report, st));
    }

    let ncols = problem.num_columns();
    let mut costs = Costs {
        big: vec![0.0; ncols],
        small: vec![1.0; ncols],
    };
    match slack_cost {
        SlackCost::Lexicographic => {
            costs.big[z] = 1.0;
            costs.small[z] = 0.0;
        }
        SlackCost::Fixed(q) => costs.small[z] = q,
    }
    let cap = opts.iteration_cap(m + 1, n);
    let mut counts = IterationCounts::default();
    let mut active = vec![true; ncols];
    iterate(&problem, &costs, &active, &mut basis, &rhs, &opts, cap, &mut counts.phase2)?;

    let mut dropped = 0;
    if let Some(slot) = basis.idx.iter().position(|&j| j == z) {
        let zval = basis.xb[slot];
        if zval > 1e-8 * (1.0 + norm_inf(&rhs)) {
            return Err(Error::SlackStuck(zval));
        }
        active[z] = false;
        if pivot_out(&problem, &active, &mut basis, slot, &opts) {
            counts.slack_removal += 1;
            // Restore dual feasibility for the unit costs with z held out.
            iterate(&problem, &costs, &active, &mut basis, &rhs, &opts, cap, &mut counts.phase2)?;
        } else {
            // The new row is a combination of the old ones.
            a.remove_row(m);
            rhs.pop();
            basis.idx.remove(slot);
            dropped = 1;
        }
    }

    stale += counts.total();
    if dropped == 1 || stale >= opts.refactor_period(rhs.len()) {
        let kept = Problem { a: &a, extra: &[] };
        basis.refactor(&kept, &rhs, opts.feasibility_tol)?;
        stale = 0;
    }
    let next = SimplexState {
        a,
        rhs,
        basis,
        status: LpStatus::Optimal,
        iterations: counts,
        dropped_rows: state.dropped_rows + dropped,
        opts,
        stale,
    };
    Ok((next.report(false), next))
}
