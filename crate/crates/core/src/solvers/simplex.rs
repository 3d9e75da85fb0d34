//! Revised simplex engine over the basis-pursuit column layout.
//!
//! Columns `0..n` are `A`, columns `n..2n` are `-A` and any further columns
//! are supplied explicitly (phase-1 artificials or the warm-start slack).
//! Costs come in two tiers compared lexicographically: the `big` tier
//! dominates every finite combination of the `small` tier, which is how the
//! big-M slack cost is realized without a literal huge constant.

use crate::error::{Error, Result};
use crate::linalg::{dot, invert_square, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    /// Smallest admissible pivot element and reduced-cost threshold.
    pub pivot_tol: f64,
    /// Absolute tolerance on basic values.
    pub feasibility_tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub stall_limit: usize,
    /// Pivot cap per solve; `None` means `50 * (M + N)`.
    pub max_iterations: Option<usize>,
    /// Recompute the basis inverse from scratch after `max(refactor_every, M)` pivots.
    pub refactor_every: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            pivot_tol: 1e-9,
            feasibility_tol: 1e-9,
            stall_limit: 50,
            max_iterations: None,
            refactor_every: 50,
        }
    }
}

impl SimplexOptions {
    pub fn refactor_period(&self, m: usize) -> usize {
        self.refactor_every.max(m)
    }

    pub fn iteration_cap(&self, m: usize, n: usize) -> usize {
        self.max_iterations.unwrap_or(50 * (m + n))
    }
}

pub(crate) struct Problem<'a> {
    pub a: &'a DenseMatrix,
    pub extra: &'a [Vec<f64>],
}

impl Problem<'_> {
    pub fn n(&self) -> usize {
        self.a.cols()
    }

    pub fn num_columns(&self) -> usize {
        2 * self.n() + self.extra.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        let n = self.n();
        if j < n {
            self.a.col(j)
        } else if j < 2 * n {
            self.a.col(j - n).into_iter().map(|v| -v).collect()
        } else {
            self.extra[j - 2 * n].clone()
        }
    }

    /// `column(j) . pi` for every column.
    pub fn price(&self, pi: &[f64]) -> Vec<f64> {
        let t = self.a.tr_mul_vec(pi);
        let mut out = Vec::with_capacity(self.num_columns());
        out.extend_from_slice(&t);
        out.extend(t.iter().map(|v| -v));
        out.extend(self.extra.iter().map(|c| dot(c, pi)));
        out
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Costs {
    pub big: Vec<f64>,
    pub small: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Basis {
    pub idx: Vec<usize>,
    /// Row-major `m x m` inverse of the basis matrix.
    pub binv: Vec<f64>,
    pub xb: Vec<f64>,
}

impl Basis {
    pub fn m(&self) -> usize {
        self.idx.len()
    }

    /// `B^{-1} v`.
    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        let m = self.m();
        (0..m)
            .map(|i| dot(&self.binv[i * m..(i + 1) * m], v))
            .collect()
    }

    pub fn inverse_row(&self, r: usize) -> &[f64] {
        let m = self.m();
        &self.binv[r * m..(r + 1) * m]
    }

    /// `c_B' B^{-1}` for one cost tier.
    fn duals(&self, tier: &[f64]) -> Vec<f64> {
        let m = self.m();
        let mut pi = vec![0.0; m];
        for (k, &j) in self.idx.iter().enumerate() {
            let c = tier[j];
            if c == 0.0 {
                continue;
            }
            for (p, b) in pi.iter_mut().zip(&self.binv[k * m..(k + 1) * m]) {
                *p += c * b;
            }
        }
        pi
    }

    /// Rebuilds `B^{-1}` and the basic values from scratch.
    pub fn refactor(&mut self, problem: &Problem<'_>, rhs: &[f64], feas_tol: f64) -> Result<()> {
        let m = self.m();
        let mut b = vec![0.0; m * m];
        for (k, &j) in self.idx.iter().enumerate() {
            for (i, v) in problem.column(j).into_iter().enumerate() {
                b[i * m + k] = v;
            }
        }
        self.binv = invert_square(&b, m, 1e-13)?;
        self.xb = self.solve(rhs);
        clamp_small_negatives(&mut self.xb, feas_tol);
        Ok(())
    }

    /// Replaces the basic variable in slot `r` by column `q`, where `u = B^{-1} a_q`.
    pub fn pivot(&mut self, r: usize, q: usize, u: &[f64], feas_tol: f64) {
        let m = self.m();
        let ur = u[r];
        let theta = self.xb[r].max(0.0) / ur;
        for (i, x) in self.xb.iter_mut().enumerate() {
            if i == r {
                *x = theta;
            } else {
                *x -= theta * u[i];
            }
        }
        clamp_small_negatives(&mut self.xb, feas_tol);
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (row_r, after) = rest.split_at_mut(m);
        for v in row_r.iter_mut() {
            *v /= ur;
        }
        for (i, row) in before
            .chunks_exact_mut(m)
            .enumerate()
            .chain(after.chunks_exact_mut(m).enumerate().map(|(k, c)| (k + r + 1, c)))
        {
            let f = u[i];
            if f == 0.0 {
                continue;
            }
            for (v, pr) in row.iter_mut().zip(row_r.iter()) {
                *v -= f * pr;
            }
        }
        self.idx[r] = q;
    }
}

fn clamp_small_negatives(x: &mut [f64], tol: f64) {
    for v in x.iter_mut() {
        if *v < 0.0 && *v > -tol {
            *v = 0.0;
        }
    }
}

/// Runs primal simplex pivots until no active column prices out.
///
/// `active[j] == false` keeps column `j` from entering. Each pivot bumps
/// `pivots`; exceeding `cap` pivots in this call gives `IterationLimit`.
pub(crate) fn iterate(
    problem: &Problem<'_>,
    costs: &Costs,
    active: &[bool],
    basis: &mut Basis,
    rhs: &[f64],
    opts: &SimplexOptions,
    cap: usize,
    pivots: &mut usize,
) -> Result<()> {
    let ncols = problem.num_columns();
    let tol = opts.pivot_tol;
    let mut stall = 0usize;
    let mut since_refactor = 0usize;
    let mut taken = 0usize;
    loop {
        let mut in_basis = vec![false; ncols];
        for &j in &basis.idx {
            in_basis[j] = true;
        }
        let pi_big = basis.duals(&costs.big);
        let pi_small = basis.duals(&costs.small);
        let big_priced = if pi_big.iter().any(|c| *c != 0.0) {
            Some(problem.price(&pi_big))
        } else {
            None
        };
        let small_priced = problem.price(&pi_small);

        let bland = stall >= opts.stall_limit;
        let mut entering: Option<(usize, f64, f64)> = None;
        for j in 0..ncols {
            if in_basis[j] || !active[j] {
                continue;
            }
            let mut d_big = costs.big[j] - big_priced.as_ref().map_or(0.0, |p| p[j]);
            if d_big.abs() <= tol {
                d_big = 0.0;
            }
            let d_small = costs.small[j] - small_priced[j];
            let improving = d_big < 0.0 || (d_big == 0.0 && d_small < -tol);
            if !improving {
                continue;
            }
            if bland {
                entering = Some((j, d_big, d_small));
                break;
            }
            let better = match entering {
                None => true,
                Some((_, b, s)) => d_big < b || (d_big == b && d_small < s),
            };
            if better {
                entering = Some((j, d_big, d_small));
            }
        }
        let Some((q, _, _)) = entering else {
            return Ok(());
        };
        if taken >= cap {
            return Err(Error::IterationLimit(cap));
        }

        let u = basis.solve(&problem.column(q));
        let mut leave: Option<(usize, f64)> = None;
        for (i, &ui) in u.iter().enumerate() {
            if ui <= tol {
                continue;
            }
            let ratio = basis.xb[i].max(0.0) / ui;
            leave = match leave {
                None => Some((i, ratio)),
                Some((r, best)) => {
                    let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best);
                    let take = if tie {
                        if bland {
                            basis.idx[i] < basis.idx[r]
                        } else {
                            ui > u[r]
                        }
                    } else {
                        ratio < best
                    };
                    if take {
                        Some((i, ratio))
                    } else {
                        Some((r, best))
                    }
                }
            };
        }
        let Some((r, theta)) = leave else {
            return Err(Error::Unbounded);
        };

        basis.pivot(r, q, &u, opts.feasibility_tol);
        *pivots += 1;
        taken += 1;
        if theta <= opts.feasibility_tol {
            stall += 1;
        } else {
            stall = 0;
        }
        since_refactor += 1;
        if since_refactor >= opts.refactor_period(basis.m()) {
            basis.refactor(problem, rhs, opts.feasibility_tol)?;
            since_refactor = 0;
        }
    }
}

/// Pivots the basic variable in slot `r` out in exchange for an active
/// nonbasic column with a usable entry in row `r` of `B^{-1} A`.
/// Returns `false` when no such column exists.
pub(crate) fn pivot_out(
    problem: &Problem<'_>,
    active: &[bool],
    basis: &mut Basis,
    r: usize,
    opts: &SimplexOptions,
) -> bool {
    let alpha = problem.price(basis.inverse_row(r));
    let mut in_basis = vec![false; problem.num_columns()];
    for &j in &basis.idx {
        in_basis[j] = true;
    }
    let best = alpha
        .iter()
        .enumerate()
        .filter(|(j, _)| active[*j] && !in_basis[*j])
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()));
    match best {
        Some((q, a)) if a.abs() > 1e-7 => {
            let u = basis.solve(&problem.column(q));
            // Degenerate exchange: the leaving value is zero, keep it exact.
            basis.xb[r] = 0.0;
            basis.pivot(r, q, &u, opts.feasibility_tol);
            true
        }
        _ => false,
    }
}
