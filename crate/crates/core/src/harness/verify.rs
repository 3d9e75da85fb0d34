//! Acceptance checks shared by `seqcs verify` and the acceptance test
//! target. Each criterion returns a report with one line per sub-check.

use std::fmt;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use super::config::{preset, ExperimentConfig};
use super::experiments::{error_bounds_trial, estimator_trial, warmstart_trial};
use crate::ensembles::{draw_row, EnsembleKind, MeasurementRecord, RandomStream, SignalSpec};
use crate::error::Result;
use crate::estimators::{chi2_interval, HoldoutBatch};
use crate::linalg::{distance, dot, least_squares, norm2, sub, DenseMatrix};
use crate::sequential::{
    check_agreement, run_session, DecoderKind, RuleKind, SessionConfig, StopReason, StoppingRule,
    AGREEMENT_TOL,
};
use crate::solvers::{basis_pursuit, bpdn, bpdn_optimality_residual, lambda_schedule, omp, BpdnOptions};
use crate::stats::{chi2_cdf, chi2_quantile, sample_ct, verify_sin2_identities, MomentReport};

/// Trial-count scale: `Full` runs the stated sizes, `Quick` a smoke-sized
/// fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Full,
    Quick,
}

impl Scale {
    fn n(self, full: usize) -> usize {
        match self {
            Scale::Full => full,
            Scale::Quick => (full / 10).max(20),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub checks: Vec<Check>,
}

impl CriterionReport {
    fn new(id: usize, name: &'static str) -> Self {
        CriterionReport {
            id,
            name,
            checks: Vec::new(),
        }
    }

    fn check(&mut self, label: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            label: label.into(),
            passed,
            detail: detail.into(),
        });
    }

    fn error(id: usize, name: &'static str, e: crate::Error) -> Self {
        let mut r = CriterionReport::new(id, name);
        r.check("run", false, format!("error: {e}"));
        r
    }

    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "[{status}] criterion {:>2}: {}", self.id, self.name)?;
        for c in &self.checks {
            let s = if c.passed { "ok" } else { "FAILED" };
            write!(f, "\n    {s:6} {}: {}", c.label, c.detail)?;
        }
        Ok(())
    }
}

pub type CriterionFn = fn(Scale) -> CriterionReport;

pub const CRITERIA: &[(usize, &str, CriterionFn)] = &[
    (1, "agreement and cardinality exactness", agreement_exactness),
    (2, "T-step false agreement bound", t_step_bound),
    (3, "C_T moments", ct_moments),
    (4, "sin^2 identities", sin2_identities),
    (5, "Chebyshev certificate coverage", chebyshev_coverage),
    (6, "chi-square interval coverage", chi2_coverage),
    (7, "estimator comparison", estimator_comparison),
    (8, "chi-square kernel accuracy", chi2_kernel),
    (9, "warm start correctness and benefit", warm_start),
    (10, "solver oracles", solver_oracles),
    (11, "sequential trace properties", trace_properties),
];

pub fn run_all(scale: Scale) -> Vec<CriterionReport> {
    CRITERIA.iter().map(|(_, _, f)| f(scale)).collect()
}

fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

fn session(ensemble: EnsembleKind, n: usize, k: usize, rule: RuleKind, seed: u64, trial: u64) -> SessionConfig {
    SessionConfig {
        ensemble,
        signal: SignalSpec::ExactSparse { n, k },
        noise_sigma: 0.0,
        decoder: DecoderKind::BasisPursuitWarm,
        rule: StoppingRule::new(rule),
        budget: None,
        master_seed: seed,
        trial,
    }
}

pub fn agreement_exactness(scale: Scale) -> CriterionReport {
    const NAME: &str = "agreement and cardinality exactness";
    let mut rep = CriterionReport::new(1, NAME);
    let trials = scale.n(200) as u64;
    for (label, rule, reason) in [
        ("one-step agreement", RuleKind::OneStepAgreement, StopReason::OneStepAgreement),
        ("cardinality", RuleKind::Cardinality, StopReason::Cardinality),
    ] {
        let results: Result<Vec<_>> = (0..trials)
            .into_par_iter()
            .map(|t| run_session(session(EnsembleKind::Gaussian, 50, 5, rule, 101, t)))
            .collect();
        let results = match results {
            Ok(r) => r,
            Err(e) => return CriterionReport::error(1, NAME, e),
        };
        let fired: Vec<_> = results.iter().filter(|r| r.reason == reason).collect();
        let violations = fired.iter().filter(|r| r.final_error() > 1e-6).count();
        let worst = fired.iter().map(|r| r.final_error()).fold(0.0, f64::max);
        rep.check(
            label,
            violations == 0 && !fired.is_empty(),
            format!("{} of {trials} sessions fired, {violations} with error > 1e-6, worst {worst:.2e}", fired.len()),
        );
    }
    rep
}

pub fn t_step_bound(scale: Scale) -> CriterionReport {
    let mut rep = CriterionReport::new(2, "T-step false agreement bound");
    let trials = scale.n(4000);
    let n = 20;
    // Error e_0 - e_1: each Bernoulli row agrees with probability 1/2.
    let x_true = vec![0.0; n];
    let mut x_hat = vec![0.0; n];
    x_hat[0] = 0.7;
    x_hat[1] = -0.7;
    for t in [1u32, 2, 4] {
        let mut stream = RandomStream::from_seed(2000 + t as u64);
        let hits = (0..trials)
            .filter(|_| {
                (0..t).all(|_| {
                    let row = draw_row(EnsembleKind::Bernoulli, n, &mut stream);
                    let rec = MeasurementRecord { value: dot(&row, &x_true), row, noise_sigma: 0.0 };
                    check_agreement(&x_hat, &rec, AGREEMENT_TOL)
                })
            })
            .count();
        let bound = crate::sequential::t_step_rule_error_bound(t);
        let freq = hits as f64 / trials as f64;
        let limit = bound + 3.0 * binomial_se(bound, trials);
        rep.check(
            format!("T = {t}"),
            freq <= limit,
            format!("frequency {freq:.4} over {trials} trials, limit {limit:.4} (2^-T = {bound})"),
        );
    }
    rep
}

pub fn ct_moments(scale: Scale) -> CriterionReport {
    const NAME: &str = "C_T moments";
    let mut rep = CriterionReport::new(3, NAME);
    let samples = scale.n(5000).max(100);
    for (i, t) in [5usize, 10, 25, 50].into_iter().enumerate() {
        let s = match sample_ct(100, t, samples, 3000 + i as u64) {
            Ok(s) => s,
            Err(e) => return CriterionReport::error(3, NAME, e),
        };
        let m = &s.moments;
        rep.check(
            format!("T = {t} mean within 5% of sqrt(L/T)"),
            m.rel_deviation <= 0.05,
            format!("mean {:.4} vs {:.4}, relative gap {:.4}", m.mean, s.mean_estimate, m.rel_deviation),
        );
        let mb = s.mean_bound.expect("T > 2");
        rep.check(
            format!("T = {t} mean below bound"),
            m.mean <= mb + 3.0 * m.mean_se,
            format!("mean {:.4} vs bound {mb:.4} (+3 SE = {:.4})", m.mean, 3.0 * m.mean_se),
        );
        let vb = s.var_bound.expect("T > 2");
        rep.check(
            format!("T = {t} variance below bound"),
            m.variance <= vb + 3.0 * m.variance_se,
            format!("variance {:.4} vs bound {vb:.4} (+3 SE = {:.4})", m.variance, 3.0 * m.variance_se),
        );
    }
    rep
}

pub fn sin2_identities(scale: Scale) -> CriterionReport {
    const NAME: &str = "sin^2 identities";
    let mut rep = CriterionReport::new(4, NAME);
    let (s2, inv) = match verify_sin2_identities(100, 10, scale.n(100_000), 4000) {
        Ok(r) => r,
        Err(e) => return CriterionReport::error(4, NAME, e),
    };
    rep.check(
        "E[sin^2] within 2% of T/L",
        s2.rel_deviation <= 0.02,
        format!("{:.5} vs {:.5}, relative gap {:.4}", s2.mean, s2.target, s2.rel_deviation),
    );
    rep.check(
        "E[1/sin^2] within 5% of (L-2)/(T-2)",
        inv.rel_deviation <= 0.05,
        format!("{:.4} vs {:.4}, relative gap {:.4}", inv.mean, inv.target, inv.rel_deviation),
    );
    rep
}

pub fn chebyshev_coverage(scale: Scale) -> CriterionReport {
    const NAME: &str = "Chebyshev certificate coverage";
    let mut rep = CriterionReport::new(5, NAME);
    let mut cfg: ExperimentConfig = preset("fig5").expect("builtin preset");
    cfg.trials = match scale {
        Scale::Full => 20,
        Scale::Quick => 6,
    };
    let rows: Result<Vec<_>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| error_bounds_trial(&cfg, t))
        .collect();
    let rows: Vec<_> = match rows {
        Ok(r) => r.into_iter().flatten().collect(),
        Err(e) => return CriterionReport::error(5, NAME, e),
    };
    let p = 1.0 - 1.0 / 9.0;
    let tally = |filter: &dyn Fn(f64) -> bool| {
        let mut n = 0;
        let mut covered = 0;
        for r in &rows {
            if filter(r.err2) {
                n += 1;
                covered += usize::from(r.certs[0].covers(r.err2));
            }
        }
        (n, covered)
    };
    let (n, covered) = tally(&|_| true);
    let limit = p - 3.0 * binomial_se(p, n.max(1));
    let cov = covered as f64 / n.max(1) as f64;
    rep.check(
        "all evaluations",
        n >= 500 && cov >= limit,
        format!("coverage {cov:.4} over {n} evaluations, limit {limit:.4}"),
    );
    let (n, covered) = tally(&|e| e > 1e-6);
    let limit = p - 3.0 * binomial_se(p, n.max(1));
    let cov = covered as f64 / n.max(1) as f64;
    rep.check(
        "evaluations before recovery",
        n > 0 && cov >= limit,
        format!("coverage {cov:.4} over {n} evaluations with nonzero error, limit {limit:.4}"),
    );
    rep
}

pub fn chi2_coverage(scale: Scale) -> CriterionReport {
    const NAME: &str = "chi-square interval coverage";
    let mut rep = CriterionReport::new(6, NAME);
    let (n, t, alpha) = (100, 25, 0.1);
    let trials = scale.n(5000);
    for (i, sigma) in [0.0, 0.01].into_iter().enumerate() {
        let mut s = RandomStream::from_seed(6000 + i as u64);
        let mut covered = 0;
        for _ in 0..trials {
            let mut delta: Vec<f64> = (0..n).map(|_| s.standard_normal()).collect();
            let nrm = norm2(&delta);
            delta.iter_mut().for_each(|v| *v /= nrm);
            let z: Vec<f64> = (0..t)
                .map(|_| dot(&draw_row(EnsembleKind::Gaussian, n, &mut s), &delta) + sigma * s.standard_normal())
                .collect();
            match chi2_interval(&HoldoutBatch::from_deviations(z), alpha, sigma, EnsembleKind::Gaussian) {
                Ok(c) => covered += usize::from(c.covers(1.0)),
                Err(e) => return CriterionReport::error(6, NAME, e),
            }
        }
        let p = 1.0 - alpha;
        let limit = p - 3.0 * binomial_se(p, trials);
        let cov = covered as f64 / trials as f64;
        rep.check(
            format!("sigma = {sigma}"),
            cov >= limit,
            format!("coverage {cov:.4} over {trials} trials, limit {limit:.4}"),
        );
    }
    rep
}

pub fn estimator_comparison(scale: Scale) -> CriterionReport {
    const NAME: &str = "estimator comparison";
    let mut rep = CriterionReport::new(7, NAME);
    let trials = scale.n(5000) as u64;
    let signal = SignalSpec::ExactSparse { n: 250, k: 10 };
    let mut stds = Vec::new();
    for m in [0usize, 200] {
        let r: Result<Vec<_>> = (0..trials)
            .into_par_iter()
            .map(|t| estimator_trial(EnsembleKind::Gaussian, &signal, 25, m, 7000, t))
            .collect();
        let r = match r {
            Ok(r) => r,
            Err(e) => return CriterionReport::error(7, NAME, e),
        };
        let jl: Vec<f64> = r.iter().map(|e| e.jl).collect();
        let st: Vec<f64> = r.iter().map(|e| e.sin_theta).collect();
        let a = MomentReport::from_samples(&jl, 1.0).expect("enough samples").std_dev();
        let b = MomentReport::from_samples(&st, 1.0).expect("enough samples").std_dev();
        stds.push((m, a, b));
    }
    let (_, a0, b0) = stds[0];
    let gap = (b0 - a0).abs() / a0;
    rep.check(
        "M = 0 similar spread",
        gap < 0.15,
        format!("std jl {a0:.4}, sin-theta {b0:.4}, relative gap {gap:.4} (< 0.15)"),
    );
    let (_, a1, b1) = stds[1];
    rep.check(
        "M = 200 sin-theta tighter",
        b1 < a1,
        format!("std jl {a1:.4}, sin-theta {b1:.4}"),
    );
    rep
}

/// `ln Gamma(T/2)` from the exact half-integer products.
fn ln_gamma_half_integer(t: usize) -> f64 {
    if t % 2 == 0 {
        (1..t / 2).map(|i| (i as f64).ln()).sum()
    } else {
        0.5 * std::f64::consts::PI.ln() + (0..(t - 1) / 2).map(|j| (0.5 + j as f64).ln()).sum::<f64>()
    }
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            left + right + diff / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, depth)
}

/// Chi-square CDF by quadrature of the density after `s = u^2`, which
/// removes the singularity at 0 for `T = 1`.
pub fn chi2_cdf_quadrature(x: f64, t: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = t as f64 / 2.0;
    let log_norm = -k * 2f64.ln() - ln_gamma_half_integer(t) + 2f64.ln();
    let g = move |u: f64| {
        if u <= 0.0 {
            return if t == 1 { (log_norm).exp() } else { 0.0 };
        }
        (log_norm + (t as f64 - 1.0) * u.ln() - 0.5 * u * u).exp()
    };
    let upper = x.sqrt();
    let panels = 64;
    let h = upper / panels as f64;
    (0..panels)
        .map(|i| adaptive_simpson(&g, i as f64 * h, (i + 1) as f64 * h, 1e-14, 40))
        .sum()
}

pub fn chi2_kernel(_scale: Scale) -> CriterionReport {
    let mut rep = CriterionReport::new(8, "chi-square kernel accuracy");
    let ts = [1usize, 2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 15, 20, 25, 30, 40, 50, 70, 100, 150];
    let fracs = [0.05, 0.2, 0.5, 0.8, 1.0, 1.3, 1.7, 2.2, 3.0, 4.0];
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for &t in &ts {
        for &fr in &fracs {
            let x = fr * t as f64;
            worst = worst.max((chi2_cdf(x, t) - chi2_cdf_quadrature(x, t)).abs());
            count += 1;
        }
    }
    rep.check(
        "cdf vs quadrature",
        count == 200 && worst <= 1e-8,
        format!("max abs error {worst:.2e} over {count} grid points"),
    );
    let mut worst2: f64 = 0.0;
    for i in 0..=200 {
        let x = i as f64 * 0.25;
        worst2 = worst2.max((chi2_cdf(x, 2) - (1.0 - (-x / 2.0).exp())).abs());
    }
    rep.check("T = 2 closed form", worst2 <= 1e-12, format!("max abs error {worst2:.2e}"));
    let mut worst3: f64 = 0.0;
    let mut failed = None;
    for &t in &ts {
        for p in [1e-6, 0.001, 0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99, 0.999] {
            match chi2_quantile(p, t) {
                Ok(q) => worst3 = worst3.max((chi2_cdf(q, t) - p).abs()),
                Err(e) => failed = Some(format!("p = {p}, T = {t}: {e}")),
            }
        }
    }
    rep.check(
        "quantile round trip",
        failed.is_none() && worst3 <= 1e-9,
        failed.unwrap_or_else(|| format!("max |cdf(quantile(p)) - p| = {worst3:.2e}")),
    );
    rep
}

pub fn warm_start(scale: Scale) -> CriterionReport {
    const NAME: &str = "warm start correctness and benefit";
    let mut rep = CriterionReport::new(9, NAME);
    let trials = match scale {
        Scale::Full => 30,
        Scale::Quick => 8,
    };
    let signal = SignalSpec::ExactSparse { n: 100, k: 8 };
    let values: Vec<usize> = (1..=50).collect();
    let runs: Result<Vec<_>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| warmstart_trial(EnsembleKind::Gaussian, &signal, 9000, t, &values))
        .collect();
    let runs = match runs {
        Ok(r) => r,
        Err(e) => return CriterionReport::error(9, NAME, e),
    };
    let steps: Vec<_> = runs.iter().flatten().collect();
    let worst = steps.iter().map(|s| s.relative_gap()).fold(0.0, f64::max);
    rep.check(
        "warm objective equals cold",
        worst <= 1e-7,
        format!("max relative gap {worst:.2e} over {} steps", steps.len()),
    );
    let top: Vec<_> = steps.iter().filter(|s| s.m > 25).collect();
    let cold = top.iter().map(|s| s.cold_pivots as f64).sum::<f64>() / top.len() as f64;
    let warm = top.iter().map(|s| s.warm_pivots as f64).sum::<f64>() / top.len() as f64;
    rep.check(
        "fewer warm pivots in the upper half",
        warm < cold,
        format!("mean pivots for M in 26..=50: warm {warm:.2}, cold {cold:.2}"),
    );
    rep
}

fn sparse_feasible_points(a: &DenseMatrix, y: &[f64], kmax: usize) -> Result<Vec<Vec<f64>>> {
    let n = a.cols();
    let mut supports: Vec<Vec<usize>> = vec![vec![]];
    for i in 0..n {
        let extra: Vec<Vec<usize>> = supports
            .iter()
            .filter(|s| s.len() < kmax)
            .map(|s| {
                let mut t = s.clone();
                t.push(i);
                t
            })
            .collect();
        supports.extend(extra);
    }
    let mut out = Vec::new();
    for s in supports {
        let mut x = vec![0.0; n];
        if !s.is_empty() {
            let coef = least_squares(&a.select_columns(&s), y)?;
            for (&j, c) in s.iter().zip(&coef) {
                x[j] = *c;
            }
        }
        if norm2(&sub(&a.mul_vec(&x), y)) < 1e-9 * (1.0 + norm2(y)) {
            out.push(x);
        }
    }
    Ok(out)
}

fn random_system(s: &mut RandomStream, m: usize, n: usize, k: usize) -> (DenseMatrix, Vec<f64>) {
    let rows: Vec<Vec<f64>> = (0..m).map(|_| draw_row(EnsembleKind::Gaussian, n, s)).collect();
    let a = DenseMatrix::from_rows(&rows, n).expect("consistent rows");
    let mut x = vec![0.0; n];
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + (s.standard_normal().abs() * 1e6) as usize % (n - i);
        idx.swap(i, j);
        x[idx[i]] = s.standard_normal() + s.sign();
    }
    let y = a.mul_vec(&x);
    (a, y)
}

pub fn solver_oracles(_scale: Scale) -> CriterionReport {
    const NAME: &str = "solver oracles";
    let mut rep = CriterionReport::new(10, NAME);
    let mut s = RandomStream::from_seed(10_000);

    let mut mismatches = Vec::new();
    for inst in 0..50 {
        let n = 8 + inst % 5;
        let k = 1 + inst % 2;
        let (a, y) = random_system(&mut s, n - 2, n, k);
        let bp = match basis_pursuit(&a, &y) {
            Ok(r) => r,
            Err(e) => return CriterionReport::error(10, NAME, e),
        };
        let oracle = match sparse_feasible_points(&a, &y, k) {
            Ok(o) => o,
            Err(e) => return CriterionReport::error(10, NAME, e),
        };
        let sparsest = oracle
            .iter()
            .min_by_key(|x| x.iter().filter(|v| v.abs() > 1e-9).count())
            .cloned();
        let ok = oracle.len() == 1 && sparsest.is_some_and(|x| distance(&x, &bp.solution) <= 1e-6);
        if !ok {
            mismatches.push(inst);
        }
    }
    rep.check(
        "basis pursuit vs l0 enumeration",
        mismatches.is_empty(),
        format!("50 instances with N in 8..=12, K <= 2, M = N - 2; mismatches {mismatches:?}"),
    );

    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (a, mut y) = random_system(&mut s, 20, 40, 4);
        y.iter_mut().for_each(|v| *v += 0.01 * s.standard_normal());
        let lambda = lambda_schedule(20, 40, 0.014);
        match bpdn(&a, &y, lambda, &BpdnOptions::default()) {
            Ok(r) => worst = worst.max(bpdn_optimality_residual(&a, &y, lambda, &r.solution) / lambda),
            Err(e) => return CriterionReport::error(10, NAME, e),
        }
    }
    rep.check(
        "bpdn subgradient optimality",
        worst <= 1e-6,
        format!("max residual / lambda {worst:.2e} over 50 instances"),
    );

    let mut bad = 0;
    let mut succeeded = 0;
    let tol = 1e-10;
    for _ in 0..50 {
        let (a, y) = random_system(&mut s, 20, 40, 4);
        match omp(&a, &y, tol) {
            Ok(r) => {
                if r.converged {
                    succeeded += 1;
                    let res = norm2(&sub(&a.mul_vec(&r.solution), &y));
                    if res > tol * (1.0 + norm2(&y)) {
                        bad += 1;
                    }
                }
            }
            Err(e) => return CriterionReport::error(10, NAME, e),
        }
    }
    rep.check(
        "omp feasible when converged",
        bad == 0 && succeeded > 0,
        format!("{succeeded} of 50 converged, {bad} above tolerance"),
    );
    rep
}

static SCRATCH: AtomicUsize = AtomicUsize::new(0);

fn scratch_dir() -> PathBuf {
    let i = SCRATCH.fetch_add(1, Ordering::Relaxed);
    std::env::temp_dir().join(format!("seqcs-verify-{}-{i}", std::process::id()))
}

/// Runs a config twice (one worker, then all workers) and compares every CSV.
fn rerun_identical(mut cfg: ExperimentConfig) -> Result<(bool, usize)> {
    let (d1, d2) = (scratch_dir(), scratch_dir());
    cfg.out = d1.clone();
    let first = super::run_with_workers(&cfg, 1)?;
    cfg.out = d2.clone();
    super::run_with_workers(&cfg, 0)?;
    let mut same = !first.failed();
    for name in &first.manifest.outputs {
        same &= std::fs::read(d1.join(name))? == std::fs::read(d2.join(name))?;
    }
    let _ = std::fs::remove_dir_all(&d1);
    let _ = std::fs::remove_dir_all(&d2);
    Ok((same, first.manifest.outputs.len()))
}

pub fn trace_properties(scale: Scale) -> CriterionReport {
    const NAME: &str = "sequential trace properties";
    let mut rep = CriterionReport::new(11, NAME);
    let trials = scale.n(100) as u64;
    let mut sessions = Vec::new();
    for ensemble in [EnsembleKind::Gaussian, EnsembleKind::Bernoulli] {
        for rule in [RuleKind::Cardinality, RuleKind::TStepAgreement { t: 3 }] {
            for decoder in [DecoderKind::BasisPursuit, DecoderKind::BasisPursuitWarm] {
                let r: Result<Vec<_>> = (0..trials)
                    .into_par_iter()
                    .map(|t| {
                        let mut c = session(ensemble, 50, 5, rule, 11_000, t);
                        c.decoder = decoder;
                        run_session(c)
                    })
                    .collect();
                match r {
                    Ok(r) => sessions.extend(r),
                    Err(e) => return CriterionReport::error(11, NAME, e),
                }
            }
        }
    }
    let mut l1_bad = 0;
    let mut l0_bad = 0;
    let mut rows = 0;
    for s in &sessions {
        rows += s.trace.len();
        for w in s.trace.windows(2) {
            if w[1].l1 < w[0].l1 - 1e-7 * (1.0 + w[0].l1) {
                l1_bad += 1;
            }
        }
        l0_bad += s.trace.iter().filter(|r| r.l0 > r.m).count();
    }
    rep.check(
        "l1 non-decreasing",
        l1_bad == 0,
        format!("{l1_bad} decreases over {} traces ({rows} rows)", sessions.len()),
    );
    rep.check("l0 at most M", l0_bad == 0, format!("{l0_bad} violations over {rows} rows"));

    let mut identical = true;
    let mut files = 0;
    for (name, trials) in [("fig3", 3), ("fig1", 20), ("fig5", 4)] {
        let mut cfg = preset(name).expect("builtin preset");
        cfg.trials = trials;
        match rerun_identical(cfg) {
            Ok((same, n)) => {
                identical &= same;
                files += n;
            }
            Err(e) => return CriterionReport::error(11, NAME, e),
        }
    }
    rep.check(
        "byte-identical CSVs on rerun",
        identical && files > 0,
        format!("{files} CSV files compared between a serial and a parallel run"),
    );
    rep
}
