use super::*;
use crate::ensembles::{draw_row, generate_signal, EnsembleKind, RandomStream, SignalSpec};
use crate::error::Error;
use crate::linalg::{least_squares, norm1, norm2, norm_inf, sub, DenseMatrix};

fn gaussian(m: usize, n: usize, seed: u64) -> DenseMatrix {
    let mut s = RandomStream::from_seed(seed);
    let rows: Vec<Vec<f64>> = (0..m).map(|_| draw_row(EnsembleKind::Gaussian, n, &mut s)).collect();
    DenseMatrix::from_rows(&rows, n).unwrap()
}

/// All feasible points supported on at most `kmax` columns, by enumeration.
fn sparse_feasible_points(a: &DenseMatrix, y: &[f64], kmax: usize) -> Vec<Vec<f64>> {
    let n = a.cols();
    let mut out = Vec::new();
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
    for s in supports {
        let mut x = vec![0.0; n];
        if !s.is_empty() {
            let coef = least_squares(&a.select_columns(&s), y).unwrap();
            for (&j, c) in s.iter().zip(&coef) {
                x[j] = *c;
            }
        }
        if norm2(&sub(&a.mul_vec(&x), y)) < 1e-9 * (1.0 + norm2(y)) {
            out.push(x);
        }
    }
    out
}

fn assert_feasible(a: &DenseMatrix, y: &[f64], x: &[f64]) {
    let r = norm_inf(&sub(&a.mul_vec(x), y));
    assert!(r <= 1e-8 * (1.0 + norm_inf(y)), "residual {r}");
}

#[test]
fn identity_system() {
    let a = DenseMatrix::identity(4);
    let y = [1.0, -2.0, 0.0, 3.5];
    let rep = basis_pursuit(&a, &y).unwrap();
    assert_eq!(rep.status, LpStatus::Optimal);
    for (x, v) in rep.solution.iter().zip(&y) {
        assert!((x - v).abs() < 1e-12);
    }
    assert!((rep.objective - 6.5).abs() < 1e-12);
}

#[test]
fn single_row_prefers_larger_coefficient() {
    let a = DenseMatrix::new(1, 2, vec![2.0, 1.0]).unwrap();
    let rep = basis_pursuit(&a, &[2.0]).unwrap();
    assert!((rep.solution[0] - 1.0).abs() < 1e-12 && rep.solution[1].abs() < 1e-12);
    assert!((rep.objective - 1.0).abs() < 1e-12);
}

#[test]
fn recovers_two_sparse_signal_confirmed_by_enumeration() {
    let a = gaussian(6, 8, 31);
    let mut x = vec![0.0; 8];
    x[2] = 1.3;
    x[6] = -0.4;
    let y = a.mul_vec(&x);
    let sparse = sparse_feasible_points(&a, &y, 2);
    assert_eq!(sparse.len(), 1);
    assert!(norm2(&sub(&sparse[0], &x)) < 1e-9);
    let rep = basis_pursuit(&a, &y).unwrap();
    assert!(norm2(&sub(&rep.solution, &x)) < 1e-7);
}

#[test]
fn inconsistent_rows_are_infeasible() {
    let a = DenseMatrix::new(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
    assert_eq!(basis_pursuit(&a, &[1.0, 2.0]), Err(Error::Infeasible));
}

#[test]
fn redundant_row_is_dropped() {
    let a = DenseMatrix::new(3, 3, vec![1.0, 2.0, 0.0, 0.0, 1.0, 1.0, 1.0, 3.0, 1.0]).unwrap();
    let x = [0.5, 0.0, -1.0];
    let y = a.mul_vec(&x);
    let rep = basis_pursuit(&a, &y).unwrap();
    assert_eq!(rep.dropped_rows, 1);
    assert_feasible(&a, &y, &rep.solution);
}

#[test]
fn basic_solution_structure() {
    for seed in 0..10 {
        let a = gaussian(15, 40, 100 + seed);
        let y: Vec<f64> = a.row(0).iter().take(15).copied().collect();
        let (rep, st) = basis_pursuit_with_state(&a, &y, &SimplexOptions::default()).unwrap();
        assert_feasible(&a, &y, &rep.solution);
        assert!(rep.solution.iter().filter(|v| v.abs() > 1e-9).count() <= 15);
        let (p, m) = st.split_solution();
        for (u, v) in p.iter().zip(&m) {
            assert!(u * v <= 1e-12);
        }
        assert!((rep.objective - norm1(&rep.solution)).abs() < 1e-9);
    }
}

#[test]
fn duplicate_row_keeps_solution() {
    let a = gaussian(5, 12, 3);
    let y: Vec<f64> = (0..5).map(|i| i as f64 - 1.5).collect();
    let (rep, st) = basis_pursuit_with_state(&a, &y, &SimplexOptions::default()).unwrap();
    let (warm, next) = warm_start_add_row(&st, a.row(2), y[2], SlackCost::Lexicographic).unwrap();
    assert_eq!(warm.iterations.phase2, 0);
    assert_eq!(warm.iterations.phase1, 0);
    assert_eq!(next.rows(), 5);
    for (u, v) in warm.solution.iter().zip(&rep.solution) {
        assert!((u - v).abs() < 1e-10);
    }
}

#[test]
fn inconsistent_new_row_leaves_slack() {
    let a = DenseMatrix::new(1, 2, vec![1.0, 0.0]).unwrap();
    let (_, st) = basis_pursuit_with_state(&a, &[1.0], &SimplexOptions::default()).unwrap();
    let err = warm_start_add_row(&st, &[1.0, 0.0], 2.0, SlackCost::Lexicographic).unwrap_err();
    assert!(matches!(err, Error::SlackStuck(z) if (z - 1.0).abs() < 1e-12));
}

fn warm_sequence(n: usize, k: usize, m_lo: usize, m_hi: usize, seed: u64, cost: SlackCost) {
    let x = generate_signal(&SignalSpec::ExactSparse { n, k }, seed).unwrap();
    let mut s = RandomStream::from_seed(seed + 1);
    let rows: Vec<Vec<f64>> = (0..m_hi).map(|_| draw_row(EnsembleKind::Gaussian, n, &mut s)).collect();
    let a_all = DenseMatrix::from_rows(&rows, n).unwrap();
    let y_all = a_all.mul_vec(&x);
    let (_, mut st) =
        basis_pursuit_with_state(&a_all.top_rows(m_lo), &y_all[..m_lo], &SimplexOptions::default()).unwrap();
    let mut prev_obj = st.objective();
    for m in m_lo..m_hi {
        let (warm, next) = warm_start_add_row(&st, &rows[m], y_all[m], cost).unwrap();
        let cold = basis_pursuit(&a_all.top_rows(m + 1), &y_all[..=m]).unwrap();
        let rel = (warm.objective - cold.objective).abs() / cold.objective.max(1e-12);
        assert!(rel <= 1e-7, "M={} warm {} cold {}", m + 1, warm.objective, cold.objective);
        assert_feasible(&a_all.top_rows(m + 1), &y_all[..=m], &warm.solution);
        assert!(warm.objective >= prev_obj - 1e-7 * (1.0 + prev_obj));
        prev_obj = warm.objective;
        st = next;
    }
}

#[test]
fn warm_start_matches_cold_along_sequence() {
    for seed in [1, 2, 3] {
        warm_sequence(40, 4, 10, 30, seed, SlackCost::Lexicographic);
    }
}

#[test]
fn literal_big_m_also_works() {
    warm_sequence(30, 3, 5, 20, 9, SlackCost::Fixed(1e4));
}

#[test]
fn warm_start_rejects_wrong_length() {
    let a = gaussian(2, 4, 1);
    let (_, st) = basis_pursuit_with_state(&a, &[1.0, 1.0], &SimplexOptions::default()).unwrap();
    assert!(matches!(
        warm_start_add_row(&st, &[1.0], 0.0, SlackCost::Lexicographic),
        Err(Error::DimensionMismatch(_))
    ));
}
