//! Python bindings for the `seqcs` toolkit.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use seqcs::ensembles::{EnsembleKind, SignalSpec};
use seqcs::estimators::{self, ErrorCertificate, HoldoutBatch};
use seqcs::sequential::{self, DecoderKind, RuleKind, SessionConfig, StoppingRule};
use seqcs::solvers::{self, SimplexOptions, SimplexState, SlackCost, SolveReport};
use seqcs::{harness, linalg, stats, DenseMatrix, Error};

create_exception!(pyseqcs, SeqcsError, PyException);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::DimensionMismatch(_) | Error::Config(_) | Error::NonFinite(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => SeqcsError::new_err(other.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DenseMatrix> {
    let cols = rows.first().map_or(0, Vec::len);
    DenseMatrix::from_rows(&rows, cols).map_err(to_py)
}

fn ensemble(name: &str) -> PyResult<EnsembleKind> {
    name.parse().map_err(to_py)
}

#[pyclass(name = "SolveReport", get_all, frozen)]
struct PySolveReport {
    solution: Vec<f64>,
    objective: f64,
    status: String,
    phase1: usize,
    phase2: usize,
    slack_removal: usize,
    dropped_rows: usize,
    cold_fallback: bool,
}

impl From<SolveReport> for PySolveReport {
    fn from(r: SolveReport) -> Self {
        PySolveReport {
            solution: r.solution,
            objective: r.objective,
            status: format!("{:?}", r.status),
            phase1: r.iterations.phase1,
            phase2: r.iterations.phase2,
            slack_removal: r.iterations.slack_removal,
            dropped_rows: r.dropped_rows,
            cold_fallback: r.cold_fallback,
        }
    }
}

#[pymethods]
impl PySolveReport {
    #[getter]
    fn pivots(&self) -> usize {
        self.phase1 + self.phase2 + self.slack_removal
    }

    fn __repr__(&self) -> String {
        format!(
            "SolveReport(status={}, objective={}, pivots={})",
            self.status,
            self.objective,
            self.pivots()
        )
    }
}

/// Basis pursuit that takes measurements one row at a time, re-optimizing
/// from the previous basis.
#[pyclass(name = "WarmStartSolver")]
struct PyWarmStartSolver {
    state: SimplexState,
}

#[pymethods]
impl PyWarmStartSolver {
    #[new]
    fn new(a: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<Self> {
        let (_, state) = solvers::basis_pursuit_with_state(&matrix(a)?, &y, &SimplexOptions::default()).map_err(to_py)?;
        Ok(PyWarmStartSolver { state })
    }

    fn add_row(&mut self, row: Vec<f64>, value: f64) -> PyResult<PySolveReport> {
        let (report, state) = solvers::warm_start_add_row(&self.state, &row, value, SlackCost::Lexicographic).map_err(to_py)?;
        self.state = state;
        Ok(report.into())
    }

    #[getter]
    fn solution(&self) -> Vec<f64> {
        self.state.solution()
    }

    #[getter]
    fn objective(&self) -> f64 {
        self.state.objective()
    }

    #[getter]
    fn rows(&self) -> usize {
        self.state.rows()
    }
}

#[pyclass(name = "Certificate", get_all, frozen)]
struct PyCertificate {
    m: usize,
    t: usize,
    point_estimate: f64,
    upper_bound: f64,
    confidence: f64,
    method: String,
    below_noise_floor: bool,
    approximate: bool,
}

impl From<ErrorCertificate> for PyCertificate {
    fn from(c: ErrorCertificate) -> Self {
        PyCertificate {
            m: c.m,
            t: c.t,
            point_estimate: c.point_estimate,
            upper_bound: c.upper_bound,
            confidence: c.confidence,
            method: c.method.label(),
            below_noise_floor: c.flags.below_noise_floor,
            approximate: c.flags.approximate,
        }
    }
}

#[pymethods]
impl PyCertificate {
    fn __repr__(&self) -> String {
        format!(
            "Certificate(method={}, point={}, bound={}, confidence={})",
            self.method, self.point_estimate, self.upper_bound, self.confidence
        )
    }
}

#[pyclass(name = "SessionResult", get_all, frozen)]
struct PySessionResult {
    m_stop: usize,
    measurements_used: usize,
    confirmation_overhead: usize,
    reason: String,
    reconstruction: Vec<f64>,
    signal: Vec<f64>,
    final_error: f64,
    /// `(M, l0, l1, err2)` per step.
    trace: Vec<(usize, usize, f64, f64)>,
}

#[pyfunction]
fn basis_pursuit(a: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<PySolveReport> {
    Ok(solvers::basis_pursuit(&matrix(a)?, &y).map_err(to_py)?.into())
}

#[pyfunction]
#[pyo3(signature = (a, y, residual_tol=1e-10))]
fn omp(a: Vec<Vec<f64>>, y: Vec<f64>, residual_tol: f64) -> PyResult<(Vec<f64>, Vec<usize>, bool)> {
    let r = solvers::omp(&matrix(a)?, &y, residual_tol).map_err(to_py)?;
    Ok((r.solution, r.support, r.converged))
}

#[pyfunction]
#[pyo3(signature = (a, y, lam, tol=1e-8))]
fn bpdn(a: Vec<Vec<f64>>, y: Vec<f64>, lam: f64, tol: f64) -> PyResult<(Vec<f64>, f64)> {
    let opts = solvers::BpdnOptions { tol, ..Default::default() };
    let r = solvers::bpdn(&matrix(a)?, &y, lam, &opts).map_err(to_py)?;
    Ok((r.solution, r.objective))
}

#[pyfunction]
fn lambda_schedule(m: usize, n: usize, c: f64) -> f64 {
    solvers::lambda_schedule(m, n, c)
}

#[pyfunction]
fn affine_distance(a: Vec<Vec<f64>>, y: Vec<f64>, x_hat: Vec<f64>) -> PyResult<f64> {
    linalg::affine_distance(&matrix(a)?, &y, &x_hat).map_err(to_py)
}

#[pyfunction]
fn chi2_cdf(x: f64, t: usize) -> f64 {
    stats::chi2_cdf(x, t)
}

#[pyfunction]
fn chi2_quantile(p: f64, t: usize) -> PyResult<f64> {
    stats::chi2_quantile(p, t).map_err(to_py)
}

/// Monte Carlo mean and variance of `C_T`.
#[pyfunction]
fn sample_ct(l: usize, t: usize, n_samples: usize, seed: u64) -> PyResult<(f64, f64)> {
    let s = stats::sample_ct(l, t, n_samples, seed).map_err(to_py)?;
    Ok((s.moments.mean, s.moments.variance))
}

#[pyfunction]
fn chebyshev_bound(d: f64, l: usize, t: usize, k: f64) -> PyResult<PyCertificate> {
    Ok(estimators::chebyshev_bound(d, l, t, k).map_err(to_py)?.into())
}

#[pyfunction]
#[pyo3(signature = (deviations, alpha=0.1, noise_sigma=0.0, ensemble="gaussian"))]
fn chi2_interval(deviations: Vec<f64>, alpha: f64, noise_sigma: f64, ensemble: &str) -> PyResult<PyCertificate> {
    let batch = HoldoutBatch::from_deviations(deviations);
    Ok(estimators::chi2_interval(&batch, alpha, noise_sigma, self::ensemble(ensemble)?)
        .map_err(to_py)?
        .into())
}

#[pyfunction]
#[pyo3(signature = (n, k, seed=0))]
fn generate_sparse_signal(n: usize, k: usize, seed: u64) -> PyResult<Vec<f64>> {
    seqcs::ensembles::generate_signal(&SignalSpec::ExactSparse { n, k }, seed).map_err(to_py)
}

fn parse_rule(rule: &str, t: usize) -> PyResult<RuleKind> {
    match rule {
        "one-step-agreement" => Ok(RuleKind::OneStepAgreement),
        "cardinality" => Ok(RuleKind::Cardinality),
        "t-step-agreement" => Ok(RuleKind::TStepAgreement { t }),
        other => Err(PyValueError::new_err(format!("unknown rule {other:?}"))),
    }
}

fn parse_decoder(decoder: &str) -> PyResult<DecoderKind> {
    match decoder {
        "basis-pursuit" => Ok(DecoderKind::BasisPursuit),
        "basis-pursuit-warm" => Ok(DecoderKind::BasisPursuitWarm),
        "omp" => Ok(DecoderKind::Omp { residual_tol: 1e-10 }),
        other => Err(PyValueError::new_err(format!("unknown decoder {other:?}"))),
    }
}

/// Runs one noiseless sequential session on an exactly sparse signal.
#[pyfunction]
#[pyo3(signature = (n, k, ensemble="gaussian", rule="one-step-agreement", t=1, decoder="basis-pursuit-warm", seed=0, trial=0, budget=None))]
#[allow(clippy::too_many_arguments)]
fn run_session(
    n: usize,
    k: usize,
    ensemble: &str,
    rule: &str,
    t: usize,
    decoder: &str,
    seed: u64,
    trial: u64,
    budget: Option<usize>,
) -> PyResult<PySessionResult> {
    let cfg = SessionConfig {
        ensemble: self::ensemble(ensemble)?,
        signal: SignalSpec::ExactSparse { n, k },
        noise_sigma: 0.0,
        decoder: parse_decoder(decoder)?,
        rule: StoppingRule::new(parse_rule(rule, t)?),
        budget,
        master_seed: seed,
        trial,
    };
    let r = sequential::run_session(cfg).map_err(to_py)?;
    Ok(PySessionResult {
        m_stop: r.m_stop,
        measurements_used: r.measurements_used,
        confirmation_overhead: r.confirmation_overhead,
        reason: r.reason.label().to_string(),
        final_error: r.final_error(),
        trace: r
            .trace
            .iter()
            .map(|row| (row.m, row.l0, row.l1, row.err2.unwrap_or(f64::NAN)))
            .collect(),
        reconstruction: r.reconstruction,
        signal: r.signal,
    })
}

/// Runs a preset or config file and returns the manifest as JSON text.
#[pyfunction]
#[pyo3(signature = (config, out, overrides=Vec::new()))]
fn run_experiment(py: Python<'_>, config: &str, out: &str, mut overrides: Vec<String>) -> PyResult<String> {
    overrides.push(format!("out = {:?}", out));
    let cfg = harness::load_config(config, &overrides).map_err(to_py)?;
    let summary = py.detach(|| harness::run(&cfg)).map_err(to_py)?;
    serde_json::to_string(&summary.manifest).map_err(|e| SeqcsError::new_err(e.to_string()))
}

#[pyfunction]
fn list_presets() -> Vec<&'static str> {
    harness::preset_names()
}

#[pymodule]
fn pyseqcs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SeqcsError", m.py().get_type::<SeqcsError>())?;
    m.add_class::<PySolveReport>()?;
    m.add_class::<PyWarmStartSolver>()?;
    m.add_class::<PyCertificate>()?;
    m.add_class::<PySessionResult>()?;
    m.add_function(wrap_pyfunction!(basis_pursuit, m)?)?;
    m.add_function(wrap_pyfunction!(omp, m)?)?;
    m.add_function(wrap_pyfunction!(bpdn, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(affine_distance, m)?)?;
    m.add_function(wrap_pyfunction!(chi2_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(chi2_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(sample_ct, m)?)?;
    m.add_function(wrap_pyfunction!(chebyshev_bound, m)?)?;
    m.add_function(wrap_pyfunction!(chi2_interval, m)?)?;
    m.add_function(wrap_pyfunction!(generate_sparse_signal, m)?)?;
    m.add_function(wrap_pyfunction!(run_session, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(list_presets, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_mapping() {
        Python::initialize();
        Python::attach(|py| {
            let e = to_py(Error::InvalidArgument("x".into()));
            assert!(e.is_instance_of::<PyValueError>(py));
            let e = to_py(Error::Infeasible);
            assert!(e.is_instance_of::<SeqcsError>(py));
        });
    }

    #[test]
    fn warm_solver_tracks_rows() {
        Python::initialize();
        let mut s = PyWarmStartSolver::new(vec![vec![1.0, 1.0, 0.0]], vec![1.0]).unwrap();
        let r = s.add_row(vec![0.0, 1.0, 1.0], 1.0).unwrap();
        assert_eq!(r.status, "Optimal");
        assert_eq!(s.rows(), 2);
        assert!((s.objective() - 1.0).abs() < 1e-12);
    }
}
