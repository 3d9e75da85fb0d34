//! Sequential acquisition: take measurements one at a time, re-decode, and
//! stop once a rule says the reconstruction can be trusted.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ensembles::{EnsembleKind, MeasurementRecord, MeasurementSource, SignalSpec};
use crate::error::{Error, Result};
use crate::estimators::{certify_chebyshev, chi2_interval, ErrorCertificate, HoldoutBatch};
use crate::linalg::{count_nonzeros, distance, dot, norm1, norm_inf, DenseMatrix};
use crate::solvers::{
    basis_pursuit, basis_pursuit_with_state, bpdn, lambda_schedule, omp, warm_start_add_row,
    BpdnOptions, LpStatus, SimplexOptions, SimplexState, SlackCost,
};

pub const AGREEMENT_TOL: f64 = 1e-8;

/// `|row . x_hat - value| <= eps (1 + |value|)`.
pub fn check_agreement(x_hat: &[f64], rec: &MeasurementRecord, eps: f64) -> bool {
    (dot(&rec.row, x_hat) - rec.value).abs() <= eps * (1.0 + rec.value.abs())
}

/// Threshold below which an entry of `x` counts as zero.
pub fn zero_tolerance(x: &[f64]) -> f64 {
    1e-8 * norm_inf(x).max(1.0)
}

/// Fires when fewer than `m` entries exceed `zero_tol` in magnitude.
pub fn cardinality_stop(x_hat: &[f64], m: usize, zero_tol: f64) -> bool {
    count_nonzeros(x_hat, zero_tol) < m
}

/// `2^-T`: bound on the chance that `T` Bernoulli rows all agree with a
/// wrong reconstruction.
pub fn t_step_rule_error_bound(t: u32) -> f64 {
    0.5f64.powi(t as i32)
}

/// Heuristic `max(0, 1 - N^2 2^(1-M))` confidence that the cardinality rule
/// is right for Bernoulli rows.
pub fn bernoulli_cardinality_confidence(n: usize, m: usize) -> f64 {
    let n = n as f64;
    (1.0 - n * n * 2f64.powf(1.0 - m as f64)).max(0.0)
}

/// Holdout certifier used by the error-tolerance rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Certifier {
    Chi2 { t: usize, alpha: f64 },
    ChebyshevCt { t: usize, k: f64 },
}

impl Certifier {
    pub fn holdout(&self) -> usize {
        match *self {
            Certifier::Chi2 { t, .. } | Certifier::ChebyshevCt { t, .. } => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RuleKind {
    OneStepAgreement,
    Cardinality,
    TStepAgreement { t: usize },
    ErrorBelow { tol: f64, certifier: Certifier },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    #[serde(flatten)]
    pub kind: RuleKind,
    #[serde(default = "default_agreement_tol")]
    pub agreement_tol: f64,
}

fn default_agreement_tol() -> f64 {
    AGREEMENT_TOL
}

impl StoppingRule {
    pub fn new(kind: RuleKind) -> Self {
        StoppingRule {
            kind,
            agreement_tol: AGREEMENT_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.agreement_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "agreement tolerance must be positive, got {}",
                self.agreement_tol
            )));
        }
        match self.kind {
            RuleKind::TStepAgreement { t } if t == 0 => {
                Err(Error::InvalidArgument("T-step agreement needs T >= 1".into()))
            }
            RuleKind::ErrorBelow { tol, certifier } => {
                if !(tol > 0.0) {
                    return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
                }
                match certifier {
                    Certifier::Chi2 { t, alpha } if t == 0 || !(alpha > 0.0 && alpha < 1.0) => Err(
                        Error::InvalidArgument(format!("chi2 certifier needs T >= 1 and alpha in (0,1), got T = {t}, alpha = {alpha}")),
                    ),
                    Certifier::ChebyshevCt { t, k } if t <= 2 || !(k > 0.0) => Err(
                        Error::InvalidArgument(format!("Chebyshev certifier needs T > 2 and k > 0, got T = {t}, k = {k}")),
                    ),
                    _ => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DecoderKind {
    /// Cold basis pursuit at every step.
    BasisPursuit,
    /// Basis pursuit warm-started from the previous basis.
    BasisPursuitWarm,
    Omp {
        #[serde(default = "default_omp_tol")]
        residual_tol: f64,
    },
    /// BPDN with `lambda = c sqrt(M ln N)`.
    Bpdn { c: f64 },
}

fn default_omp_tol() -> f64 {
    1e-10
}

impl DecoderKind {
    pub fn is_basis_pursuit(&self) -> bool {
        matches!(self, DecoderKind::BasisPursuit | DecoderKind::BasisPursuitWarm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    OneStepAgreement,
    Cardinality,
    TStepAgreement,
    ErrorBelow,
    BudgetExhausted,
}

impl StopReason {
    pub fn label(self) -> &'static str {
        match self {
            StopReason::OneStepAgreement => "one-step-agreement",
            StopReason::Cardinality => "cardinality",
            StopReason::TStepAgreement => "t-step-agreement",
            StopReason::ErrorBelow => "error-below",
            StopReason::BudgetExhausted => "budget-exhausted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub ensemble: EnsembleKind,
    pub signal: SignalSpec,
    #[serde(default)]
    pub noise_sigma: f64,
    pub decoder: DecoderKind,
    pub rule: StoppingRule,
    /// Measurement budget; defaults to `N + 10`.
    #[serde(default)]
    pub budget: Option<usize>,
    pub master_seed: u64,
    pub trial: u64,
}

impl SessionConfig {
    pub fn budget(&self) -> usize {
        self.budget.unwrap_or(self.signal.dim() + 10)
    }

    pub fn validate(&self) -> Result<()> {
        self.signal.validate()?;
        self.rule.validate()?;
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise sigma must be nonnegative, got {}",
                self.noise_sigma
            )));
        }
        if self.budget() == 0 {
            return Err(Error::InvalidArgument("budget must be at least 1".into()));
        }
        if let DecoderKind::Bpdn { c } = self.decoder {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument(format!("lambda constant must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub m: usize,
    pub l0: usize,
    pub l1: f64,
    pub err2: Option<f64>,
    pub agreed: bool,
    pub stopped: bool,
    pub reason: Option<StopReason>,
    /// Simplex pivots spent at this step (0 for other decoders or when no
    /// re-solve was needed).
    pub pivots: usize,
}

pub const TRACE_HEADER: [&str; 7] = ["M", "l0", "l1", "err2", "agreed", "stopped", "reason"];

pub fn write_trace_csv<W: Write>(trace: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in trace {
        w.write_record([
            r.m.to_string(),
            r.l0.to_string(),
            r.l1.to_string(),
            r.err2.map(|e| e.to_string()).unwrap_or_default(),
            r.agreed.to_string(),
            r.stopped.to_string(),
            r.reason.map(|s| s.label().to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    /// Measurements behind the final reconstruction, confirmations included.
    pub m_stop: usize,
    /// All measurements drawn, holdout rows included.
    pub measurements_used: usize,
    /// Agreement confirmations counted in `m_stop` (T-step rule only).
    pub confirmation_overhead: usize,
    pub reason: StopReason,
    pub reconstruction: Vec<f64>,
    pub signal: Vec<f64>,
    pub trace: Vec<TraceRow>,
    /// Final certificate under the error-tolerance rule.
    pub certificate: Option<ErrorCertificate>,
    /// Heuristic confidence when the cardinality rule fires on Bernoulli rows.
    pub heuristic_confidence: Option<f64>,
}

impl SessionResult {
    pub fn final_error(&self) -> f64 {
        distance(&self.reconstruction, &self.signal)
    }

    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        write_trace_csv(&self.trace, out)
    }
}

/// A decoder that is fed a growing measurement set.
pub struct IncrementalDecoder {
    kind: DecoderKind,
    warm: Option<SimplexState>,
    absorbed: usize,
}

impl IncrementalDecoder {
    pub fn new(kind: DecoderKind) -> Self {
        IncrementalDecoder {
            kind,
            warm: None,
            absorbed: 0,
        }
    }

    /// Decodes from all rows of `(a, y)`; returns the estimate and pivots
    /// spent. The warm variant assumes earlier calls saw a prefix of `a`.
    pub fn decode(&mut self, a: &DenseMatrix, y: &[f64]) -> Result<(Vec<f64>, usize)> {
        let n = a.cols();
        if a.rows() == 0 {
            return Ok((vec![0.0; n], 0));
        }
        match self.kind {
            DecoderKind::BasisPursuit => {
                let r = basis_pursuit(a, y)?;
                require_optimal(r.status)?;
                Ok((r.solution, r.iterations.total()))
            }
            DecoderKind::BasisPursuitWarm => {
                let mut pivots = 0;
                if self.warm.is_none() {
                    let (r, s) = basis_pursuit_with_state(a, y, &SimplexOptions::default())?;
                    require_optimal(r.status)?;
                    pivots += r.iterations.total();
                    self.warm = Some(s);
                    self.absorbed = a.rows();
                }
                while self.absorbed < a.rows() {
                    let i = self.absorbed;
                    let state = self.warm.as_ref().expect("warm state initialized above");
                    let (r, s) = warm_start_add_row(state, a.row(i), y[i], SlackCost::Lexicographic)?;
                    require_optimal(r.status)?;
                    pivots += r.iterations.total();
                    self.warm = Some(s);
                    self.absorbed += 1;
                }
                let state = self.warm.as_ref().expect("warm state initialized above");
                Ok((state.solution(), pivots))
            }
            DecoderKind::Omp { residual_tol } => Ok((omp(a, y, residual_tol)?.solution, 0)),
            DecoderKind::Bpdn { c } => {
                let lambda = lambda_schedule(a.rows(), n, c);
                Ok((bpdn(a, y, lambda, &BpdnOptions::default())?.solution, 0))
            }
        }
    }
}

fn require_optimal(status: LpStatus) -> Result<()> {
    match status {
        LpStatus::Optimal => Ok(()),
        LpStatus::Infeasible => Err(Error::Infeasible),
        LpStatus::Unbounded => Err(Error::Unbounded),
        LpStatus::IterationLimit => Err(Error::IterationLimit(0)),
    }
}

/// Live state of one acquisition session.
pub struct Session {
    config: SessionConfig,
    source: MeasurementSource,
    lookahead: VecDeque<MeasurementRecord>,
    a: DenseMatrix,
    y: Vec<f64>,
    decoder: IncrementalDecoder,
    x_hat: Vec<f64>,
    agree_count: usize,
    stopped: Option<StopReason>,
    certificate: Option<ErrorCertificate>,
    trace: Vec<TraceRow>,
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Self> {
        config.validate()?;
        let source = MeasurementSource::for_trial(
            config.ensemble,
            &config.signal,
            config.noise_sigma,
            config.master_seed,
            config.trial,
        )?;
        let n = config.signal.dim();
        let mut s = Session {
            decoder: IncrementalDecoder::new(config.decoder),
            config,
            source,
            lookahead: VecDeque::new(),
            a: DenseMatrix::zeros(0, n),
            y: Vec::new(),
            x_hat: vec![0.0; n],
            agree_count: 0,
            stopped: None,
            certificate: None,
            trace: Vec::new(),
        };
        s.record(false, 0);
        s.try_certify()?;
        Ok(s)
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn reconstruction(&self) -> &[f64] {
        &self.x_hat
    }

    pub fn signal(&self) -> &[f64] {
        self.source.signal()
    }

    pub fn measurements(&self) -> (&DenseMatrix, &[f64]) {
        (&self.a, &self.y)
    }

    pub fn stopped(&self) -> Option<StopReason> {
        self.stopped
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn consecutive_agreements(&self) -> usize {
        self.agree_count
    }

    fn next_record(&mut self) -> MeasurementRecord {
        self.lookahead
            .pop_front()
            .unwrap_or_else(|| self.source.next_record())
    }

    fn record(&mut self, agreed: bool, pivots: usize) {
        let tol = zero_tolerance(&self.x_hat);
        self.trace.push(TraceRow {
            m: self.m(),
            l0: count_nonzeros(&self.x_hat, tol),
            l1: norm1(&self.x_hat),
            err2: Some(distance(&self.x_hat, self.source.signal())),
            agreed,
            stopped: self.stopped.is_some(),
            reason: self.stopped,
            pivots,
        });
    }

    /// Certifies the current estimate against the next `T` unseen
    /// measurements, which stay queued as future measurements.
    fn try_certify(&mut self) -> Result<()> {
        let RuleKind::ErrorBelow { tol, certifier } = self.config.rule.kind else {
            return Ok(());
        };
        let t = certifier.holdout();
        let (m, n) = (self.m(), self.a.cols());
        if m + t > self.config.budget() {
            return Ok(());
        }
        if matches!(certifier, Certifier::ChebyshevCt { .. }) && m + t > n {
            return Ok(());
        }
        while self.lookahead.len() < t {
            let r = self.source.next_record();
            self.lookahead.push_back(r);
        }
        let records: Vec<MeasurementRecord> = self.lookahead.iter().take(t).cloned().collect();
        let batch = HoldoutBatch::new(records, &self.x_hat)?;
        let cert = match certifier {
            Certifier::Chi2 { alpha, .. } => {
                chi2_interval(&batch, alpha, self.config.noise_sigma, self.config.ensemble)?.at_step(m)
            }
            Certifier::ChebyshevCt { k, .. } => certify_chebyshev(&self.a, &self.y, &batch, &self.x_hat, k)?,
        };
        let pass = cert.upper_bound <= tol;
        self.certificate = Some(cert);
        if pass {
            self.stopped = Some(StopReason::ErrorBelow);
            if let Some(last) = self.trace.last_mut() {
                last.stopped = true;
                last.reason = self.stopped;
            }
        }
        Ok(())
    }

    /// Takes one measurement and applies the rule. Returns `true` once the
    /// session has stopped.
    pub fn step(&mut self) -> Result<bool> {
        if self.stopped.is_some() {
            return Ok(true);
        }
        if self.m() >= self.config.budget() {
            self.stopped = Some(StopReason::BudgetExhausted);
            if let Some(last) = self.trace.last_mut() {
                last.stopped = true;
                last.reason = self.stopped;
            }
            return Ok(true);
        }
        let rec = self.next_record();
        let eps = self.config.rule.agreement_tol;
        let agreed = check_agreement(&self.x_hat, &rec, eps);
        self.a.push_row(&rec.row)?;
        self.y.push(rec.value);
        let m = self.m();

        let skip_decode = match self.config.rule.kind {
            RuleKind::OneStepAgreement | RuleKind::TStepAgreement { .. } => agreed,
            _ => false,
        };
        let mut pivots = 0;
        if !skip_decode {
            let (x, p) = self.decoder.decode(&self.a, &self.y)?;
            self.x_hat = x;
            pivots = p;
        }

        match self.config.rule.kind {
            RuleKind::OneStepAgreement => {
                if agreed {
                    self.stopped = Some(StopReason::OneStepAgreement);
                }
            }
            RuleKind::TStepAgreement { t } => {
                self.agree_count = if agreed { self.agree_count + 1 } else { 0 };
                if self.agree_count >= t {
                    self.stopped = Some(StopReason::TStepAgreement);
                }
            }
            RuleKind::Cardinality => {
                if cardinality_stop(&self.x_hat, m, zero_tolerance(&self.x_hat)) {
                    self.stopped = Some(StopReason::Cardinality);
                }
            }
            RuleKind::ErrorBelow { .. } => {}
        }
        self.record(agreed, pivots);
        self.try_certify()?;
        Ok(self.stopped.is_some())
    }

    pub fn run(mut self) -> Result<SessionResult> {
        while !self.step()? {}
        Ok(self.finish())
    }

    fn finish(self) -> SessionResult {
        let reason = self.stopped.unwrap_or(StopReason::BudgetExhausted);
        let m_stop = self.m();
        let confirmation_overhead = match (reason, self.config.rule.kind) {
            (StopReason::TStepAgreement, RuleKind::TStepAgreement { t }) => t,
            _ => 0,
        };
        let measurements_used = match (reason, self.config.rule.kind) {
            (StopReason::ErrorBelow, RuleKind::ErrorBelow { certifier, .. }) => m_stop + certifier.holdout(),
            _ => m_stop,
        };
        let heuristic_confidence = (reason == StopReason::Cardinality
            && self.config.ensemble == EnsembleKind::Bernoulli)
            .then(|| bernoulli_cardinality_confidence(self.a.cols(), m_stop));
        SessionResult {
            m_stop,
            measurements_used,
            confirmation_overhead,
            reason,
            reconstruction: self.x_hat,
            signal: self.source.signal().to_vec(),
            trace: self.trace,
            certificate: self.certificate,
            heuristic_confidence,
        }
    }
}

pub fn run_session(config: SessionConfig) -> Result<SessionResult> {
    Session::new(config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::RandomStream;

    fn config(ensemble: EnsembleKind, n: usize, k: usize, rule: RuleKind, decoder: DecoderKind) -> SessionConfig {
        SessionConfig {
            ensemble,
            signal: SignalSpec::ExactSparse { n, k },
            noise_sigma: 0.0,
            decoder,
            rule: StoppingRule::new(rule),
            budget: None,
            master_seed: 2024,
            trial: 0,
        }
    }

    #[test]
    fn simple_rules() {
        let rec = MeasurementRecord { row: vec![1.0, 2.0], value: 5.0, noise_sigma: 0.0 };
        assert!(check_agreement(&[1.0, 2.0], &rec, AGREEMENT_TOL));
        assert!(!check_agreement(&[1.0, 2.1], &rec, AGREEMENT_TOL));
        assert!(cardinality_stop(&[0.0; 4], 1, 1e-8));
        assert!(!cardinality_stop(&[1.0, 0.0, 2.0], 2, 1e-8));
        assert!(cardinality_stop(&[1.0, 0.0, 2.0], 3, 1e-8));
        assert_eq!(t_step_rule_error_bound(1), 0.5);
        assert!((t_step_rule_error_bound(10) - 0.000977).abs() < 1e-6);
        assert!((bernoulli_cardinality_confidence(100, 30) - 0.999981).abs() < 1e-6);
        assert_eq!(bernoulli_cardinality_confidence(100, 10), 0.0);
        assert_eq!(bernoulli_cardinality_confidence(1, 2), 0.5);
    }

    #[test]
    fn bernoulli_two_entry_agreement_is_half() {
        // delta = (1, -1, 0, ...): a . delta = a_0 - a_1 vanishes for half the sign patterns.
        let n = 12;
        let mut s = RandomStream::from_seed(3);
        let x_true = vec![0.0; n];
        let mut x_hat = vec![0.0; n];
        x_hat[0] = 1.0;
        x_hat[1] = -1.0;
        let trials = 20_000;
        let hits = (0..trials)
            .filter(|_| {
                let row = crate::ensembles::draw_row(EnsembleKind::Bernoulli, n, &mut s);
                let rec = MeasurementRecord { value: dot(&row, &x_true), row, noise_sigma: 0.0 };
                check_agreement(&x_hat, &rec, AGREEMENT_TOL)
            })
            .count();
        let p = hits as f64 / trials as f64;
        assert!((p - 0.5).abs() < 3.0 * (0.25 / trials as f64).sqrt() + 1e-3, "{p}");
    }

    #[test]
    fn zero_signal_stops_immediately() {
        let r = run_session(config(EnsembleKind::Gaussian, 20, 0, RuleKind::Cardinality, DecoderKind::BasisPursuit)).unwrap();
        assert_eq!(r.m_stop, 1);
        assert_eq!(r.reason, StopReason::Cardinality);
        assert!(r.reconstruction.iter().all(|v| *v == 0.0));
        assert_eq!(r.trace.len(), 2);
    }

    #[test]
    fn one_step_agreement_recovers() {
        let r = run_session(config(EnsembleKind::Gaussian, 40, 4, RuleKind::OneStepAgreement, DecoderKind::BasisPursuit)).unwrap();
        assert_eq!(r.reason, StopReason::OneStepAgreement);
        assert!(r.final_error() <= 1e-6, "{}", r.final_error());
        assert_eq!(r.trace.len(), r.m_stop + 1);
        let last = r.trace.last().unwrap();
        assert!(last.agreed && last.stopped);
        assert!(r.m_stop >= 4);
    }

    #[test]
    fn warm_and_cold_traces_agree() {
        let cold = run_session(config(EnsembleKind::Gaussian, 40, 4, RuleKind::Cardinality, DecoderKind::BasisPursuit)).unwrap();
        let warm = run_session(config(EnsembleKind::Gaussian, 40, 4, RuleKind::Cardinality, DecoderKind::BasisPursuitWarm)).unwrap();
        assert_eq!(cold.m_stop, warm.m_stop);
        for (a, b) in cold.trace.iter().zip(&warm.trace) {
            assert!((a.l1 - b.l1).abs() <= 1e-7 * (1.0 + a.l1));
        }
    }

    #[test]
    fn t_step_counts_confirmations() {
        let r = run_session(config(EnsembleKind::Bernoulli, 40, 4, RuleKind::TStepAgreement { t: 3 }, DecoderKind::BasisPursuit)).unwrap();
        assert_eq!(r.reason, StopReason::TStepAgreement);
        assert_eq!(r.confirmation_overhead, 3);
        assert!(r.trace[r.trace.len() - 3..].iter().all(|row| row.agreed));
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let mut c = config(EnsembleKind::Gaussian, 40, 10, RuleKind::OneStepAgreement, DecoderKind::BasisPursuit);
        c.budget = Some(5);
        let r = run_session(c).unwrap();
        assert_eq!(r.reason, StopReason::BudgetExhausted);
        assert_eq!(r.m_stop, 5);
        assert_eq!(r.measurements_used, 5);
    }

    #[test]
    fn error_below_rule_stops_with_certificate() {
        let rule = RuleKind::ErrorBelow { tol: 1e-6, certifier: Certifier::Chi2 { t: 5, alpha: 0.1 } };
        let r = run_session(config(EnsembleKind::Gaussian, 40, 3, rule, DecoderKind::BasisPursuit)).unwrap();
        assert_eq!(r.reason, StopReason::ErrorBelow);
        assert_eq!(r.measurements_used, r.m_stop + 5);
        assert!(r.certificate.as_ref().unwrap().upper_bound <= 1e-6);
        assert!(r.final_error() <= 1e-6);
    }

    #[test]
    fn error_below_chebyshev() {
        let rule = RuleKind::ErrorBelow { tol: 1e-6, certifier: Certifier::ChebyshevCt { t: 5, k: 3.0 } };
        let r = run_session(config(EnsembleKind::Gaussian, 40, 3, rule, DecoderKind::BasisPursuitWarm)).unwrap();
        assert_eq!(r.reason, StopReason::ErrorBelow);
        assert!(r.final_error() <= 1e-6);
    }

    #[test]
    fn other_decoders_run() {
        let r = run_session(config(EnsembleKind::Gaussian, 40, 3, RuleKind::OneStepAgreement, DecoderKind::Omp { residual_tol: 1e-10 })).unwrap();
        assert_eq!(r.reason, StopReason::OneStepAgreement);
        assert!(r.final_error() <= 1e-6);
        let mut c = config(EnsembleKind::Gaussian, 30, 3, RuleKind::Cardinality, DecoderKind::Bpdn { c: 0.01 });
        c.noise_sigma = 0.01;
        c.budget = Some(20);
        let r = run_session(c).unwrap();
        assert!(r.m_stop <= 20);
    }

    #[test]
    fn rejects_bad_rules() {
        assert!(StoppingRule::new(RuleKind::TStepAgreement { t: 0 }).validate().is_err());
        let mut r = StoppingRule::new(RuleKind::Cardinality);
        r.agreement_tol = 0.0;
        assert!(r.validate().is_err());
        let c = Certifier::ChebyshevCt { t: 2, k: 3.0 };
        assert!(StoppingRule::new(RuleKind::ErrorBelow { tol: 0.1, certifier: c }).validate().is_err());
    }

    #[test]
    fn trace_csv_header_and_reproducibility() {
        let c = config(EnsembleKind::Gaussian, 30, 3, RuleKind::OneStepAgreement, DecoderKind::BasisPursuit);
        let mut a = Vec::new();
        let mut b = Vec::new();
        run_session(c.clone()).unwrap().write_trace_csv(&mut a).unwrap();
        run_session(c).unwrap().write_trace_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("M,l0,l1,err2,agreed,stopped,reason\n"));
    }

    #[test]
    fn config_toml_roundtrip() {
        let c = config(EnsembleKind::Bernoulli, 30, 3, RuleKind::TStepAgreement { t: 4 }, DecoderKind::Bpdn { c: 0.02 });
        let text = toml::to_string(&c).unwrap();
        let back: SessionConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
