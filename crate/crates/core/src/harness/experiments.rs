use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{ExperimentConfig, ExperimentKind};
use crate::ensembles::{
    trial_seed, EnsembleKind, MeasurementRecord, MeasurementSource, RandomStream, SignalSpec,
    StreamPurpose,
};
use crate::error::{Error, Result};
use crate::estimators::{
    certify_chebyshev, chi2_interval, jl_style_estimate, sin_theta_point_estimate,
    ErrorCertificate, HoldoutBatch,
};
use crate::linalg::{distance, min_norm_solution, norm1, norm2, DenseMatrix};
use crate::sequential::{run_session, IncrementalDecoder, SessionConfig, SessionResult};
use crate::solvers::{basis_pursuit, bpdn, lambda_schedule, BpdnOptions, LpStatus};
use crate::stats::{sample_ct, MomentReport};

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutcome {
    pub outputs: Vec<String>,
    pub failures: Vec<String>,
    pub notes: BTreeMap<String, serde_json::Value>,
}

struct CsvOut<'a> {
    dir: &'a Path,
    outcome: &'a mut ExperimentOutcome,
}

impl CsvOut<'_> {
    fn write<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let mut w = csv::Writer::from_writer(File::create(self.dir.join(name))?);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        self.outcome.outputs.push(name.to_string());
        Ok(())
    }
}

fn f(v: f64) -> String {
    v.to_string()
}

/// Splits per-trial results into successes and failure messages.
fn partition<T>(results: Vec<(String, Result<T>)>, failures: &mut Vec<String>) -> Vec<T> {
    let mut ok = Vec::new();
    for (label, r) in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => failures.push(format!("{label}: {e}")),
        }
    }
    ok
}

pub fn run_experiment(config: &ExperimentConfig, dir: &Path) -> Result<ExperimentOutcome> {
    let mut outcome = ExperimentOutcome::default();
    match config.experiment {
        ExperimentKind::StopHist => stop_hist(config, dir, &mut outcome)?,
        ExperimentKind::Trace => trace(config, dir, &mut outcome)?,
        ExperimentKind::CtMoments => ct_moments(config, dir, &mut outcome)?,
        ExperimentKind::ErrorBounds => error_bounds(config, dir, &mut outcome)?,
        ExperimentKind::EstimatorCompare => estimator_compare(config, dir, &mut outcome)?,
        ExperimentKind::NoisyBound => noisy_bound(config, dir, &mut outcome)?,
        ExperimentKind::WarmstartBench => warmstart_bench(config, dir, &mut outcome)?,
    }
    Ok(outcome)
}

fn session_config(config: &ExperimentConfig, ensemble: EnsembleKind, trial: u64) -> SessionConfig {
    SessionConfig {
        ensemble,
        signal: config.signal.clone(),
        noise_sigma: config.estimator.noise_sigma,
        decoder: config.decoder,
        rule: config.rule,
        budget: config.budget,
        master_seed: config.seed,
        trial,
    }
}

fn stop_hist(config: &ExperimentConfig, dir: &Path, outcome: &mut ExperimentOutcome) -> Result<()> {
    let jobs: Vec<(EnsembleKind, u64)> = config
        .ensembles
        .iter()
        .flat_map(|&e| (0..config.trials as u64).map(move |t| (e, t)))
        .collect();
    let results: Vec<(String, Result<(EnsembleKind, u64, SessionResult)>)> = jobs
        .par_iter()
        .map(|&(e, t)| {
            let r = run_session(session_config(config, e, t)).map(|s| (e, t, s));
            (format!("{} trial {t}", e.name()), r)
        })
        .collect();
    let ok = partition(results, &mut outcome.failures);
    let mut out = CsvOut { dir, outcome };
    out.write(
        "stop_times.csv",
        &["ensemble", "trial", "M_stop"],
        ok.iter().map(|(e, t, s)| [e.name().to_string(), t.to_string(), s.m_stop.to_string()]),
    )?;
    out.write(
        "sessions.csv",
        &["ensemble", "trial", "M_stop", "reason", "err2"],
        ok.iter().map(|(e, t, s)| {
            [
                e.name().to_string(),
                t.to_string(),
                s.m_stop.to_string(),
                s.reason.label().to_string(),
                f(s.final_error()),
            ]
        }),
    )?;
    Ok(())
}

fn trace(config: &ExperimentConfig, dir: &Path, outcome: &mut ExperimentOutcome) -> Result<()> {
    let ensemble = config.ensembles[0];
    let results: Vec<(String, Result<(u64, SessionResult)>)> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| (format!("trial {t}"), run_session(session_config(config, ensemble, t)).map(|s| (t, s))))
        .collect();
    for (t, s) in partition(results, &mut outcome.failures) {
        let name = format!("trace_{t}.csv");
        s.write_trace_csv(File::create(dir.join(&name))?)?;
        outcome.outputs.push(name);
        outcome
            .notes
            .insert(format!("trial_{t}_stop"), json!({"M_stop": s.m_stop, "reason": s.reason.label()}));
    }
    Ok(())
}

fn ct_moments(config: &ExperimentConfig, dir: &Path, outcome: &mut ExperimentOutcome) -> Result<()> {
    let est = &config.estimator;
    let results: Vec<(String, Result<_>)> = est
        .t_values
        .par_iter()
        .enumerate()
        .map(|(i, &t)| (format!("T = {t}"), sample_ct(est.l, t, est.samples, trial_seed(config.seed, i as u64))))
        .collect();
    let ok = partition(results, &mut outcome.failures);
    CsvOut { dir, outcome }.write(
        "ct_moments.csv",
        &["T", "sample_mean", "mean_estimate", "mean_bound", "sample_std", "std_bound"],
        ok.iter().map(|s| {
            [
                s.t.to_string(),
                f(s.moments.mean),
                f(s.mean_estimate),
                s.mean_bound.map(f).unwrap_or_default(),
                f(s.moments.std_dev()),
                s.var_bound.map(|v| f(v.max(0.0).sqrt())).unwrap_or_default(),
            ]
        }),
    )
}

/// Draws `count` records for one trial.
fn trial_records(
    ensemble: EnsembleKind,
    signal: &SignalSpec,
    noise_sigma: f64,
    seed: u64,
    trial: u64,
    count: usize,
) -> Result<(Vec<f64>, Vec<MeasurementRecord>)> {
    let mut src = MeasurementSource::for_trial(ensemble, signal, noise_sigma, seed, trial)?;
    let recs = (0..count).map(|_| src.next_record()).collect();
    Ok((src.signal().to_vec(), recs))
}

fn stack_records(recs: &[MeasurementRecord], n: usize) -> Result<(DenseMatrix, Vec<f64>)> {
    let rows: Vec<&[f64]> = recs.iter().map(|r| r.row.as_slice()).collect();
    let a = if rows.is_empty() {
        DenseMatrix::zeros(0, n)
    } else {
        DenseMatrix::from_rows(&rows, n)?
    };
    Ok((a, recs.iter().map(|r| r.value).collect()))
}

pub(crate) struct BoundRow {
    pub trial: u64,
    pub m: usize,
    pub err2: f64,
    pub certs: Vec<ErrorCertificate>,
}

fn sorted_values(config: &ExperimentConfig) -> Vec<usize> {
    let mut v = config.sweep_values();
    v.sort_unstable();
    v.dedup();
    v
}

pub(crate) fn error_bounds_trial(config: &ExperimentConfig, trial: u64) -> Result<Vec<BoundRow>> {
    let est = &config.estimator;
    let ensemble = config.ensembles[0];
    let values = sorted_values(config);
    let max_m = *values.last().expect("validated nonempty");
    let n = config.n();
    let (x, recs) = trial_records(ensemble, &config.signal, est.noise_sigma, config.seed, trial, max_m + est.t)?;
    let mut decoder = IncrementalDecoder::new(config.decoder);
    let mut out = Vec::with_capacity(values.len());
    for &m in &values {
        let (a_m, y_m) = stack_records(&recs[..m], n)?;
        let (x_hat, _) = decoder.decode(&a_m, &y_m)?;
        let batch = HoldoutBatch::new(recs[m..m + est.t].to_vec(), &x_hat)?;
        let cheb = certify_chebyshev(&a_m, &y_m, &batch, &x_hat, est.k)?;
        let chi = chi2_interval(&batch, est.alpha, est.noise_sigma, ensemble)?.at_step(m);
        out.push(BoundRow {
            trial,
            m,
            err2: distance(&x_hat, &x),
            certs: vec![cheb, chi],
        });
    }
    Ok(out)
}

fn write_certificates(out: &mut CsvOut<'_>, rows: &[BoundRow]) -> Result<()> {
    let mut header = vec!["trial"];
    header.extend(ErrorCertificate::CSV_HEADER);
    out.write(
        "certificates.csv",
        &header,
        rows.iter().flat_map(|r| {
            r.certs.iter().map(move |c| {
                let mut rec = vec![r.trial.to_string()];
                rec.extend(c.csv_record());
                rec
            })
        }),
    )
}

fn write_coverage(out: &mut CsvOut<'_>, rows: &[BoundRow]) -> Result<BTreeMap<String, (usize, usize, f64)>> {
    let mut tally: BTreeMap<String, (usize, usize, f64)> = BTreeMap::new();
    for r in rows {
        for c in &r.certs {
            let e = tally.entry(c.method.label()).or_insert((0, 0, c.confidence));
            e.0 += 1;
            e.1 += usize::from(c.covers(r.err2));
        }
    }
    out.write(
        "coverage.csv",
        &["method", "evaluations", "covered", "coverage", "nominal"],
        tally
            .iter()
            .map(|(m, (n, c, nominal))| [m.clone(), n.to_string(), c.to_string(), f(*c as f64 / *n as f64), f(*nominal)]),
    )?;
    Ok(tally)
}

fn error_bounds(config: &ExperimentConfig, dir: &Path, outcome: &mut ExperimentOutcome) -> Result<()> {
    let results: Vec<(String, Result<Vec<BoundRow>>)> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| (format!("trial {t}"), error_bounds_trial(config, t)))
        .collect();
    let rows: Vec<BoundRow> = partition(results, &mut outcome.failures).into_iter().flatten().collect();
    let mut out = CsvOut { dir, outcome };
    write_certificates(&mut out, &rows)?;
    out.write(
        "truth.csv",
        &["trial", "M", "err2"],
        rows.iter().map(|r| [r.trial.to_string(), r.m.to_string(), f(r.err2)]),
    )?;
    let tally = write_coverage(&mut out, &rows)?;
    for (m, (n, c, nominal)) in tally {
        outcome
            .notes
            .insert(format!("coverage {m}"), json!({"evaluations": n, "covered": c, "nominal": nominal}));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorTrial {
    pub m: usize,
    pub trial: u64,
    pub true_error: f64,
    pub jl: f64,
    pub sin_theta: f64,
}

/// One draw of the estimator comparison: a unit-norm error `delta` in the
/// null space of the first `M` rows, estimated from `T` further rows by the
/// JL-style and the sin-theta estimators.
pub fn estimator_trial(
    ensemble: EnsembleKind,
    signal: &SignalSpec,
    t: usize,
    m: usize,
    seed: u64,
    trial: u64,
) -> Result<EstimatorTrial> {
    let n = signal.dim();
    if m + t > n {
        return Err(Error::InvalidArgument(format!("M + T = {} exceeds N = {n}", m + t)));
    }
    let (x, recs) = trial_records(ensemble, signal, 0.0, seed, trial, m + t)?;
    let (a_all, y_all) = stack_records(&recs, n)?;
    let mut aux = RandomStream::for_trial(seed, trial, StreamPurpose::Auxiliary);
    let g: Vec<f64> = (0..n).map(|_| aux.standard_normal()).collect();
    let mut delta = if m == 0 {
        g
    } else {
        let a_m = a_all.top_rows(m);
        let p = min_norm_solution(&a_m, &a_m.mul_vec(&g))?;
        g.iter().zip(&p).map(|(a, b)| a - b).collect()
    };
    let nrm = norm2(&delta);
    delta.iter_mut().for_each(|v| *v /= nrm);
    let x_hat: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + b).collect();
    let batch = HoldoutBatch::new(recs[m..].to_vec(), &x_hat)?;
    Ok(EstimatorTrial {
        m,
        trial,
        true_error: distance(&x_hat, &x),
        jl: jl_style_estimate(&batch),
        sin_theta: sin_theta_point_estimate(&a_all, &y_all, &x_hat, n - m, t)?,
    })
}

fn estimator_compare(config: &ExperimentConfig, dir: &Path, outcome: &mut ExperimentOutcome) -> Result<()> {
    let est = &config.estimator;
    let values = config.sweep_values();
    let jobs: Vec<(usize, u64)> = values
        .iter()
        .flat_map(|&m| (0..config.trials as u64).map(move |t| (m, t)))
        .collect();
    let results: Vec<(String, Result<EstimatorTrial>)> = jobs
        .par_iter()
        .map(|&(m, t)| {
            (
                format!("M = {m} trial {t}"),
                estimator_trial(config.ensembles[0], &config.signal, est.t, m, config.seed, t),
            )
        })
        .collect();
    let ok = partition(results, &mut outcome.failures);
    let mut out = CsvOut { dir, outcome };
    out.write(
        "estimates.csv",
        &["M", "trial", "true_error", "jl", "sin_theta"],
        ok.iter().map(|r| [r.m.to_string(), r.trial.to_string(), f(r.true_error), f(r.jl), f(r.sin_theta)]),
    )?;
    let mut summary = Vec::new();
    for &m in &values {
        let jl: Vec<f64> = ok.iter().filter(|r| r.m == m).map(|r| r.jl).collect();
        let st: Vec<f64> = ok.iter().filter(|r| r.m == m).map(|r| r.sin_theta).collect();
        if jl.len() < 2 {
            continue;
        }
        let a = MomentReport::from_samples(&jl, 1.0)?;
        let b = MomentReport::from_samples(&st, 1.0)?;
        let gap = (b.std_dev() - a.std_dev()).abs() / a.std_dev();
        summary.push([
            m.to_string(),
            jl.len().to_string(),
            f(a.mean),
            f(a.std_dev()),
            f(b.mean),
            f(b.std_dev()),
            f(gap),
            f(est.agreement_threshold),
            (gap < est.agreement_threshold).to_string(),
        ]);
    }
    out.write(
        "summary.csv",
        &["M", "trials", "jl_mean", "jl_std", "sin_theta_mean", "sin_theta_std", "rel_std_gap", "threshold", "same_accuracy"],
        summary,
    )?;
    outcome
        .notes
        .insert("agreement_threshold".into(), json!(est.agreement_threshold));
    Ok(())
}

fn noisy_trial(config: &ExperimentConfig, c: f64, trial: u64, values: &[usize]) -> Result<Vec<BoundRow>> {
    let est = &config.estimator;
    let ensemble = config.ensembles[0];
    let n = config.n();
    let max_m = *values.last().expect("validated nonempty");
    let (x, recs) = trial_records(ensemble, &config.signal, est.noise_sigma, config.seed, trial, max_m + est.t)?;
    let mut out = Vec::with_capacity(values.len());
    for &m in values {
        let x_hat = if m == 0 {
            vec![0.0; n]
        } else {
            let (a_m, y_m) = stack_records(&recs[..m], n)?;
            bpdn(&a_m, &y_m, lambda_schedule(m, n, c), &BpdnOptions::default())?.solution
        };
        let batch = HoldoutBatch::new(recs[m..m + est.t].to_vec(), &x_hat)?;
        let cert = chi2_interval(&batch, est.alpha, est.noise_sigma, ensemble)?.at_step(m);
        out.push(BoundRow {
            trial,
            m,
            err2: distance(&x_hat, &x),
            certs: vec![cert],
        });
    }
    Ok(out)
}

/// Picks `c` from a grid around `sigma sqrt(2)` by the mean final error of a
/// calibration trial outside the run's trial range, over the upper half of
/// the sweep.
fn calibrate_lambda(config: &ExperimentConfig, values: &[usize]) -> Result<(f64, Vec<(f64, f64)>)> {
    let base = config.estimator.noise_sigma * 2f64.sqrt();
    let upper: Vec<usize> = values[values.len() / 2..].to_vec();
    let calib_trial = config.trials as u64 + 1_000_000;
    let grid: Vec<f64> = [0.25, 0.5, 1.0, 2.0, 4.0].iter().map(|s| s * base).collect();
    let scores: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&c| {
            let rows = noisy_trial(config, c, calib_trial, &upper)?;
            Ok((c, rows.iter().map(|r| r.err2).sum::<f64>() / rows.len() as f64))
        })
        .collect::<Result<_>>()?;
    let best = scores
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty grid");
    Ok((best.0, scores))
}

fn noisy_bound(config: &ExperimentConfig, dir: &Path, outcome: &mut ExperimentOutcome) -> Result<()> {
    let values = sorted_values(config);
    let c = match config.estimator.lambda_c {
        Some(c) => c,
        None => {
            let (c, scores) = calibrate_lambda(config, &values)?;
            outcome.notes.insert(
                "lambda_c_calibration".into(),
                json!(scores.iter().map(|(c, e)| json!({"c": c, "mean_err2": e})).collect::<Vec<_>>()),
            );
            c
        }
    };
    outcome.notes.insert("lambda_c".into(), json!(c));
    let results: Vec<(String, Result<Vec<BoundRow>>)> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| (format!("trial {t}"), noisy_trial(config, c, t, &values)))
        .collect();
    let rows: Vec<BoundRow> = partition(results, &mut outcome.failures).into_iter().flatten().collect();
    let mut out = CsvOut { dir, outcome };
    out.write(
        "noisy_bound.csv",
        &["trial", "M", "err2", "point", "bound", "below_noise_floor"],
        rows.iter().map(|r| {
            let c = &r.certs[0];
            [
                r.trial.to_string(),
                r.m.to_string(),
                f(r.err2),
                f(c.point_estimate),
                f(c.upper_bound),
                c.flags.below_noise_floor.to_string(),
            ]
        }),
    )?;
    write_certificates(&mut out, &rows)?;
    write_coverage(&mut out, &rows)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarmstartStep {
    pub m: usize,
    pub cold_pivots: usize,
    pub warm_pivots: usize,
    pub cold_objective: f64,
    pub warm_objective: f64,
}

impl WarmstartStep {
    pub fn relative_gap(&self) -> f64 {
        (self.warm_objective - self.cold_objective).abs() / self.cold_objective.abs().max(1e-300)
    }
}

/// Solves basis pursuit cold and warm at each `M` in `values` (ascending).
/// Warm pivots include the rows absorbed since the previous value.
pub fn warmstart_trial(
    ensemble: EnsembleKind,
    signal: &SignalSpec,
    seed: u64,
    trial: u64,
    values: &[usize],
) -> Result<Vec<WarmstartStep>> {
    let n = signal.dim();
    let max_m = values.iter().copied().max().unwrap_or(0);
    let (_, recs) = trial_records(ensemble, signal, 0.0, seed, trial, max_m)?;
    let mut warm = IncrementalDecoder::new(crate::sequential::DecoderKind::BasisPursuitWarm);
    let mut out = Vec::with_capacity(values.len());
    for &m in values {
        let (a, y) = stack_records(&recs[..m], n)?;
        let (x_warm, warm_pivots) = warm.decode(&a, &y)?;
        let (cold_objective, cold_pivots) = if m == 0 {
            (0.0, 0)
        } else {
            let r = basis_pursuit(&a, &y)?;
            if r.status != LpStatus::Optimal {
                return Err(Error::Infeasible);
            }
            (r.objective, r.iterations.total())
        };
        out.push(WarmstartStep {
            m,
            cold_pivots,
            warm_pivots,
            cold_objective,
            warm_objective: norm1(&x_warm),
        });
    }
    Ok(out)
}

fn warmstart_bench(config: &ExperimentConfig, dir: &Path, outcome: &mut ExperimentOutcome) -> Result<()> {
    let values = sorted_values(config);
    let results: Vec<(String, Result<Vec<WarmstartStep>>)> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| {
            (
                format!("trial {t}"),
                warmstart_trial(config.ensembles[0], &config.signal, config.seed, t, &values),
            )
        })
        .collect();
    let ok = partition(results, &mut outcome.failures);
    let trials = ok.len().max(1) as f64;
    let max_gap = ok
        .iter()
        .flatten()
        .map(WarmstartStep::relative_gap)
        .fold(0.0, f64::max);
    let rows: Vec<[String; 3]> = values
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let cold: usize = ok.iter().map(|s| s[i].cold_pivots).sum();
            let warm: usize = ok.iter().map(|s| s[i].warm_pivots).sum();
            [m.to_string(), f(cold as f64 / trials), f(warm as f64 / trials)]
        })
        .collect();
    CsvOut { dir, outcome }.write("warmstart.csv", &["M", "mean_iters_cold", "mean_iters_warm"], rows)?;
    outcome.notes.insert("max_relative_objective_gap".into(), json!(max_gap));
    Ok(())
}
