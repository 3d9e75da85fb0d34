use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensembles::{EnsembleKind, SignalSpec};
use crate::error::{Error, Result};
use crate::sequential::{DecoderKind, RuleKind, StoppingRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    StopHist,
    Trace,
    CtMoments,
    ErrorBounds,
    EstimatorCompare,
    NoisyBound,
    WarmstartBench,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorSettings {
    /// Holdout size.
    pub t: usize,
    /// Holdout sizes swept by `ct-moments`.
    pub t_values: Vec<usize>,
    /// Chebyshev multiplier.
    pub k: f64,
    /// Chi-square level.
    pub alpha: f64,
    pub noise_sigma: f64,
    /// BPDN constant `c` in `lambda = c sqrt(M ln N)`; calibrated when absent.
    pub lambda_c: Option<f64>,
    /// Ambient dimension `L` for `ct-moments`.
    pub l: usize,
    pub samples: usize,
    /// Relative std-dev gap under which `estimator-compare` calls the two
    /// estimators equally accurate.
    pub agreement_threshold: f64,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        EstimatorSettings {
            t: 5,
            t_values: vec![5, 10, 25, 50],
            k: 3.0,
            alpha: 0.1,
            noise_sigma: 0.0,
            lambda_c: None,
            l: 100,
            samples: 5000,
            agreement_threshold: 0.15,
        }
    }
}

/// Measurement counts visited by sweeping experiments: `values` when given,
/// else `start..=stop` by `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sweep {
    pub start: usize,
    pub stop: Option<usize>,
    pub step: usize,
    pub values: Option<Vec<usize>>,
}

impl Default for Sweep {
    fn default() -> Self {
        Sweep {
            start: 1,
            stop: None,
            step: 1,
            values: None,
        }
    }
}

impl Sweep {
    pub fn values(&self, default_stop: usize) -> Vec<usize> {
        if let Some(v) = &self.values {
            return v.clone();
        }
        let stop = self.stop.unwrap_or(default_stop);
        (self.start..=stop).step_by(self.step.max(1)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_ensembles")]
    pub ensembles: Vec<EnsembleKind>,
    pub signal: SignalSpec,
    #[serde(default = "default_decoder")]
    pub decoder: DecoderKind,
    #[serde(default = "default_rule")]
    pub rule: StoppingRule,
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default)]
    pub estimator: EstimatorSettings,
    #[serde(default)]
    pub sweep: Sweep,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    pub out: PathBuf,
}

fn default_ensembles() -> Vec<EnsembleKind> {
    vec![EnsembleKind::Gaussian]
}

fn default_decoder() -> DecoderKind {
    DecoderKind::BasisPursuitWarm
}

fn default_rule() -> StoppingRule {
    StoppingRule::new(RuleKind::OneStepAgreement)
}

fn cfg_err(msg: String) -> Error {
    Error::Config(msg)
}

impl ExperimentConfig {
    pub fn n(&self) -> usize {
        self.signal.dim()
    }

    /// Default upper end of the measurement sweep.
    pub fn default_sweep_stop(&self) -> usize {
        let n = self.n();
        match self.experiment {
            ExperimentKind::WarmstartBench => n / 2,
            _ => n.saturating_sub(self.estimator.t),
        }
    }

    pub fn sweep_values(&self) -> Vec<usize> {
        self.sweep.values(self.default_sweep_stop())
    }

    pub fn validate(&self) -> Result<()> {
        self.signal.validate().map_err(|e| cfg_err(e.to_string()))?;
        self.rule.validate().map_err(|e| cfg_err(e.to_string()))?;
        if self.trials == 0 {
            return Err(cfg_err("trials must be at least 1".into()));
        }
        if self.ensembles.is_empty() {
            return Err(cfg_err("at least one ensemble is required".into()));
        }
        let est = &self.estimator;
        if !(est.noise_sigma >= 0.0) {
            return Err(cfg_err(format!("noise_sigma must be nonnegative, got {}", est.noise_sigma)));
        }
        let n = self.n();
        let t = est.t;
        match self.experiment {
            ExperimentKind::CtMoments => {
                if est.t_values.is_empty() || est.t_values.iter().any(|&t| t == 0 || t > est.l) {
                    return Err(cfg_err(format!("t_values must lie in 1..={}", est.l)));
                }
                if est.samples < 100 {
                    return Err(cfg_err("ct-moments needs at least 100 samples".into()));
                }
            }
            ExperimentKind::ErrorBounds | ExperimentKind::EstimatorCompare | ExperimentKind::NoisyBound => {
                if t < 3 || !(est.k > 0.0) || !(est.alpha > 0.0 && est.alpha < 1.0) {
                    return Err(cfg_err(format!(
                        "need T >= 3, k > 0 and alpha in (0, 1), got T = {t}, k = {}, alpha = {}",
                        est.k, est.alpha
                    )));
                }
                let values = self.sweep_values();
                if values.is_empty() {
                    return Err(cfg_err("empty measurement sweep".into()));
                }
                let max_m = *values.iter().max().expect("nonempty");
                if max_m + t > n {
                    return Err(cfg_err(format!("sweep reaches M = {max_m}, but M + T must not exceed N = {n}")));
                }
                if self.experiment == ExperimentKind::NoisyBound
                    && est.lambda_c.is_none()
                    && est.noise_sigma <= 0.0
                {
                    return Err(cfg_err("noisy-bound needs noise_sigma > 0 or an explicit lambda_c".into()));
                }
                if matches!(self.experiment, ExperimentKind::ErrorBounds) && !self.decoder.is_basis_pursuit() {
                    return Err(cfg_err("error-bounds needs a basis-pursuit decoder".into()));
                }
            }
            ExperimentKind::WarmstartBench => {
                if self.sweep_values().is_empty() {
                    return Err(cfg_err("empty measurement sweep".into()));
                }
            }
            ExperimentKind::StopHist | ExperimentKind::Trace => {}
        }
        Ok(())
    }
}

/// Named presets with the published parameters.
pub const PRESETS: &[(&str, &str, &str)] = &[
    (
        "fig1",
        "stopping-time histogram, N=100, K=10, Gaussian and Bernoulli, 500 trials",
        r#"
experiment = "stop-hist"
ensembles = ["gaussian", "bernoulli"]
trials = 500
seed = 1
out = "results/fig1"
[signal]
kind = "exact-sparse"
n = 100
k = 10
[decoder]
kind = "basis-pursuit-warm"
[rule]
kind = "one-step-agreement"
"#,
    ),
    (
        "fig3",
        "single-trial trace of l0, l1 and error, N=100, K=10",
        r#"
experiment = "trace"
trials = 1
seed = 3
out = "results/fig3"
[signal]
kind = "exact-sparse"
n = 100
k = 10
[decoder]
kind = "basis-pursuit"
[rule]
kind = "one-step-agreement"
"#,
    ),
    (
        "fig4",
        "moments of C_T against the closed forms, L=100",
        r#"
experiment = "ct-moments"
trials = 1
seed = 4
out = "results/fig4"
[signal]
kind = "exact-sparse"
n = 100
k = 0
[estimator]
l = 100
samples = 5000
t_values = [3, 4, 5, 6, 8, 10, 15, 20, 25, 30, 40, 50, 60, 70, 80, 90, 100]
"#,
    ),
    (
        "fig5",
        "Chebyshev and chi-square certificates along the sweep, N=100, K=10, T=5",
        r#"
experiment = "error-bounds"
trials = 100
seed = 5
out = "results/fig5"
[signal]
kind = "exact-sparse"
n = 100
k = 10
[decoder]
kind = "basis-pursuit-warm"
[estimator]
t = 5
k = 3.0
alpha = 0.1
[sweep]
start = 0
stop = 95
"#,
    ),
    (
        "fig5-powerlaw",
        "certificates for a power-law signal, N=1000, T=10",
        r#"
experiment = "error-bounds"
trials = 3
seed = 55
out = "results/fig5-powerlaw"
[signal]
kind = "power-law"
n = 1000
exponent = 1.0
[decoder]
kind = "basis-pursuit-warm"
[estimator]
t = 10
k = 3.0
alpha = 0.1
[sweep]
start = 0
stop = 990
step = 30
"#,
    ),
    (
        "fig6",
        "sin-theta versus JL-style estimates, N=250, T=25, M in {0, 200}, 5000 trials",
        r#"
experiment = "estimator-compare"
trials = 5000
seed = 6
out = "results/fig6"
[signal]
kind = "exact-sparse"
n = 250
k = 10
[estimator]
t = 25
agreement_threshold = 0.15
[sweep]
values = [0, 200]
"#,
    ),
    (
        "fig7",
        "noisy BPDN error and chi-square bound, N=1000, K=100, T=10",
        r#"
experiment = "noisy-bound"
trials = 3
seed = 7
out = "results/fig7"
[signal]
kind = "exact-sparse"
n = 1000
k = 100
[estimator]
t = 10
alpha = 0.1
noise_sigma = 0.01
[sweep]
start = 50
stop = 950
step = 100
"#,
    ),
    (
        "fig8",
        "warm versus cold simplex pivots along the sweep, N=200, K=10, 100 trials",
        r#"
experiment = "warmstart-bench"
trials = 100
seed = 8
out = "results/fig8"
[signal]
kind = "exact-sparse"
n = 200
k = 10
[sweep]
start = 1
stop = 100
"#,
    ),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _, _)| *n).collect()
}

fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _, _)| *n == name).map(|(_, _, t)| *t)
}

fn parse_table(text: &str, origin: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| cfg_err(format!("{origin}: {e}")))
}

fn from_table(table: toml::Table, origin: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| cfg_err(format!("{origin}: {e}")))?;
    Ok(cfg)
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let text = preset_text(name).ok_or_else(|| cfg_err(format!("unknown preset {name:?}")))?;
    from_table(parse_table(text, name)?, name)
}

/// Sets `key` (dotted path) to `value` parsed as a TOML value, falling back
/// to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| cfg_err(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key just parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(cfg_err(format!("bad override key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| cfg_err(format!("override key {key:?} goes through a non-table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Loads a preset name or a TOML file path and applies overrides.
pub fn load_config(source: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut table = match preset_text(source) {
        Some(text) => parse_table(text, source)?,
        None => {
            let path = Path::new(source);
            let text = std::fs::read_to_string(path)
                .map_err(|e| cfg_err(format!("{source} is neither a preset nor a readable file: {e}")))?;
            parse_table(&text, source)?
        }
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let cfg = from_table(table, source)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for name in preset_names() {
            let c = preset(name).unwrap();
            c.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        let c = preset("fig1").unwrap();
        assert_eq!((c.n(), c.trials), (100, 500));
        assert_eq!(c.ensembles, vec![EnsembleKind::Gaussian, EnsembleKind::Bernoulli]);
        assert_eq!(preset("fig6").unwrap().sweep_values(), vec![0, 200]);
        assert_eq!(preset("fig5").unwrap().sweep_values().len(), 96);
    }

    #[test]
    fn overrides() {
        let c = load_config("fig5", &["trials=7".into(), "estimator.t=10".into(), "signal.k=4".into(), "sweep.stop=50".into()]).unwrap();
        assert_eq!(c.trials, 7);
        assert_eq!(c.estimator.t, 10);
        assert_eq!(c.signal, SignalSpec::ExactSparse { n: 100, k: 4 });
        assert_eq!(c.sweep_values().last(), Some(&50));
        let c = load_config("fig1", &["out=somewhere/else".into()]).unwrap();
        assert_eq!(c.out, PathBuf::from("somewhere/else"));
    }

    #[test]
    fn config_errors() {
        assert!(matches!(load_config("nope-not-here", &[]), Err(Error::Config(_))));
        assert!(matches!(load_config("fig1", &["trials=0".into()]), Err(Error::Config(_))));
        assert!(matches!(load_config("fig5", &["sweep.stop=99".into()]), Err(Error::Config(_))));
        assert!(matches!(load_config("fig1", &["trials".into()]), Err(Error::Config(_))));
        assert!(matches!(load_config("fig1", &["signal.kind=\"bogus\"".into()]), Err(Error::Config(_))));
    }

    #[test]
    fn loads_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, preset_text("fig3").unwrap()).unwrap();
        let c = load_config(p.to_str().unwrap(), &[]).unwrap();
        assert_eq!(c.experiment, ExperimentKind::Trace);
    }
}
