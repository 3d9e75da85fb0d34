//! Measurement ensembles, synthetic signals and seeded random streams.
//!
//! Every random quantity in a trial comes from a [`RandomStream`] derived
//! from `(master seed, trial index, purpose)`, so a trial can be replayed in
//! isolation and parallel trials never share generator state.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    /// i.i.d. N(0, 1) entries.
    Gaussian,
    /// i.i.d. equiprobable +1 / -1 entries.
    Bernoulli,
}

impl EnsembleKind {
    /// Per-entry variance of a row.
    pub fn entry_variance(self) -> f64 {
        1.0
    }

    /// Whether the chi-square holdout mapping is exact for this ensemble.
    pub fn chi2_exact(self) -> bool {
        matches!(self, EnsembleKind::Gaussian)
    }

    pub fn name(self) -> &'static str {
        match self {
            EnsembleKind::Gaussian => "gaussian",
            EnsembleKind::Bernoulli => "bernoulli",
        }
    }
}

impl std::str::FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(EnsembleKind::Gaussian),
            "bernoulli" => Ok(EnsembleKind::Bernoulli),
            other => Err(Error::InvalidArgument(format!("unknown ensemble '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SignalSpec {
    /// `k` nonzeros on a uniformly random support, standard normal amplitudes.
    ExactSparse { n: usize, k: usize },
    /// Sorted magnitudes `i^-exponent` on a random permutation with random signs.
    PowerLaw {
        n: usize,
        #[serde(default = "default_exponent")]
        exponent: f64,
    },
}

fn default_exponent() -> f64 {
    1.0
}

impl SignalSpec {
    pub fn dim(&self) -> usize {
        match *self {
            SignalSpec::ExactSparse { n, .. } | SignalSpec::PowerLaw { n, .. } => n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SignalSpec::ExactSparse { n, k } if k > n => Err(Error::InvalidArgument(format!(
                "sparsity {k} exceeds dimension {n}"
            ))),
            SignalSpec::PowerLaw { exponent, .. } if !(exponent > 0.0 && exponent.is_finite()) => {
                Err(Error::InvalidArgument(format!(
                    "power-law exponent must be positive, got {exponent}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// One measurement `value = row . x* + noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub row: Vec<f64>,
    pub value: f64,
    pub noise_sigma: f64,
}

/// Purpose tags used to split one trial seed into independent streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    Signal = 1,
    Rows = 2,
    Noise = 3,
    Auxiliary = 4,
}

/// A seeded random stream (ChaCha20).
#[derive(Debug, Clone)]
pub struct RandomStream(ChaCha20Rng);

impl RandomStream {
    pub fn from_seed(seed: u64) -> Self {
        RandomStream(ChaCha20Rng::seed_from_u64(seed))
    }

    /// Stream for one purpose of one trial. ChaCha stream ids keep the
    /// purposes disjoint for the same trial seed.
    pub fn for_trial(master_seed: u64, trial: u64, purpose: StreamPurpose) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(trial_seed(master_seed, trial));
        rng.set_stream(purpose as u64);
        RandomStream(rng)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    pub fn sign(&mut self) -> f64 {
        if self.0.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.0
    }
}

/// Derives the seed of trial `trial` from the master seed with two rounds
/// of splitmix64, so neighbouring trial indices give unrelated seeds.
pub fn trial_seed(master_seed: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn generate_signal(spec: &SignalSpec, seed: u64) -> Result<Vec<f64>> {
    let mut stream = RandomStream::from_seed(seed);
    generate_signal_from(spec, &mut stream)
}

pub fn generate_signal_from(spec: &SignalSpec, stream: &mut RandomStream) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = spec.dim();
    let mut x = vec![0.0; n];
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(stream.rng());
    match *spec {
        SignalSpec::ExactSparse { k, .. } => {
            for &i in &idx[..k] {
                x[i] = stream.standard_normal();
            }
        }
        SignalSpec::PowerLaw { exponent, .. } => {
            for (rank, &i) in idx.iter().enumerate() {
                x[i] = stream.sign() * ((rank + 1) as f64).powf(-exponent);
            }
        }
    }
    Ok(x)
}

pub fn draw_row(kind: EnsembleKind, n: usize, stream: &mut RandomStream) -> Vec<f64> {
    match kind {
        EnsembleKind::Gaussian => (0..n).map(|_| stream.standard_normal()).collect(),
        EnsembleKind::Bernoulli => (0..n).map(|_| stream.sign()).collect(),
    }
}

/// Applies `row` to `x_true` and adds `noise_sigma * g`, `g ~ N(0, 1)` drawn
/// from `noise` (nothing is drawn when `noise_sigma == 0`).
pub fn measure(
    x_true: &[f64],
    row: Vec<f64>,
    noise_sigma: f64,
    noise: &mut RandomStream,
) -> Result<MeasurementRecord> {
    if row.len() != x_true.len() {
        return Err(Error::DimensionMismatch(format!(
            "row of length {} for a signal of length {}",
            row.len(),
            x_true.len()
        )));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be nonnegative, got {noise_sigma}"
        )));
    }
    let mut value = dot(&row, x_true);
    if noise_sigma > 0.0 {
        value += noise_sigma * noise.standard_normal();
    }
    Ok(MeasurementRecord {
        row,
        value,
        noise_sigma,
    })
}

/// Endless source of measurements of a fixed signal for one trial.
#[derive(Debug, Clone)]
pub struct MeasurementSource {
    kind: EnsembleKind,
    x_true: Vec<f64>,
    noise_sigma: f64,
    rows: RandomStream,
    noise: RandomStream,
    drawn: usize,
}

impl MeasurementSource {
    pub fn new(
        kind: EnsembleKind,
        x_true: Vec<f64>,
        noise_sigma: f64,
        rows: RandomStream,
        noise: RandomStream,
    ) -> Self {
        MeasurementSource {
            kind,
            x_true,
            noise_sigma,
            rows,
            noise,
            drawn: 0,
        }
    }

    /// Signal and streams for `(master_seed, trial)`.
    pub fn for_trial(
        kind: EnsembleKind,
        signal: &SignalSpec,
        noise_sigma: f64,
        master_seed: u64,
        trial: u64,
    ) -> Result<Self> {
        let mut sig = RandomStream::for_trial(master_seed, trial, StreamPurpose::Signal);
        let x = generate_signal_from(signal, &mut sig)?;
        Ok(Self::new(
            kind,
            x,
            noise_sigma,
            RandomStream::for_trial(master_seed, trial, StreamPurpose::Rows),
            RandomStream::for_trial(master_seed, trial, StreamPurpose::Noise),
        ))
    }

    pub fn ensemble(&self) -> EnsembleKind {
        self.kind
    }

    pub fn signal(&self) -> &[f64] {
        &self.x_true
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn drawn(&self) -> usize {
        self.drawn
    }

    pub fn next_record(&mut self) -> MeasurementRecord {
        let row = draw_row(self.kind, self.x_true.len(), &mut self.rows);
        self.drawn += 1;
        measure(&self.x_true, row, self.noise_sigma, &mut self.noise)
            .expect("row length matches the signal by construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_sparse_extremes() {
        let x = generate_signal(&SignalSpec::ExactSparse { n: 100, k: 0 }, 1).unwrap();
        assert!(x.iter().all(|v| *v == 0.0));
        let x = generate_signal(&SignalSpec::ExactSparse { n: 100, k: 100 }, 1).unwrap();
        assert!(x.iter().all(|v| *v != 0.0));
        let x = generate_signal(&SignalSpec::ExactSparse { n: 100, k: 7 }, 9).unwrap();
        assert_eq!(x.iter().filter(|v| **v != 0.0).count(), 7);
        assert!(generate_signal(&SignalSpec::ExactSparse { n: 3, k: 4 }, 1).is_err());
    }

    #[test]
    fn power_law_magnitudes() {
        let x = generate_signal(&SignalSpec::PowerLaw { n: 50, exponent: 1.5 }, 4).unwrap();
        let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        mags.sort_by(|a, b| b.total_cmp(a));
        for (i, m) in mags.iter().enumerate() {
            assert!((m - ((i + 1) as f64).powf(-1.5)).abs() < 1e-15);
        }
        assert!(x.iter().any(|v| *v < 0.0) && x.iter().any(|v| *v > 0.0));
    }

    #[test]
    fn signals_are_deterministic() {
        let spec = SignalSpec::ExactSparse { n: 64, k: 5 };
        let a = generate_signal(&spec, 77).unwrap();
        let b = generate_signal(&spec, 77).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn bernoulli_rows_are_signs() {
        let mut s = RandomStream::from_seed(3);
        let row = draw_row(EnsembleKind::Bernoulli, 1000, &mut s);
        assert!(row.iter().all(|v| *v == 1.0 || *v == -1.0));
    }

    #[test]
    fn gaussian_row_moments() {
        let mut s = RandomStream::from_seed(5);
        let n = 4;
        let samples = 10_000;
        let mut sum = vec![0.0; n];
        let mut sq = vec![0.0; n];
        for _ in 0..samples {
            let r = draw_row(EnsembleKind::Gaussian, n, &mut s);
            for j in 0..n {
                sum[j] += r[j];
                sq[j] += r[j] * r[j];
            }
        }
        for j in 0..n {
            let mean = sum[j] / samples as f64;
            let var = (sq[j] - samples as f64 * mean * mean) / (samples - 1) as f64;
            assert!(mean.abs() <= 0.05, "mean {mean}");
            assert!((0.9..=1.1).contains(&var), "var {var}");
        }
    }

    #[test]
    fn same_seed_same_rows() {
        let mut a = RandomStream::for_trial(10, 3, StreamPurpose::Rows);
        let mut b = RandomStream::for_trial(10, 3, StreamPurpose::Rows);
        for _ in 0..5 {
            assert_eq!(
                draw_row(EnsembleKind::Gaussian, 8, &mut a),
                draw_row(EnsembleKind::Gaussian, 8, &mut b)
            );
        }
        let mut c = RandomStream::for_trial(10, 3, StreamPurpose::Noise);
        let mut a = RandomStream::for_trial(10, 3, StreamPurpose::Rows);
        assert_ne!(
            draw_row(EnsembleKind::Gaussian, 8, &mut a),
            draw_row(EnsembleKind::Gaussian, 8, &mut c)
        );
    }

    #[test]
    fn measure_examples() {
        let x = [0.5, -2.0, 3.0];
        let mut noise = RandomStream::from_seed(1);
        let rec = measure(&x, vec![1.0, 0.0, 0.0], 0.0, &mut noise).unwrap();
        assert_eq!(rec.value, 0.5);
        let rec = measure(&x, vec![1.0, 2.0, -1.0], 0.0, &mut noise).unwrap();
        assert_eq!(rec.value, 0.5 - 4.0 - 3.0);
        assert!(measure(&x, vec![1.0], 0.0, &mut noise).is_err());
    }

    #[test]
    fn pure_noise_variance() {
        let x = [0.0; 3];
        let mut noise = RandomStream::from_seed(8);
        let n = 10_000;
        let vals: Vec<f64> = (0..n)
            .map(|_| measure(&x, vec![1.0, 1.0, 1.0], 1.0, &mut noise).unwrap().value)
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((0.9..=1.1).contains(&var), "var {var}");
    }

    #[test]
    fn source_is_reproducible_per_trial() {
        let spec = SignalSpec::ExactSparse { n: 20, k: 3 };
        let mut a = MeasurementSource::for_trial(EnsembleKind::Gaussian, &spec, 0.1, 42, 7).unwrap();
        let mut b = MeasurementSource::for_trial(EnsembleKind::Gaussian, &spec, 0.1, 42, 7).unwrap();
        assert_eq!(a.signal(), b.signal());
        for _ in 0..10 {
            assert_eq!(a.next_record(), b.next_record());
        }
        assert_eq!(a.drawn(), 10);
        let other = MeasurementSource::for_trial(EnsembleKind::Gaussian, &spec, 0.1, 42, 8).unwrap();
        assert_ne!(a.signal(), other.signal());
    }
}
