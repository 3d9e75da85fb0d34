//! Chi-square kernel and Monte Carlo checks of the holdout angle moments.
//!
//! `C_T = |h| / |h_{1:T}|` for `h ~ N(0, I_L)` is the factor between the
//! distance to the holdout affine space and the true reconstruction error.

use serde::{Deserialize, Serialize};

use crate::ensembles::RandomStream;
use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`.
///
/// Series for `x < a + 1`, Lentz continued fraction for the upper tail
/// otherwise.
pub fn regularized_lower_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let log_prefix = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (sum.ln() + log_prefix).exp().min(1.0)
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-17 {
                break;
            }
        }
        let q = (h.ln() + log_prefix).exp();
        (1.0 - q).clamp(0.0, 1.0)
    }
}

/// CDF of the chi-square distribution with `t` degrees of freedom.
pub fn chi2_cdf(x: f64, t: usize) -> f64 {
    assert!(t >= 1, "chi-square needs at least one degree of freedom");
    if x <= 0.0 {
        return 0.0;
    }
    regularized_lower_gamma(t as f64 / 2.0, x / 2.0)
}

/// Density of the chi-square distribution.
pub fn chi2_pdf(x: f64, t: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = t as f64 / 2.0;
    ((k - 1.0) * x.ln() - x / 2.0 - k * 2f64.ln() - ln_gamma(k)).exp()
}

/// `x` with `chi2_cdf(x, t) = p`: bracket, then Newton steps safeguarded
/// by bisection.
pub fn chi2_quantile(p: f64, t: usize) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile level must lie in (0, 1), got {p}"
        )));
    }
    if t == 0 {
        return Err(Error::InvalidArgument("zero degrees of freedom".into()));
    }
    let tf = t as f64;
    let mut lo = 0.0_f64;
    let mut hi = tf.max(1.0);
    while chi2_cdf(hi, t) < p {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::ConvergenceFailure);
        }
    }
    // Wilson-Hilferty start, clipped into the bracket.
    let z = normal_quantile_approx(p);
    let c = 2.0 / (9.0 * tf);
    let mut x = tf * (1.0 - c + z * c.sqrt()).powi(3);
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let f = chi2_cdf(x, t) - p;
        if f.abs() <= 1e-14 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let dens = chi2_pdf(x, t);
        let newton = x - f / dens;
        x = if dens > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-15 * hi.max(1e-300) {
            return Ok(x);
        }
    }
    let f = chi2_cdf(x, t) - p;
    if f.abs() <= 1e-9 {
        Ok(x)
    } else {
        Err(Error::ConvergenceFailure)
    }
}

/// Rough standard normal quantile (Acklam-style rational fit, ~1e-3),
/// only used for a starting point.
fn normal_quantile_approx(p: f64) -> f64 {
    let q = if p < 0.5 { p } else { 1.0 - p };
    let t = (-2.0 * q.ln()).sqrt();
    let z = t - (2.515517 + 0.802853 * t + 0.010328 * t * t)
        / (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t);
    if p < 0.5 {
        -z
    } else {
        z
    }
}

/// Sample moments of a Monte Carlo quantity against a closed-form target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub mean: f64,
    pub variance: f64,
    pub count: usize,
    /// Standard error of the sample mean.
    pub mean_se: f64,
    /// Approximate standard error of the sample variance.
    pub variance_se: f64,
    pub target: f64,
    pub abs_deviation: f64,
    pub rel_deviation: f64,
}

impl MomentReport {
    pub fn from_samples(samples: &[f64], target: f64) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least two samples, got {n}"
            )));
        }
        let nf = n as f64;
        let mean = samples.iter().sum::<f64>() / nf;
        let m2 = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / nf;
        let m4 = samples.iter().map(|s| (s - mean).powi(4)).sum::<f64>() / nf;
        let variance = m2 * nf / (nf - 1.0);
        let abs_deviation = (mean - target).abs();
        Ok(MomentReport {
            mean,
            variance,
            count: n,
            mean_se: (variance / nf).sqrt(),
            variance_se: ((m4 - m2 * m2).max(0.0) / nf).sqrt(),
            target,
            abs_deviation,
            rel_deviation: if target != 0.0 {
                abs_deviation / target.abs()
            } else {
                f64::INFINITY
            },
        })
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Monte Carlo sample of `C_T` with the closed-form mean estimate and bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtSample {
    pub l: usize,
    pub t: usize,
    /// Moments of the sample; `target` is `sqrt(L/T)`.
    pub moments: MomentReport,
    pub mean_estimate: f64,
    /// `sqrt((L-2)/(T-2))`, absent for `T <= 2`.
    pub mean_bound: Option<f64>,
    /// `(L-2)/(T-2) - L/T`, absent for `T <= 2`.
    pub var_bound: Option<f64>,
    pub min_sample: f64,
}

/// Draws `||h|| / ||h[..t]||` and `||h[..t]||^2 / ||h||^2` for one `h`.
fn draw_angle(l: usize, t: usize, stream: &mut RandomStream) -> (f64, f64) {
    let mut head = 0.0;
    let mut total = 0.0;
    for i in 0..l {
        let g = stream.standard_normal();
        let g2 = g * g;
        total += g2;
        if i < t {
            head += g2;
        }
    }
    if t == l {
        return (1.0, 1.0);
    }
    ((total / head).sqrt(), head / total)
}

fn check_lt(l: usize, t: usize, n_samples: usize, min_samples: usize) -> Result<()> {
    if t == 0 || t > l {
        return Err(Error::InvalidArgument(format!(
            "need L >= T >= 1, got L = {l}, T = {t}"
        )));
    }
    if n_samples < min_samples {
        return Err(Error::InvalidArgument(format!(
            "need at least {min_samples} samples, got {n_samples}"
        )));
    }
    Ok(())
}

pub fn sample_ct(l: usize, t: usize, n_samples: usize, seed: u64) -> Result<CtSample> {
    check_lt(l, t, n_samples, 100)?;
    let mut stream = RandomStream::from_seed(seed);
    let samples: Vec<f64> = (0..n_samples).map(|_| draw_angle(l, t, &mut stream).0).collect();
    let (lf, tf) = (l as f64, t as f64);
    let mean_estimate = (lf / tf).sqrt();
    let (mean_bound, var_bound) = if t > 2 {
        let r = (lf - 2.0) / (tf - 2.0);
        (Some(r.sqrt()), Some(r - lf / tf))
    } else {
        (None, None)
    };
    Ok(CtSample {
        l,
        t,
        moments: MomentReport::from_samples(&samples, mean_estimate)?,
        mean_estimate,
        mean_bound,
        var_bound,
        min_sample: samples.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

/// Monte Carlo estimates of `E[sin^2]` (target `T/L`) and `E[1/sin^2]`
/// (target `(L-2)/(T-2)`, requires `T > 2`).
pub fn verify_sin2_identities(
    l: usize,
    t: usize,
    n_samples: usize,
    seed: u64,
) -> Result<(MomentReport, MomentReport)> {
    check_lt(l, t, n_samples, 2)?;
    if t <= 2 {
        return Err(Error::DegreesOfFreedom(t));
    }
    let mut stream = RandomStream::from_seed(seed);
    let mut sin2 = Vec::with_capacity(n_samples);
    let mut inv_sin2 = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let (_, s2) = draw_angle(l, t, &mut stream);
        sin2.push(s2);
        inv_sin2.push(1.0 / s2);
    }
    let (lf, tf) = (l as f64, t as f64);
    Ok((
        MomentReport::from_samples(&sin2, tf / lf)?,
        MomentReport::from_samples(&inv_sin2, (lf - 2.0) / (tf - 2.0))?,
    ))
}
