//! Sequential compressed sensing.
//!
//! Measurements arrive one at a time. After each one a sparse decoder
//! produces a reconstruction, stopping rules decide whether more samples
//! are needed, and a handful of held-out measurements certify the
//! reconstruction error without knowing the true signal.
//!
//! Module map:
//!
//! * [`linalg`]: dense matrices, QR based min-norm solves, affine distances.
//! * [`ensembles`]: seeded measurement rows and synthetic signals.
//! * [`solvers`]: basis pursuit (two-phase simplex with row-augmented warm
//!   start), orthogonal matching pursuit and basis pursuit denoising.
//! * [`sequential`]: the acquisition loop and its stopping rules.
//! * [`estimators`]: holdout error certificates.
//! * [`stats`]: chi-square kernel and Monte Carlo moment checks.
//! * [`harness`]: experiment configs, presets, CSV output and verification.

pub mod ensembles;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod sequential;
pub mod solvers;
pub mod stats;

pub use error::{Error, Result};
pub use linalg::DenseMatrix;
