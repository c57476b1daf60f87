//! Exact leave-one-out (LOO) error for kernel ridge regression.
//!
//! The crate computes LOO loss and accuracy from a single fit on the full
//! training set, for arbitrary Gram matrices and in particular for the
//! infinite-width NNGP / NTK kernels of fully-connected ReLU networks and for
//! finite random-feature models. Around that core it provides:
//!
//! * [`dataio`]: CSV / feature-matrix ingestion, synthetic blobs, label noise.
//! * [`kernels`]: linear, NNGP, NTK and random-feature Gram matrices.
//! * [`regression`]: ridge / pseudo-inverse fits and the shared eigensolver.
//! * [`loo`]: closed-form LOO residuals and the brute-force retraining oracle.
//! * [`stats`]: Haar sampling, special functions, KS tests and the Monte-Carlo
//!   checks behind the interpolation-threshold spike.
//! * [`experiments`]: reproducible sweeps (sample size, noise, width, rank,
//!   depth, transfer) that emit CSV / JSON.
//!
//! All dense linear algebra runs on [`faer`] with sequential execution, so
//! every result is a deterministic function of its inputs and seed.

pub mod cli;
pub mod dataio;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod linalg;
pub mod loo;
pub mod oracle;
pub mod regression;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};

/// Dense row-major-agnostic matrix type used throughout the crate.
pub type Matrix = faer::Mat<f64>;
/// Borrowed view into a [`Matrix`].
pub type MatrixRef<'a> = faer::MatRef<'a, f64>;
