//! Instruments for the leave-one-out blow-up at the interpolation threshold:
//! Haar sampling, the dominating term `g(r, lambda)`, the spike lower bound,
//! and Monte-Carlo checks of the supporting distributional facts.

pub mod ks;
pub mod lemmas;
pub mod special;

use faer::Mat;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::regression::EigenDecomposition;
use crate::{rng, Error, Matrix, Result};

pub use lemmas::{
    verify_lemma_b1, verify_lemma_b5, verify_lemma_b5_sign_invariance, verify_lemma_b6,
    verify_spike_growth, LemmaReport,
};

/// Uniform unit vector on `S^{n-1}`: a normalised standard Gaussian.
pub fn sample_haar_vector(n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::domain("dimension must be at least 1"));
    }
    let mut rng = rng::rng(rng::derive(seed, "haar-vector"));
    loop {
        let w: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return Ok(w.into_iter().map(|x| x / norm).collect());
        }
    }
}

/// Haar-distributed element of `O(n)`.
///
/// QR of a standard Gaussian matrix, with column `j` of `Q` multiplied by
/// `sign(R_jj)`; without the correction the law is not Haar.
pub fn sample_haar_matrix(n: usize, seed: u64) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::domain("dimension must be at least 1"));
    }
    let mut rng = rng::rng(rng::derive(seed, "haar-matrix"));
    let g: Matrix = Mat::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let r = qr.R();
    let mut q = qr.compute_Q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Ok(q)
}

/// Value of `g(r, lambda)`; when a denominator vanishes the value is
/// infinite and the first offending point is reported.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GTerm {
    pub value: f64,
    pub singular_index: Option<usize>,
}

/// `g(r, lambda) = sum_i 1 / (sum_{l > r} V_il^2 + sum_{l <= r} lambda / (lambda + omega_l) V_il^2)`
/// at the decomposition's numerical rank.
pub fn g_term(eig: &EigenDecomposition, lambda: f64) -> Result<GTerm> {
    g_term_at_rank(eig, eig.rank(), lambda)
}

/// [`g_term`] at an explicit rank `r <= n`.
pub fn g_term_at_rank(eig: &EigenDecomposition, rank: usize, lambda: f64) -> Result<GTerm> {
    let n = eig.n();
    if rank > n {
        return Err(Error::domain(format!("rank {rank} exceeds n = {n}")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::domain(format!("lambda must be >= 0, got {lambda}")));
    }
    let v = eig.vectors();
    let omega = eig.values();
    let mut total = 0.0;
    for i in 0..n {
        let mut denom = 0.0;
        for l in 0..n {
            let w = if l >= rank {
                1.0
            } else if lambda == 0.0 {
                0.0
            } else {
                lambda / (lambda + omega[l])
            };
            denom += w * v[(i, l)] * v[(i, l)];
        }
        if denom == 0.0 {
            return Ok(GTerm {
                value: f64::INFINITY,
                singular_index: Some(i),
            });
        }
        total += 1.0 / denom;
    }
    Ok(GTerm {
        value: total,
        singular_index: None,
    })
}

/// `n (sum_i y_i v_i)^2`, the lower bound on the leave-one-out loss at the
/// interpolation threshold when `v` is the null direction of the kernel.
pub fn spike_lower_bound(y: &[f64], v: &[f64]) -> Result<f64> {
    if y.len() != v.len() {
        return Err(Error::domain("label and direction lengths differ"));
    }
    let proj: f64 = y.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok(y.len() as f64 * proj * proj)
}

/// Exact leave-one-out loss `(1/n) (sum_i y_i v_i)^2 sum_i 1 / v_i^2` of a
/// kernel whose only null direction is `v` (rank `n - 1`, `lambda -> 0`).
pub fn interpolation_loo(y: &[f64], v: &[f64]) -> f64 {
    let proj: f64 = y.iter().zip(v).map(|(a, b)| a * b).sum();
    let inv: f64 = v.iter().map(|x| 1.0 / (x * x)).sum();
    proj * proj * inv / y.len() as f64
}

/// Sample mean and unbiased sample variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var)
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
