//! Monte-Carlo checks of the distributional facts behind the interpolation
//! spike. Trial `t` draws from `derive_indexed(seed, <lemma>, t)`.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::ks::{ks_one_sample, ks_two_sample};
use super::special::{beta_cdf, gamma_cdf, inc_beta};
use super::{interpolation_loo, mean_var, median, sample_haar_matrix, sample_haar_vector, spike_lower_bound};
use crate::{rng, Error, Result};

/// KS p-value threshold used by every distributional check.
pub const KS_ALPHA: f64 = 0.01;
/// Moment checks accept deviations up to this many standard errors.
pub const MOMENT_SIGMAS: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma: String,
    pub n: Vec<usize>,
    pub trials: usize,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    #[serde(default)]
    pub details: serde_json::Value,
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::domain("trials must be at least 1"));
    }
    Ok(())
}

fn haar(n: usize, seed: u64, name: &str, t: usize) -> Vec<f64> {
    sample_haar_vector(n, rng::derive_indexed(seed, name, t as u64)).expect("n >= 1 checked by caller")
}

/// Alternating `+1, -1, ...`.
pub fn alternating_signs(n: usize) -> Vec<f64> {
    (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect()
}

/// `sum_i 1 / v_i^2 >= n^2` on every Haar trial; the statistic is the
/// smallest observed ratio `(sum_i 1 / v_i^2) / n^2`.
pub fn verify_lemma_b1(trials: usize, n: usize, seed: u64) -> Result<LemmaReport> {
    check_trials(trials)?;
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    let n2 = (n * n) as f64;
    let mut min_ratio = f64::INFINITY;
    let mut violations = 0usize;
    for t in 0..trials {
        let v = haar(n, seed, "lemma-b1", t);
        let ratio = v.iter().map(|x| 1.0 / (x * x)).sum::<f64>() / n2;
        if ratio < 1.0 {
            violations += 1;
        }
        min_ratio = min_ratio.min(ratio);
    }
    Ok(LemmaReport {
        lemma: "b1".into(),
        n: vec![n],
        trials,
        statistic: min_ratio,
        threshold: 1.0,
        pass: violations == 0,
        details: json!({ "violations": violations }),
    })
}

/// Samples of `(1/n) (sum_i y_i v_i)^2` for Haar `v`.
pub fn projection_samples(y: &[f64], trials: usize, seed: u64, name: &str) -> Vec<f64> {
    let n = y.len();
    (0..trials)
        .map(|t| {
            let v = haar(n, seed, name, t);
            let p: f64 = y.iter().zip(&v).map(|(a, b)| a * b).sum();
            p * p / n as f64
        })
        .collect()
}

/// `(1/n) (sum_i y_i v_i)^2 ~ Beta(1/2, (n - 1)/2)` for fixed alternating
/// `y`: one-sample KS at p > 0.01 and the sample mean within 4 standard
/// errors of `1/n`.
pub fn verify_lemma_b5(trials: usize, n: usize, seed: u64) -> Result<LemmaReport> {
    check_trials(trials)?;
    if n < 2 {
        return Err(Error::domain("n must be at least 2"));
    }
    let (a, b) = (0.5, (n as f64 - 1.0) / 2.0);
    let samples = projection_samples(&alternating_signs(n), trials, seed, "lemma-b5");
    let ks = ks_one_sample(&samples, |x| beta_cdf(x, a, b));
    let (mean, _) = mean_var(&samples);
    let true_mean = a / (a + b);
    let true_var = a * b / ((a + b).powi(2) * (a + b + 1.0));
    let z_mean = (mean - true_mean) / (true_var / trials as f64).sqrt();
    Ok(LemmaReport {
        lemma: "b5".into(),
        n: vec![n],
        trials,
        statistic: ks.statistic,
        threshold: KS_ALPHA,
        pass: ks.p_value > KS_ALPHA && z_mean.abs() <= MOMENT_SIGMAS,
        details: json!({
            "p_value": ks.p_value,
            "mean": mean,
            "expected_mean": true_mean,
            "mean_z": z_mean,
        }),
    })
}

/// The projection law does not depend on the signs of `y`: all-ones and
/// alternating `y` on independent streams pass a two-sample KS test.
pub fn verify_lemma_b5_sign_invariance(trials: usize, n: usize, seed: u64) -> Result<LemmaReport> {
    check_trials(trials)?;
    if n < 2 {
        return Err(Error::domain("n must be at least 2"));
    }
    let ones = projection_samples(&vec![1.0; n], trials, seed, "lemma-b5-ones");
    let alt = projection_samples(&alternating_signs(n), trials, seed, "lemma-b5-alternating");
    let ks = ks_two_sample(&ones, &alt);
    Ok(LemmaReport {
        lemma: "b5-sign-invariance".into(),
        n: vec![n],
        trials,
        statistic: ks.statistic,
        threshold: KS_ALPHA,
        pass: ks.p_value > KS_ALPHA,
        details: json!({ "p_value": ks.p_value }),
    })
}

/// `sup_x |P(n X_n <= x) - P(G <= x)|` for `X_n ~ Beta(1/2, n)` and
/// `G ~ Gamma(1/2, 1)`, evaluated on a dense grid.
pub fn b6_exact_distance(n: usize) -> f64 {
    let nf = n as f64;
    let mut worst: f64 = 0.0;
    let mut eval = |x: f64| {
        let d = (inc_beta(0.5, nf, (x / nf).min(1.0)) - gamma_cdf(x, 0.5, 1.0)).abs();
        worst = worst.max(d);
    };
    for i in 0..=2000 {
        eval(1e-8 * 10f64.powf(8.0 * i as f64 / 2000.0));
    }
    for i in 1..=4000 {
        eval(20.0 * i as f64 / 4000.0);
    }
    worst
}

/// `n X_n -> Gamma(1/2, 1)` for `X_n ~ Beta(1/2, n)`.
///
/// `X_n` is drawn as `v_1^2` of a Haar vector in dimension `2n + 1`. Passes
/// when the exact CDF distance to the limit strictly decreases along
/// `n_list` and, at the largest `n`, the sample mean and variance of `n X_n`
/// are within 4 standard errors of 1/2. The statistic is the largest
/// |z| of the two moments at the largest `n`.
pub fn verify_lemma_b6(n_list: &[usize], trials: usize, seed: u64) -> Result<LemmaReport> {
    check_trials(trials)?;
    if trials < 2 {
        return Err(Error::domain("trials must be at least 2"));
    }
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] == 0 {
        return Err(Error::domain("n_list must be nonempty, positive and strictly increasing"));
    }
    let mut per_n = Vec::new();
    let mut distances = Vec::new();
    let mut last_z = (0.0, 0.0);
    for &n in n_list {
        let nf = n as f64;
        let name = format!("lemma-b6-{n}");
        let samples: Vec<f64> = (0..trials)
            .map(|t| {
                let v = haar(2 * n + 1, seed, &name, t);
                nf * v[0] * v[0]
            })
            .collect();
        let (mean, var) = mean_var(&samples);
        let m4 = samples.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / trials as f64;
        let tf = trials as f64;
        let z_mean = (mean - 0.5) / (var / tf).sqrt();
        let z_var = (var - 0.5) / ((m4 - var * var).max(f64::MIN_POSITIVE) / tf).sqrt();
        let exact = b6_exact_distance(n);
        let mc = ks_one_sample(&samples, |x| gamma_cdf(x, 0.5, 1.0));
        distances.push(exact);
        last_z = (z_mean, z_var);
        per_n.push(json!({
            "n": n,
            "mean": mean,
            "variance": var,
            "mean_z": z_mean,
            "variance_z": z_var,
            "exact_cdf_distance": exact,
            "sample_ks_statistic": mc.statistic,
            "sample_ks_p_value": mc.p_value,
        }));
    }
    let decreasing = distances.windows(2).all(|w| w[1] < w[0]);
    let statistic = last_z.0.abs().max(last_z.1.abs());
    Ok(LemmaReport {
        lemma: "b6".into(),
        n: n_list.to_vec(),
        trials,
        statistic,
        threshold: MOMENT_SIGMAS,
        pass: decreasing && statistic <= MOMENT_SIGMAS,
        details: json!({ "distance_decreasing": decreasing, "per_n": per_n }),
    })
}

/// Exact leave-one-out loss at the interpolation threshold for Haar
/// eigenvectors with the null direction in the last column, and alternating
/// `y`. Passes when every trial respects the lower bound
/// `n (sum_i y_i v_i)^2`, the loss is invariant to `y -> -y`, and the median
/// grows at least half as fast as `n` relative to the first entry of
/// `n_list`. The statistic is the smallest normalised growth
/// `(median_j / median_0) / (n_j / n_0)`.
pub fn verify_spike_growth(n_list: &[usize], trials: usize, seed: u64) -> Result<LemmaReport> {
    check_trials(trials)?;
    if n_list.len() < 2 || n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] < 2 {
        return Err(Error::domain("n_list needs at least two strictly increasing sizes >= 2"));
    }
    let mut medians = Vec::new();
    let mut bound_violations = 0usize;
    let mut sign_violations = 0usize;
    for &n in n_list {
        let y = alternating_signs(n);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let name = format!("spike-{n}");
        let mut losses = Vec::with_capacity(trials);
        for t in 0..trials {
            let q = sample_haar_matrix(n, rng::derive_indexed(seed, &name, t as u64))?;
            let v: Vec<f64> = (0..n).map(|i| q[(i, n - 1)]).collect();
            let loss = interpolation_loo(&y, &v);
            if loss < spike_lower_bound(&y, &v)? {
                bound_violations += 1;
            }
            if interpolation_loo(&neg, &v) != loss {
                sign_violations += 1;
            }
            losses.push(loss);
        }
        medians.push(median(&losses));
    }
    let (n0, m0) = (n_list[0] as f64, medians[0]);
    let growth: Vec<f64> = n_list
        .iter()
        .zip(&medians)
        .skip(1)
        .map(|(&n, &m)| (m / m0) / (n as f64 / n0))
        .collect();
    let statistic = growth.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(LemmaReport {
        lemma: "spike".into(),
        n: n_list.to_vec(),
        trials,
        statistic,
        threshold: 0.5,
        pass: bound_violations == 0 && sign_violations == 0 && statistic >= 0.5,
        details: json!({
            "medians": medians,
            "bound_violations": bound_violations,
            "sign_violations": sign_violations,
        }),
    })
}
