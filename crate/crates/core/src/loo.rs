//! Closed-form leave-one-out residuals, loss and accuracy for kernel ridge
//! regression, and the brute-force retraining oracle they are checked against.
//!
//! With `A = K (K + lambda I)^{-1}` the leave-one-out residual of point `i`
//! and output `k` is `(Y_ik - f_k(x_i)) / (1 - A_ii)`, where `f` is the single
//! fit on all `n` points. Loss is the mean over points of the *unhalved*
//! squared residual norm; accuracy compares `argmax(y_i - Delta_i)` with
//! `argmax(y_i)`.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::linalg::{drop_row, principal_submatrix, DEFAULT_RANK_TOL};
use crate::regression::{self, eigendecompose, row_argmax, EigenDecomposition};
use crate::{Error, Matrix, MatrixRef, Result};

/// Denominators below this are flagged (never dropped).
pub const FLAG_TOL: f64 = 1e-10;
/// Null-space mass below this makes a rank-deficient leave-one-out problem
/// degenerate.
pub const SINGULAR_TOL: f64 = 1e-14;

/// Which closed form produced a report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum LooMethod {
    /// `lambda > 0`.
    Regularized,
    /// `lambda -> 0` with `rank < n`.
    RankDeficient { rank: usize },
    /// `lambda -> 0` with `rank = n`.
    FullRank,
    /// Explicit retraining on every `n - 1` subproblem.
    BruteForce,
}

#[derive(Clone, Debug)]
pub struct LooReport {
    residuals: Matrix,
    loss: f64,
    accuracy: f64,
    diag_a: Vec<f64>,
    flagged: Vec<usize>,
    lambda: f64,
    method: LooMethod,
}

/// JSON form of a [`LooReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LooSummary {
    pub loss: f64,
    pub accuracy: f64,
    pub n: usize,
    pub lambda: f64,
    pub flagged_points: Vec<usize>,
}

impl LooReport {
    /// Residual matrix `Delta` (n x C).
    pub fn residuals(&self) -> MatrixRef<'_> {
        self.residuals.as_ref()
    }

    pub fn loss(&self) -> f64 {
        self.loss
    }

    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    /// Diagonal of the hat matrix `A` (its `lambda -> 0` limit on the
    /// zero-regularization paths; NaN for brute-force reports).
    pub fn diag_a(&self) -> &[f64] {
        &self.diag_a
    }

    /// Points whose leave-one-out denominator fell below [`FLAG_TOL`].
    pub fn flagged(&self) -> &[usize] {
        &self.flagged
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn method(&self) -> LooMethod {
        self.method
    }

    pub fn n(&self) -> usize {
        self.residuals.nrows()
    }

    pub fn summary(&self) -> LooSummary {
        LooSummary {
            loss: self.loss,
            accuracy: self.accuracy,
            n: self.n(),
            lambda: self.lambda,
            flagged_points: self.flagged.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.summary()).expect("summary is always serializable")
    }
}

/// `(1/n) sum_i sum_k Delta_ik^2`.
pub fn mean_squared_rows(residuals: MatrixRef<'_>) -> f64 {
    let n = residuals.nrows();
    let mut total = 0.0;
    for i in 0..n {
        for k in 0..residuals.ncols() {
            total += residuals[(i, k)] * residuals[(i, k)];
        }
    }
    total / n as f64
}

/// Fraction of points with `argmax(train_i - Delta_i) = argmax(eval_i)`.
fn argmax_accuracy(train: MatrixRef<'_>, delta: MatrixRef<'_>, eval: MatrixRef<'_>) -> f64 {
    let n = train.nrows();
    let shifted = Mat::from_fn(n, train.ncols(), |i, k| train[(i, k)] - delta[(i, k)]);
    let correct = (0..n)
        .filter(|&i| row_argmax(shifted.as_ref(), i) == row_argmax(eval, i))
        .count();
    correct as f64 / n as f64
}

fn check_targets(n: usize, y: MatrixRef<'_>) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("leave-one-out needs at least one point"));
    }
    if y.nrows() != n {
        return Err(Error::domain(format!("kernel has {n} points but targets have {} rows", y.nrows())));
    }
    if y.ncols() == 0 {
        return Err(Error::domain("targets need at least one column"));
    }
    Ok(())
}

fn report(
    residuals: Matrix,
    y: MatrixRef<'_>,
    diag_a: Vec<f64>,
    flagged: Vec<usize>,
    lambda: f64,
    method: LooMethod,
) -> LooReport {
    let loss = mean_squared_rows(residuals.as_ref());
    let accuracy = argmax_accuracy(y, residuals.as_ref(), y);
    LooReport {
        residuals,
        loss,
        accuracy,
        diag_a,
        flagged,
        lambda,
        method,
    }
}

/// Leave-one-out for `lambda > 0` from a single fit.
///
/// Uses a Cholesky factorization of `K + lambda I`, where the residual reduces
/// to `alpha_ik / [(K + lambda I)^{-1}]_ii`; falls back to the spectral form
/// when `lambda` is negligible against the trace or the factorization fails.
pub fn loo_regularized(k: MatrixRef<'_>, y: MatrixRef<'_>, lambda: f64) -> Result<LooReport> {
    if k.nrows() != k.ncols() {
        return Err(Error::domain("kernel matrix must be square"));
    }
    check_targets(k.nrows(), y)?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::domain(format!("regularized leave-one-out needs lambda > 0, got {lambda}")));
    }
    let n = k.nrows();
    let trace: f64 = (0..n).map(|i| k[(i, i)]).sum();
    if lambda > 1e-12 * trace.max(0.0) {
        if let Ok(llt) = regression::shifted(k, lambda).llt(Side::Lower) {
            let inv = llt.inverse();
            let alpha = inv.as_ref() * y;
            let mut diag_a = Vec::with_capacity(n);
            let mut flagged = Vec::new();
            let mut residuals = Mat::<f64>::zeros(n, y.ncols());
            for i in 0..n {
                let m_ii = inv[(i, i)];
                let gap = lambda * m_ii;
                if !(gap > 0.0) {
                    return Err(Error::Singular {
                        index: i,
                        detail: format!("1 - A_ii = {gap}"),
                    });
                }
                if gap < FLAG_TOL {
                    flagged.push(i);
                }
                diag_a.push(1.0 - gap);
                for c in 0..y.ncols() {
                    residuals[(i, c)] = alpha[(i, c)] / m_ii;
                }
            }
            return Ok(report(residuals, y, diag_a, flagged, lambda, LooMethod::Regularized));
        }
    }
    let eig = eigendecompose(k, DEFAULT_RANK_TOL)?;
    loo_regularized_eig(&eig, y, lambda)
}

/// Spectral form of the regularized residuals: eigen-directions beyond the
/// numerical rank carry weight 1, the others `lambda / (lambda + omega_j)`.
pub fn loo_regularized_eig(eig: &EigenDecomposition, y: MatrixRef<'_>, lambda: f64) -> Result<LooReport> {
    check_targets(eig.n(), y)?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::domain(format!("regularized leave-one-out needs lambda > 0, got {lambda}")));
    }
    let weights: Vec<f64> = eig
        .values()
        .iter()
        .enumerate()
        .map(|(j, &w)| if j < eig.rank() { lambda / (lambda + w) } else { 1.0 })
        .collect();
    let (residuals, denom) = spectral_residuals(eig, y, &weights);
    let mut flagged = Vec::new();
    for (i, &d) in denom.iter().enumerate() {
        if !(d > 0.0) {
            return Err(Error::Singular {
                index: i,
                detail: format!("1 - A_ii = {d}"),
            });
        }
        if d < FLAG_TOL {
            flagged.push(i);
        }
    }
    let diag_a = denom.iter().map(|d| 1.0 - d).collect();
    Ok(report(residuals, y, diag_a, flagged, lambda, LooMethod::Regularized))
}

/// `Delta_ik = (V diag(w) V^T Y)_ik / (sum_j w_j V_ij^2)`, returning the
/// residuals and the per-point denominators.
fn spectral_residuals(eig: &EigenDecomposition, y: MatrixRef<'_>, weights: &[f64]) -> (Matrix, Vec<f64>) {
    let v = eig.vectors();
    let n = eig.n();
    let numer = eig.apply_spectral(weights, y);
    let denom: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| weights[j] * v[(i, j)] * v[(i, j)]).sum())
        .collect();
    let residuals = Mat::from_fn(n, y.ncols(), |i, k| numer[(i, k)] / denom[i]);
    (residuals, denom)
}

/// Leave-one-out in the `lambda -> 0` limit.
///
/// With numerical rank `r < n` the residual is the projection of `Y` onto the
/// null space of `K`, normalised by each point's null-space mass; with
/// `r = n` the eigen-directions are weighted by `1 / omega_j`.
pub fn loo_zero_reg(eig: &EigenDecomposition, y: MatrixRef<'_>) -> Result<LooReport> {
    check_targets(eig.n(), y)?;
    let (n, r) = (eig.n(), eig.rank());
    if r == n {
        let weights: Vec<f64> = eig.values().iter().map(|w| 1.0 / w).collect();
        let (residuals, _) = spectral_residuals(eig, y, &weights);
        return Ok(report(residuals, y, vec![1.0; n], Vec::new(), 0.0, LooMethod::FullRank));
    }
    if eig.values()[r..].iter().any(|&w| w > 0.0) && r + 1 == n {
        log::warn!(
            "kernel is numerically rank {r} of {n} (smallest eigenvalue {:e}); using the rank-deficient formula",
            eig.values()[n - 1]
        );
    }
    let v = eig.vectors();
    let null = v.subcols(r, n - r);
    let numer = null * (null.transpose() * y);
    let mut flagged = Vec::new();
    let mut diag_a = Vec::with_capacity(n);
    let mut residuals = Mat::<f64>::zeros(n, y.ncols());
    for i in 0..n {
        let mass: f64 = (0..n - r).map(|j| null[(i, j)] * null[(i, j)]).sum();
        if mass < SINGULAR_TOL {
            return Err(Error::Singular {
                index: i,
                detail: format!("null-space mass {mass:e} of a rank-{r} kernel"),
            });
        }
        if mass < FLAG_TOL {
            flagged.push(i);
        }
        diag_a.push(1.0 - mass);
        for c in 0..y.ncols() {
            residuals[(i, c)] = numer[(i, c)] / mass;
        }
    }
    Ok(report(residuals, y, diag_a, flagged, 0.0, LooMethod::RankDeficient { rank: r }))
}

/// Zero-regularization leave-one-out of a model trained on `y_noisy` but
/// scored against `y_clean`. Requires a full-rank kernel.
pub fn loo_noisy(eig: &EigenDecomposition, y_noisy: MatrixRef<'_>, y_clean: MatrixRef<'_>) -> Result<LooReport> {
    check_targets(eig.n(), y_noisy)?;
    if y_clean.nrows() != y_noisy.nrows() || y_clean.ncols() != y_noisy.ncols() {
        return Err(Error::domain("noisy and clean targets differ in shape"));
    }
    if eig.rank() < eig.n() {
        return Err(Error::domain(format!(
            "noisy-label leave-one-out assumes a full-rank kernel, got rank {} of {}",
            eig.rank(),
            eig.n()
        )));
    }
    let base = loo_zero_reg(eig, y_noisy)?;
    let (n, c) = (eig.n(), y_noisy.ncols());
    let delta = base.residuals.as_ref();
    let residuals = Mat::from_fn(n, c, |i, k| delta[(i, k)] + (y_clean[(i, k)] - y_noisy[(i, k)]));
    Ok(LooReport {
        loss: mean_squared_rows(residuals.as_ref()),
        accuracy: argmax_accuracy(y_noisy, delta, y_clean),
        residuals,
        ..base
    })
}

fn check_signs(y: &[f64]) -> Result<()> {
    match y.iter().position(|&v| v != 1.0 && v != -1.0) {
        Some(i) => Err(Error::domain(format!("binary label {} at {i} is not +1 or -1", y[i]))),
        None => Ok(()),
    }
}

fn with_sign_accuracy(mut rep: LooReport, y: &[f64]) -> LooReport {
    let correct = y
        .iter()
        .enumerate()
        .filter(|&(i, &yi)| yi * rep.residuals[(i, 0)] < 1.0)
        .count();
    rep.accuracy = correct as f64 / y.len() as f64;
    rep
}

/// Binary (`y in {-1, +1}`) leave-one-out where the sign of the regressor is
/// the prediction: point `i` is correct iff `y_i Delta_i < 1`.
pub fn loo_binary(k: MatrixRef<'_>, y: &[f64], lambda: f64) -> Result<LooReport> {
    check_signs(y)?;
    let ym = Mat::from_fn(y.len(), 1, |i, _| y[i]);
    let rep = if lambda > 0.0 {
        loo_regularized(k, ym.as_ref(), lambda)?
    } else if lambda == 0.0 {
        loo_zero_reg(&eigendecompose(k, DEFAULT_RANK_TOL)?, ym.as_ref())?
    } else {
        return Err(Error::domain(format!("lambda must be >= 0, got {lambda}")));
    };
    Ok(with_sign_accuracy(rep, y))
}

/// [`loo_binary`] from a precomputed eigendecomposition.
pub fn loo_binary_eig(eig: &EigenDecomposition, y: &[f64], lambda: f64) -> Result<LooReport> {
    check_signs(y)?;
    let ym = Mat::from_fn(y.len(), 1, |i, _| y[i]);
    let rep = if lambda > 0.0 {
        loo_regularized_eig(eig, ym.as_ref(), lambda)?
    } else if lambda == 0.0 {
        loo_zero_reg(eig, ym.as_ref())?
    } else {
        return Err(Error::domain(format!("lambda must be >= 0, got {lambda}")));
    };
    Ok(with_sign_accuracy(rep, y))
}

/// Predictions `f^{-i}(x_i)` of the `n` models retrained without point `i`.
///
/// Each subproblem uses the principal submatrix of `K`; at `lambda = 0` the
/// fit is the pseudo-inverse one.
pub fn leave_one_out_predictions(k: MatrixRef<'_>, y: MatrixRef<'_>, lambda: f64) -> Result<Matrix> {
    if k.nrows() != k.ncols() {
        return Err(Error::domain("kernel matrix must be square"));
    }
    check_targets(k.nrows(), y)?;
    let n = k.nrows();
    if n < 2 {
        return Err(Error::domain("brute-force leave-one-out needs n >= 2"));
    }
    let mut preds = Mat::<f64>::zeros(n, y.ncols());
    for i in 0..n {
        let sub = principal_submatrix(k, i);
        let y_sub = drop_row(y, i);
        let model = if lambda > 0.0 {
            regression::fit(sub.as_ref(), y_sub.as_ref(), lambda)?
        } else {
            let eig = eigendecompose(sub.as_ref(), DEFAULT_RANK_TOL)?;
            regression::fit_eig(&eig, y_sub.as_ref(), 0.0)?
        };
        let cross = drop_row(k.subcols(i, 1), i);
        let pred = cross.transpose() * model.alpha();
        for c in 0..y.ncols() {
            preds[(i, c)] = pred[(0, c)];
        }
    }
    Ok(preds)
}

/// Reference leave-one-out by explicit retraining: fits every `n - 1` point
/// subproblem on `y` and scores the held-out prediction against row `i` of
/// `evaluate_against`.
pub fn brute_force_loo(
    k: MatrixRef<'_>,
    y: MatrixRef<'_>,
    lambda: f64,
    evaluate_against: MatrixRef<'_>,
) -> Result<LooReport> {
    if evaluate_against.nrows() != y.nrows() || evaluate_against.ncols() != y.ncols() {
        return Err(Error::domain("evaluation targets differ in shape from training targets"));
    }
    let preds = leave_one_out_predictions(k, y, lambda)?;
    let n = preds.nrows();
    let residuals = Mat::from_fn(n, y.ncols(), |i, c| evaluate_against[(i, c)] - preds[(i, c)]);
    let correct = (0..n)
        .filter(|&i| row_argmax(preds.as_ref(), i) == row_argmax(evaluate_against, i))
        .count();
    Ok(LooReport {
        loss: mean_squared_rows(residuals.as_ref()),
        accuracy: correct as f64 / n as f64,
        residuals,
        diag_a: vec![f64::NAN; n],
        flagged: Vec::new(),
        lambda,
        method: LooMethod::BruteForce,
    })
}

/// Brute-force binary leave-one-out: accuracy is the fraction of points with
/// `y_i f^{-i}(x_i) > 0`.
pub fn brute_force_loo_binary(k: MatrixRef<'_>, y: &[f64], lambda: f64) -> Result<LooReport> {
    check_signs(y)?;
    let ym = Mat::from_fn(y.len(), 1, |i, _| y[i]);
    let mut rep = brute_force_loo(k, ym.as_ref(), lambda, ym.as_ref())?;
    let correct = (0..y.len()).filter(|&i| y[i] * (y[i] - rep.residuals[(i, 0)]) > 0.0).count();
    rep.accuracy = correct as f64 / y.len() as f64;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::one_hot;

    #[test]
    fn identity_kernel_residuals_equal_targets() {
        let y = one_hot(&[0, 1, 2, 1], 3);
        let k = Mat::<f64>::identity(4, 4);
        for lambda in [1e-3, 0.5, 10.0] {
            let r = loo_regularized(k.as_ref(), y.as_ref(), lambda).unwrap();
            assert!((r.residuals() - y.as_ref()).norm_max() < 1e-14);
            assert!((r.loss() - 1.0).abs() < 1e-14);
            // y_i - Delta_i = 0, so argmax ties resolve to class 0.
            assert_eq!(r.accuracy(), 0.25);
        }
        let eig = eigendecompose(k.as_ref(), DEFAULT_RANK_TOL).unwrap();
        let r = loo_zero_reg(&eig, y.as_ref()).unwrap();
        assert_eq!(r.method(), LooMethod::FullRank);
        assert!((r.residuals() - y.as_ref()).norm_max() < 1e-14);
    }

    #[test]
    fn two_point_limit_matches_hand_algebra() {
        // Each single-point model predicts c * y_other.
        let c = 0.3;
        let k = Mat::from_fn(2, 2, |i, j| if i == j { 1.0 } else { c });
        let y = Mat::from_fn(2, 1, |i, _| if i == 0 { 1.0 } else { -1.0 });
        let r = loo_regularized(k.as_ref(), y.as_ref(), 1e-9).unwrap();
        assert!((r.loss() - (1.0 + c) * (1.0 + c)).abs() < 1e-7);
        let brute = brute_force_loo(k.as_ref(), y.as_ref(), 0.0, y.as_ref()).unwrap();
        assert!((brute.loss() - (1.0 + c) * (1.0 + c)).abs() < 1e-12);
    }

    #[test]
    fn identity_kernel_brute_force_predicts_zero() {
        let k = Mat::<f64>::identity(2, 2);
        let y = one_hot(&[0, 1], 2);
        let p = leave_one_out_predictions(k.as_ref(), y.as_ref(), 0.0).unwrap();
        assert_eq!(p.norm_max(), 0.0);
        assert!(leave_one_out_predictions(Mat::<f64>::identity(1, 1).as_ref(), one_hot(&[0], 1).as_ref(), 0.0).is_err());
    }

    #[test]
    fn binary_boundary_and_perfect_cases() {
        let k = Mat::<f64>::identity(4, 4);
        let y = [1.0, -1.0, -1.0, 1.0];
        let r = loo_binary(k.as_ref(), &y, 0.7).unwrap();
        assert_eq!(r.accuracy(), 0.0);
        assert!(loo_binary(k.as_ref(), &[1.0, 0.5, 1.0, 1.0], 0.1).is_err());
        // Identical points with identical labels: every held-out point is
        // predicted exactly, and the rank-one kernel leaves null-space mass
        // 2/3 on each point.
        let ones = Mat::from_fn(3, 3, |_, _| 1.0);
        let r = loo_binary(ones.as_ref(), &[1.0, 1.0, 1.0], 0.0).unwrap();
        assert!(r.residuals().norm_max() < 1e-12);
        assert_eq!(r.accuracy(), 1.0);
    }

    #[test]
    fn noisy_requires_full_rank_and_reduces_to_clean() {
        let u = [1.0, 2.0, 3.0];
        let k = Mat::from_fn(3, 3, |i, j| u[i] * u[j]);
        let eig = eigendecompose(k.as_ref(), DEFAULT_RANK_TOL).unwrap();
        let y = one_hot(&[0, 1, 0], 2);
        assert!(matches!(loo_noisy(&eig, y.as_ref(), y.as_ref()), Err(Error::Domain(_))));

        let k = Mat::from_fn(3, 3, |i, j| if i == j { 2.0 } else { 0.5 });
        let eig = eigendecompose(k.as_ref(), DEFAULT_RANK_TOL).unwrap();
        let a = loo_noisy(&eig, y.as_ref(), y.as_ref()).unwrap();
        let b = loo_zero_reg(&eig, y.as_ref()).unwrap();
        assert_eq!(a.loss().to_bits(), b.loss().to_bits());
        assert_eq!(a.accuracy().to_bits(), b.accuracy().to_bits());
    }

    #[test]
    fn negative_lambda_rejected() {
        let k = Mat::<f64>::identity(2, 2);
        let y = one_hot(&[0, 1], 2);
        assert!(loo_regularized(k.as_ref(), y.as_ref(), 0.0).is_err());
        assert!(loo_binary(k.as_ref(), &[1.0, -1.0], -1.0).is_err());
    }

    #[test]
    fn summary_json_has_contract_fields() {
        let k = Mat::<f64>::identity(2, 2);
        let y = one_hot(&[0, 1], 2);
        let r = loo_regularized(k.as_ref(), y.as_ref(), 1.0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in ["loss", "accuracy", "n", "lambda", "flagged_points"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
