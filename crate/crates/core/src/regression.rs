//! Kernel ridge regression, its zero-regularization (pseudo-inverse) limit,
//! and the eigendecomposition shared with the leave-one-out formulas.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::linalg::{asymmetry, DEFAULT_RANK_TOL};
use crate::{Error, Matrix, MatrixRef, Result};

/// `K = V diag(omega) V^T` with eigenvalues in descending order.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    vectors: Matrix,
    values: Vec<f64>,
    rank: usize,
    rel_tol: f64,
}

impl EigenDecomposition {
    /// Eigenvectors as columns, ordered like [`values`](Self::values).
    pub fn vectors(&self) -> MatrixRef<'_> {
        self.vectors.as_ref()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of eigenvalues above `rel_tol * omega_1`.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rel_tol(&self) -> f64 {
        self.rel_tol
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Assembles a decomposition from explicit factors, e.g. a sampled
    /// orthogonal matrix and a chosen spectrum. Values are sorted descending.
    pub fn from_parts(vectors: Matrix, values: Vec<f64>, rel_tol: f64) -> Result<Self> {
        let n = values.len();
        if vectors.nrows() != n || vectors.ncols() != n {
            return Err(Error::domain("eigenvector matrix must be n x n"));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let vectors = Mat::from_fn(n, n, |i, j| vectors[(i, order[j])]);
        let values: Vec<f64> = order.iter().map(|&j| values[j]).collect();
        let rank = numerical_rank(&values, rel_tol);
        Ok(EigenDecomposition {
            vectors,
            values,
            rank,
            rel_tol,
        })
    }

    /// `V diag(omega) V^T`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.n();
        let scaled = Mat::from_fn(n, n, |i, j| self.vectors[(i, j)] * self.values[j]);
        scaled.as_ref() * self.vectors.transpose()
    }

    /// `V diag(weights) V^T Y`.
    pub(crate) fn apply_spectral(&self, weights: &[f64], y: MatrixRef<'_>) -> Matrix {
        let mut proj = self.vectors.transpose() * y;
        for j in 0..proj.nrows() {
            for k in 0..proj.ncols() {
                proj[(j, k)] *= weights[j];
            }
        }
        self.vectors.as_ref() * proj.as_ref()
    }
}

fn numerical_rank(values: &[f64], rel_tol: f64) -> usize {
    match values.first() {
        Some(&top) if top > 0.0 => values.iter().filter(|&&w| w > rel_tol * top).count(),
        _ => 0,
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted descending.
pub fn eigendecompose(k: MatrixRef<'_>, rel_tol: f64) -> Result<EigenDecomposition> {
    if k.nrows() != k.ncols() {
        return Err(Error::domain("eigendecomposition needs a square matrix"));
    }
    if let Some((i, j)) = asymmetry(k) {
        return Err(Error::domain(format!("matrix is not symmetric at ({i}, {j})")));
    }
    if !(rel_tol > 0.0) {
        return Err(Error::domain("rank tolerance must be positive"));
    }
    let n = k.nrows();
    let evd = k
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition did not converge: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer returns ascending order.
    let values: Vec<f64> = (0..n).map(|j| s[n - 1 - j]).collect();
    let vectors = Mat::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    let rank = numerical_rank(&values, rel_tol);
    Ok(EigenDecomposition {
        vectors,
        values,
        rank,
        rel_tol,
    })
}

/// Dual coefficients of a fitted kernel ridge regressor.
#[derive(Clone, Debug)]
pub struct RidgeModel {
    alpha: Matrix,
    lambda: f64,
}

impl RidgeModel {
    pub fn alpha(&self) -> MatrixRef<'_> {
        self.alpha.as_ref()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Number of training points.
    pub fn n(&self) -> usize {
        self.alpha.nrows()
    }
}

fn check_fit_shapes(n: usize, y: MatrixRef<'_>, lambda: f64) -> Result<()> {
    if y.nrows() != n {
        return Err(Error::domain(format!("kernel is {n}x{n} but targets have {} rows", y.nrows())));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::domain(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    Ok(())
}

/// Fits `alpha = (K + lambda I)^{-1} Y`, or `K^+ Y` when `lambda = 0`.
///
/// A Cholesky solve is used when `lambda > 1e-12 * omega_1` (bounded above by
/// the trace); everything else goes through the eigendecomposition.
pub fn fit(k: MatrixRef<'_>, y: MatrixRef<'_>, lambda: f64) -> Result<RidgeModel> {
    if k.nrows() != k.ncols() {
        return Err(Error::domain("kernel matrix must be square"));
    }
    check_fit_shapes(k.nrows(), y, lambda)?;
    let n = k.nrows();
    let trace: f64 = (0..n).map(|i| k[(i, i)]).sum();
    if lambda > 1e-12 * trace.max(0.0) {
        if let Some(alpha) = cholesky_solve(k, y, lambda) {
            return Ok(RidgeModel { alpha, lambda });
        }
    }
    let eig = eigendecompose(k, DEFAULT_RANK_TOL)?;
    fit_eig(&eig, y, lambda)
}

/// Solves `(K + lambda I) X = Y` by Cholesky; `None` if the shifted matrix is
/// not numerically positive definite.
pub(crate) fn cholesky_solve(k: MatrixRef<'_>, y: MatrixRef<'_>, lambda: f64) -> Option<Matrix> {
    let shifted = shifted(k, lambda);
    let llt = shifted.llt(Side::Lower).ok()?;
    Some(llt.solve(y))
}

pub(crate) fn shifted(k: MatrixRef<'_>, lambda: f64) -> Matrix {
    let n = k.nrows();
    Mat::from_fn(n, n, |i, j| if i == j { k[(i, j)] + lambda } else { k[(i, j)] })
}

/// Fit through the spectrum: `1 / (omega + lambda)` for `lambda > 0`; for
/// `lambda = 0` only eigenvalues counted in the numerical rank are inverted.
pub fn fit_eig(eig: &EigenDecomposition, y: MatrixRef<'_>, lambda: f64) -> Result<RidgeModel> {
    check_fit_shapes(eig.n(), y, lambda)?;
    let weights: Vec<f64> = eig
        .values()
        .iter()
        .enumerate()
        .map(|(j, &w)| {
            if lambda > 0.0 {
                1.0 / (w.max(0.0) + lambda)
            } else if j < eig.rank() {
                1.0 / w
            } else {
                0.0
            }
        })
        .collect();
    Ok(RidgeModel {
        alpha: eig.apply_spectral(&weights, y),
        lambda,
    })
}

/// `K_cross * alpha` for a `n_test x n` cross-kernel block.
pub fn predict(model: &RidgeModel, k_cross: MatrixRef<'_>) -> Result<Matrix> {
    if k_cross.ncols() != model.n() {
        return Err(Error::domain(format!(
            "cross kernel has {} columns, model was fit on {} points",
            k_cross.ncols(),
            model.n()
        )));
    }
    Ok(k_cross * model.alpha.as_ref())
}

/// Index of the largest entry; ties go to the lowest index and NaN never wins.
pub fn argmax<I: IntoIterator<Item = f64>>(values: I) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (k, v) in values.into_iter().enumerate() {
        if v > best_val || (k == 0 && !v.is_nan()) {
            best = k;
            best_val = v;
        }
    }
    best
}

pub(crate) fn row_argmax(m: MatrixRef<'_>, i: usize) -> usize {
    argmax((0..m.ncols()).map(|k| m[(i, k)]))
}

/// Mean half squared error and argmax accuracy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub loss: f64,
    pub accuracy: f64,
}

/// `loss = mean_i 1/2 ||pred_i - y_i||^2`, `accuracy = mean_i [argmax pred_i
/// = argmax y_i]`.
pub fn eval_metrics(pred: MatrixRef<'_>, y: MatrixRef<'_>) -> Result<Metrics> {
    if pred.nrows() != y.nrows() || pred.ncols() != y.ncols() {
        return Err(Error::domain(format!(
            "prediction shape {}x{} differs from target shape {}x{}",
            pred.nrows(),
            pred.ncols(),
            y.nrows(),
            y.ncols()
        )));
    }
    let n = pred.nrows();
    if n == 0 {
        return Err(Error::domain("no rows to evaluate"));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for i in 0..n {
        loss += 0.5 * (0..pred.ncols()).map(|k| (pred[(i, k)] - y[(i, k)]).powi(2)).sum::<f64>();
        if row_argmax(pred, i) == row_argmax(y, i) {
            correct += 1;
        }
    }
    Ok(Metrics {
        loss: loss / n as f64,
        accuracy: correct as f64 / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::one_hot;

    fn diag(values: &[f64]) -> Matrix {
        Mat::from_fn(values.len(), values.len(), |i, j| if i == j { values[i] } else { 0.0 })
    }

    #[test]
    fn eigendecompose_reference_cases() {
        let e = eigendecompose(Mat::<f64>::identity(3, 3).as_ref(), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(e.values(), &[1.0, 1.0, 1.0]);
        assert_eq!(e.rank(), 3);
        let e = eigendecompose(diag(&[1.0, 4.0, 0.0]).as_ref(), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(e.values(), &[4.0, 1.0, 0.0]);
        assert_eq!(e.rank(), 2);
        let u = [1.0, 2.0, -2.0];
        let outer = Mat::from_fn(3, 3, |i, j| u[i] * u[j]);
        let e = eigendecompose(outer.as_ref(), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(e.rank(), 1);
        assert!((e.values()[0] - 9.0).abs() < 1e-12);
        let bad = Mat::from_fn(2, 2, |i, j| (i + 3 * j) as f64);
        assert!(eigendecompose(bad.as_ref(), DEFAULT_RANK_TOL).is_err());
    }

    #[test]
    fn identity_fits() {
        let y = one_hot(&[0, 1, 1], 2);
        let k = Mat::<f64>::identity(3, 3);
        let m0 = fit(k.as_ref(), y.as_ref(), 0.0).unwrap();
        assert!((m0.alpha() - y.as_ref()).norm_max() < 1e-15);
        let m1 = fit(k.as_ref(), y.as_ref(), 1.0).unwrap();
        assert!((m1.alpha() - y.as_ref() * faer::Scale(0.5)).norm_max() < 1e-15);
    }

    #[test]
    fn interpolation_and_zero_cross_row() {
        let x = Mat::from_fn(4, 4, |i, j| if i == j { 2.0 } else { 0.3 });
        let y = one_hot(&[0, 1, 0, 1], 2);
        let m = fit(x.as_ref(), y.as_ref(), 0.0).unwrap();
        let p = predict(&m, x.as_ref()).unwrap();
        assert!((p.as_ref() - y.as_ref()).norm_max() < 1e-12);
        let zero = Mat::<f64>::zeros(1, 4);
        assert_eq!(predict(&m, zero.as_ref()).unwrap().norm_max(), 0.0);
        assert!(predict(&m, Mat::<f64>::zeros(1, 3).as_ref()).is_err());
    }

    #[test]
    fn metrics_reference_values() {
        let y = one_hot(&[0, 1, 1, 0], 2);
        let m = eval_metrics(y.as_ref(), y.as_ref()).unwrap();
        assert_eq!((m.loss, m.accuracy), (0.0, 1.0));
        let zero = Mat::<f64>::zeros(4, 2);
        let m = eval_metrics(zero.as_ref(), y.as_ref()).unwrap();
        assert_eq!((m.loss, m.accuracy), (0.5, 0.5));
        let neg = y.as_ref() * faer::Scale(-1.0);
        let m = eval_metrics(neg.as_ref(), y.as_ref()).unwrap();
        assert_eq!(m.loss, 2.0);
    }

    #[test]
    fn argmax_ties_prefer_lowest_index() {
        assert_eq!(argmax([0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax([1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax([f64::NAN, 1.0]), 1);
        assert_eq!(argmax([-5.0, -7.0]), 0);
    }
}
