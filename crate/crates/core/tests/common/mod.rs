//! Reference implementations that share no numerical code with the library:
//! plain nested-loop arithmetic and Gauss-Jordan elimination.

#![allow(dead_code)]

use kernel_loo::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Dense = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn to_dense(m: &Matrix) -> Dense {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn to_matrix(d: &Dense) -> Matrix {
    let cols = d.first().map_or(0, Vec::len);
    Matrix::from_fn(d.len(), cols, |i, j| d[i][j])
}

pub fn gaussian(n: usize, d: usize, r: &mut impl Rng) -> Dense {
    (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(r)).collect()).collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    (0..n)
        .map(|i| (0..m).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect())
        .collect()
}

pub fn transpose(a: &Dense) -> Dense {
    (0..a[0].len()).map(|j| a.iter().map(|row| row[j]).collect()).collect()
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn inverse(a: &Dense) -> Dense {
    let n = a.len();
    let mut aug: Dense = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs()))
            .unwrap();
        aug.swap(col, piv);
        let p = aug[col][col];
        assert!(p.abs() > 1e-300, "singular matrix");
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let f = aug[row][col];
                if f != 0.0 {
                    for j in 0..2 * n {
                        aug[row][j] -= f * aug[col][j];
                    }
                }
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Leave-one-out predictions by explicit ridge retraining:
/// `k(x_i, X_-i) (K_-i + lambda I)^{-1} Y_-i`.
pub fn loo_predictions(k: &Dense, y: &Dense, lambda: f64) -> Dense {
    let n = k.len();
    (0..n)
        .map(|i| {
            let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let sub: Dense = keep
                .iter()
                .map(|&a| keep.iter().map(|&b| k[a][b] + if a == b { lambda } else { 0.0 }).collect())
                .collect();
            let ys: Dense = keep.iter().map(|&a| y[a].clone()).collect();
            let alpha = matmul(&inverse(&sub), &ys);
            let row: Dense = vec![keep.iter().map(|&b| k[i][b]).collect()];
            matmul(&row, &alpha).remove(0)
        })
        .collect()
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

/// Unhalved mean squared residual and argmax accuracy of LOO predictions.
pub fn loo_loss_acc(preds: &Dense, y: &Dense) -> (f64, f64) {
    let n = y.len() as f64;
    let loss = preds
        .iter()
        .zip(y)
        .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n;
    let acc = preds.iter().zip(y).filter(|(p, t)| argmax(p) == argmax(t)).count() as f64 / n;
    (loss, acc)
}

pub fn one_hot(labels: &[usize], classes: usize) -> Dense {
    labels
        .iter()
        .map(|&l| (0..classes).map(|k| if k == l { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Random PSD matrix `G G^T / d` with `G` n x d Gaussian.
pub fn random_psd(n: usize, d: usize, r: &mut impl Rng) -> Dense {
    let g = gaussian(n, d, r);
    let mut k = matmul(&g, &transpose(&g));
    for row in k.iter_mut() {
        for v in row.iter_mut() {
            *v /= d as f64;
        }
    }
    k
}

/// Gaussian points rescaled onto the sphere of radius `sqrt(d)`, the scale of
/// standardized data.
pub fn sphere_points(n: usize, d: usize, r: &mut impl Rng) -> Dense {
    gaussian(n, d, r)
        .into_iter()
        .map(|row| {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            row.iter().map(|v| v * (d as f64).sqrt() / norm).collect()
        })
        .collect()
}
