//! Parameter-gradient features `phi(x) = grad_theta f_theta(x)` of a finite
//! two-hidden-layer ReLU network
//! `f(x) = w . relu(U relu(V x / sqrt(d)) / sqrt(m1)) / sqrt(m2)`
//! with standard normal parameters.
//!
//! Gradients are forward differences with step `1e-4 * |theta|` (`1e-4` at
//! zero). A perturbation only reaches the layers above it, so each
//! difference recomputes just those.

use faer::Mat;
use rand_distr::{Distribution, StandardNormal};

use crate::kernels::relu_in_place;
use crate::{rng, Error, Matrix, MatrixRef, Result};

pub const RELATIVE_STEP: f64 = 1e-4;

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn step(theta: f64) -> f64 {
    let h = if theta == 0.0 { RELATIVE_STEP } else { RELATIVE_STEP * theta.abs() };
    // Use the step actually representable at theta.
    (theta + h) - theta
}

/// `n x P` Jacobian with `P = m1 d + m2 m1 + m2`; columns are `V`
/// (row-major), then `U` (row-major), then `w`.
pub fn linearization_features(x: MatrixRef<'_>, m1: usize, m2: usize, seed: u64) -> Result<Matrix> {
    let (n, d) = (x.nrows(), x.ncols());
    if d == 0 || m1 == 0 || m2 == 0 {
        return Err(Error::domain("linearization needs positive input dimension and widths"));
    }
    let mut r = rng::rng(rng::derive(seed, "linearization"));
    let mut draw = |rows: usize, cols: usize| Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut r));
    let v: Matrix = draw(m1, d);
    let u: Matrix = draw(m2, m1);
    let w: Matrix = draw(m2, 1);
    let (sd, s1, s2) = ((d as f64).sqrt(), (m1 as f64).sqrt(), (m2 as f64).sqrt());

    let h1 = x * v.transpose() * faer::Scale(1.0 / sd);
    let mut a1 = h1.clone();
    relu_in_place(&mut a1);
    let h2 = a1.as_ref() * u.transpose() * faer::Scale(1.0 / s1);
    let mut a2 = h2.clone();
    relu_in_place(&mut a2);

    let p = m1 * d + m2 * m1 + m2;
    let mut jac = Mat::<f64>::zeros(n, p);
    let mut col = 0;

    let mut delta_a1 = vec![0.0; n];
    for a in 0..m1 {
        for b in 0..d {
            let hs = step(v[(a, b)]);
            for i in 0..n {
                delta_a1[i] = relu(h1[(i, a)] + hs * x[(i, b)] / sd) - a1[(i, a)];
            }
            for i in 0..n {
                if delta_a1[i] == 0.0 {
                    continue;
                }
                let mut df = 0.0;
                for c in 0..m2 {
                    let moved = relu(h2[(i, c)] + u[(c, a)] * delta_a1[i] / s1);
                    df += w[(c, 0)] * (moved - a2[(i, c)]);
                }
                jac[(i, col)] = df / s2 / hs;
            }
            col += 1;
        }
    }
    for a in 0..m2 {
        for b in 0..m1 {
            let hs = step(u[(a, b)]);
            for i in 0..n {
                let moved = relu(h2[(i, a)] + hs * a1[(i, b)] / s1);
                jac[(i, col)] = w[(a, 0)] * (moved - a2[(i, a)]) / s2 / hs;
            }
            col += 1;
        }
    }
    for a in 0..m2 {
        let hs = step(w[(a, 0)]);
        for i in 0..n {
            jac[(i, col)] = ((w[(a, 0)] + hs) * a2[(i, a)] - w[(a, 0)] * a2[(i, a)]) / s2 / hs;
        }
        col += 1;
    }
    debug_assert_eq!(col, p);
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn network(x: MatrixRef<'_>, v: &Matrix, u: &Matrix, w: &Matrix) -> Vec<f64> {
        let (d, m1, m2) = (x.ncols() as f64, v.nrows() as f64, u.nrows() as f64);
        (0..x.nrows())
            .map(|i| {
                let a1: Vec<f64> = (0..v.nrows())
                    .map(|a| relu((0..x.ncols()).map(|b| v[(a, b)] * x[(i, b)]).sum::<f64>() / d.sqrt()))
                    .collect();
                (0..u.nrows())
                    .map(|c| {
                        let h: f64 = (0..a1.len()).map(|a| u[(c, a)] * a1[a]).sum::<f64>() / m1.sqrt();
                        w[(c, 0)] * relu(h)
                    })
                    .sum::<f64>()
                    / m2.sqrt()
            })
            .collect()
    }

    #[test]
    fn matches_full_recomputation() {
        let (n, d, m1, m2, seed) = (6, 3, 4, 5, 9);
        let mut r = rng::rng(1);
        let x = Mat::from_fn(n, d, |_, _| StandardNormal.sample(&mut r));
        let jac = linearization_features(x.as_ref(), m1, m2, seed).unwrap();
        let mut pr = rng::rng(rng::derive(seed, "linearization"));
        let mut draw = |rows: usize, cols: usize| -> Matrix { Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut pr)) };
        let v = draw(m1, d);
        let u = draw(m2, m1);
        let w = draw(m2, 1);
        let base = network(x.as_ref(), &v, &u, &w);
        let mut col = 0;
        let check = |v: &Matrix, u: &Matrix, w: &Matrix, hs: f64, col: usize| {
            let moved = network(x.as_ref(), v, u, w);
            for i in 0..n {
                let fd = (moved[i] - base[i]) / hs;
                assert!((fd - jac[(i, col)]).abs() < 1e-9 * (1.0 + fd.abs()), "col {col} row {i}");
            }
        };
        for a in 0..m1 {
            for b in 0..d {
                let mut vv = v.clone();
                let hs = step(v[(a, b)]);
                vv[(a, b)] += hs;
                check(&vv, &u, &w, hs, col);
                col += 1;
            }
        }
        for a in 0..m2 {
            for b in 0..m1 {
                let mut uu = u.clone();
                let hs = step(u[(a, b)]);
                uu[(a, b)] += hs;
                check(&v, &uu, &w, hs, col);
                col += 1;
            }
        }
        for a in 0..m2 {
            let mut ww = w.clone();
            let hs = step(w[(a, 0)]);
            ww[(a, 0)] += hs;
            check(&v, &u, &ww, hs, col);
            col += 1;
        }
    }

    #[test]
    fn zero_inputs_give_zero_features() {
        let x = Mat::<f64>::zeros(5, 3);
        let jac = linearization_features(x.as_ref(), 4, 4, 0).unwrap();
        assert_eq!(crate::linalg::max_abs(jac.as_ref()), 0.0);
    }
}
