//! Gram matrices for linear, NNGP, NTK and random-feature kernels of
//! fully-connected ReLU networks.
//!
//! Depth counts weight matrices: depth 1 is the linear base kernel
//! `<x, x'> / sqrt(d)` and every further layer applies one step of the ReLU
//! Gaussian-expectation recursion.

use std::f64::consts::PI;
use std::path::Path;

use faer::Mat;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::linalg::{asymmetry, mirror_lower};
use crate::{rng, Error, Matrix, MatrixRef, Result};

pub use crate::linalg::rank_of;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    Linear,
    Nngp,
    Ntk,
    RandomFeature,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Nonlinearity {
    #[default]
    Relu,
}

/// Architecture of the kernel.
///
/// `widths` lists the hidden widths of a random-feature model and must be
/// empty for every other family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelFamily,
    #[serde(default = "one")]
    pub depth: usize,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
    #[serde(default)]
    pub widths: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl KernelSpec {
    pub fn linear() -> Self {
        Self::infinite(KernelFamily::Linear, 1)
    }

    pub fn nngp(depth: usize) -> Self {
        Self::infinite(KernelFamily::Nngp, depth)
    }

    pub fn ntk(depth: usize) -> Self {
        Self::infinite(KernelFamily::Ntk, depth)
    }

    /// Frozen random ReLU layers of the given widths; the trained top layer
    /// makes the depth `widths.len() + 1`.
    pub fn random_features(widths: Vec<usize>, seed: u64) -> Self {
        KernelSpec {
            family: KernelFamily::RandomFeature,
            depth: widths.len() + 1,
            nonlinearity: Nonlinearity::Relu,
            widths,
            seed,
        }
    }

    fn infinite(family: KernelFamily, depth: usize) -> Self {
        KernelSpec {
            family,
            depth,
            nonlinearity: Nonlinearity::Relu,
            widths: Vec::new(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::domain("kernel depth must be at least 1"));
        }
        match self.family {
            KernelFamily::RandomFeature => {
                if self.widths.is_empty() {
                    return Err(Error::domain("random-feature kernel needs at least one width"));
                }
                if self.widths.contains(&0) {
                    return Err(Error::domain("random-feature widths must be positive"));
                }
            }
            _ if !self.widths.is_empty() => {
                return Err(Error::domain("widths are only meaningful for random-feature kernels"));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Symmetric training Gram matrix, optionally with a test-vs-train block.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    values: Matrix,
    cross: Option<Matrix>,
}

impl KernelMatrix {
    /// Wraps a square matrix after checking symmetry.
    pub fn new(values: Matrix) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::domain(format!(
                "kernel matrix must be square, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if let Some((i, j)) = asymmetry(values.as_ref()) {
            return Err(Error::domain(format!(
                "kernel matrix is not symmetric at ({i}, {j}): {} vs {}",
                values[(i, j)],
                values[(j, i)]
            )));
        }
        Ok(KernelMatrix { values, cross: None })
    }

    pub fn with_cross(mut self, cross: Matrix) -> Result<Self> {
        if cross.ncols() != self.n() {
            return Err(Error::domain(format!(
                "cross block has {} columns, expected {}",
                cross.ncols(),
                self.n()
            )));
        }
        self.cross = Some(cross);
        Ok(self)
    }

    pub fn values(&self) -> MatrixRef<'_> {
        self.values.as_ref()
    }

    pub fn cross(&self) -> Option<MatrixRef<'_>> {
        self.cross.as_ref().map(Mat::as_ref)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn into_parts(self) -> (Matrix, Option<Matrix>) {
        (self.values, self.cross)
    }

    /// Smallest eigenvalue is at least `-1e-8` times the largest.
    pub fn is_psd(&self) -> Result<bool> {
        let ev = self
            .values
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .map_err(|e| Error::Numerical(format!("eigenvalues: {e:?}")))?;
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        Ok(lo >= -1e-8 * hi.max(0.0))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::linalg::write_matrix_csv(path, self.values.as_ref())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        KernelMatrix::new(crate::linalg::read_matrix_csv(path, false)?)
    }
}

/// `K_ij = <a_i, b_j> / sqrt(d)`. `b = None` means `b = a` and yields an
/// exactly symmetric matrix.
pub fn linear_kernel(a: MatrixRef<'_>, b: Option<MatrixRef<'_>>) -> Result<Matrix> {
    let d = a.ncols();
    if let Some(b) = b {
        if b.ncols() != d {
            return Err(Error::domain(format!("dimension mismatch: {d} vs {}", b.ncols())));
        }
    }
    if d == 0 {
        return Err(Error::domain("inputs have dimension 0"));
    }
    let scale = 1.0 / (d as f64).sqrt();
    match b {
        None => {
            let mut k = a * a.transpose() * faer::Scale(scale);
            mirror_lower(&mut k);
            Ok(k)
        }
        Some(b) => Ok(a * b.transpose() * faer::Scale(scale)),
    }
}

/// One step of the ReLU recursion from the 2x2 covariance
/// `[[a, c], [c, b]]`: returns `(E[relu(z1) relu(z2)], E[relu'(z1) relu'(z2)])`
/// for `z ~ N(0, [[a, c], [c, b]])`.
pub fn relu_expectations(a: f64, b: f64, c: f64) -> (f64, f64) {
    let norm = (a * b).sqrt();
    if !(norm > 0.0) {
        return (0.0, 0.0);
    }
    let cos = (c / norm).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    let next = norm / (2.0 * PI) * (sin + (PI - theta) * cos);
    let deriv = (PI - theta) / (2.0 * PI);
    (next, deriv)
}

/// Walks the recursion for one input pair; returns `(Sigma^(L), Theta^(L))`.
///
/// The diagonal takes the exact `cos = 1` step: `acos` near 1 turns rounding
/// in `c / sqrt(a b)` into errors of order `sqrt(eps)`.
fn recurse(mut a: f64, mut b: f64, mut c: f64, depth: usize, diagonal: bool) -> (f64, f64) {
    let mut theta = c;
    for _ in 1..depth {
        let (next, deriv) = if diagonal { (a / 2.0, 0.5) } else { relu_expectations(a, b, c) };
        theta = theta * deriv + next;
        c = next;
        a /= 2.0;
        b /= 2.0;
    }
    (c, theta)
}

fn infinite_width(a: MatrixRef<'_>, b: Option<MatrixRef<'_>>, spec: &KernelSpec, ntk: bool) -> Result<Matrix> {
    spec.validate()?;
    let base = linear_kernel(a, b)?;
    let d = a.ncols() as f64;
    let sq_norms = |m: MatrixRef<'_>| -> Result<Vec<f64>> {
        (0..m.nrows())
            .map(|i| {
                let s: f64 = (0..m.ncols()).map(|j| m[(i, j)] * m[(i, j)]).sum::<f64>() / d.sqrt();
                if s > 0.0 {
                    Ok(s)
                } else {
                    Err(Error::domain(format!("input row {i} has zero norm")))
                }
            })
            .collect()
    };
    let na = sq_norms(a)?;
    let pick = |s: f64, t: f64| if ntk { t } else { s };
    match b {
        None => {
            let n = a.nrows();
            let mut k = Mat::<f64>::zeros(n, n);
            for j in 0..n {
                for i in j..n {
                    let (s, t) = if i == j {
                        recurse(na[i], na[i], na[i], spec.depth, true)
                    } else {
                        recurse(na[i], na[j], base[(i, j)], spec.depth, false)
                    };
                    k[(i, j)] = pick(s, t);
                }
            }
            mirror_lower(&mut k);
            Ok(k)
        }
        Some(b) => {
            let nb = sq_norms(b)?;
            Ok(Mat::from_fn(a.nrows(), b.nrows(), |i, j| {
                let (s, t) = recurse(na[i], nb[j], base[(i, j)], spec.depth, false);
                pick(s, t)
            }))
        }
    }
}

/// NNGP kernel `Sigma^(L)` of a depth-`L` ReLU network.
pub fn nngp_kernel(a: MatrixRef<'_>, b: Option<MatrixRef<'_>>, spec: &KernelSpec) -> Result<Matrix> {
    infinite_width(a, b, spec, false)
}

/// Neural tangent kernel `Theta^(L)` of a depth-`L` ReLU network.
pub fn ntk_kernel(a: MatrixRef<'_>, b: Option<MatrixRef<'_>>, spec: &KernelSpec) -> Result<Matrix> {
    infinite_width(a, b, spec, true)
}

/// Features of the frozen random layers, `n x widths.last()`.
///
/// Weights are `N(0, 1 / fan_in)` without biases. Rows of each weight matrix
/// are drawn in order, so a narrower layer uses a prefix of the rows of a
/// wider one with the same seed.
pub fn random_feature_map(a: MatrixRef<'_>, spec: &KernelSpec) -> Result<Matrix> {
    spec.validate()?;
    if spec.family != KernelFamily::RandomFeature {
        return Err(Error::domain("random_feature_map needs a random-feature spec"));
    }
    let mut h = a.to_owned();
    for (layer, &width) in spec.widths.iter().enumerate() {
        let fan_in = h.ncols();
        if fan_in == 0 {
            return Err(Error::domain("inputs have dimension 0"));
        }
        let w = random_weights(width, fan_in, rng::derive_indexed(spec.seed, "random-features", layer as u64));
        let mut next = h.as_ref() * w.transpose();
        relu_in_place(&mut next);
        h = next;
    }
    Ok(h)
}

pub(crate) fn random_weights(rows: usize, cols: usize, seed: u64) -> Matrix {
    let normal = Normal::new(0.0, 1.0 / (cols as f64).sqrt()).expect("finite std");
    let mut rng = rng::rng(seed);
    let mut w = Mat::<f64>::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            w[(i, j)] = normal.sample(&mut rng);
        }
    }
    w
}

pub(crate) fn relu_in_place(m: &mut Matrix) {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] < 0.0 {
                m[(i, j)] = 0.0;
            }
        }
    }
}

/// `phi_a phi_b^T / m`; `phi_b = None` gives the symmetric training Gram.
pub fn feature_gram(phi_a: MatrixRef<'_>, phi_b: Option<MatrixRef<'_>>) -> Result<Matrix> {
    let m = phi_a.ncols();
    if m == 0 {
        return Err(Error::domain("feature map has no columns"));
    }
    let scale = faer::Scale(1.0 / m as f64);
    match phi_b {
        None => {
            let mut k = phi_a * phi_a.transpose() * scale;
            mirror_lower(&mut k);
            Ok(k)
        }
        Some(b) if b.ncols() != m => Err(Error::domain("feature widths differ")),
        Some(b) => Ok(phi_a * b.transpose() * scale),
    }
}

/// Training Gram matrix of `spec` on `train`, plus the `test x train` block
/// when `test` is given.
pub fn build_kernel(spec: &KernelSpec, train: MatrixRef<'_>, test: Option<MatrixRef<'_>>) -> Result<KernelMatrix> {
    spec.validate()?;
    let (k, cross) = match spec.family {
        KernelFamily::Linear => {
            if spec.depth != 1 {
                return Err(Error::domain("the linear kernel has depth 1"));
            }
            (linear_kernel(train, None)?, test.map(|t| linear_kernel(t, Some(train))).transpose()?)
        }
        KernelFamily::Nngp => (
            nngp_kernel(train, None, spec)?,
            test.map(|t| nngp_kernel(t, Some(train), spec)).transpose()?,
        ),
        KernelFamily::Ntk => (
            ntk_kernel(train, None, spec)?,
            test.map(|t| ntk_kernel(t, Some(train), spec)).transpose()?,
        ),
        KernelFamily::RandomFeature => {
            let phi = random_feature_map(train, spec)?;
            let cross = match test {
                Some(t) => Some(feature_gram(random_feature_map(t, spec)?.as_ref(), Some(phi.as_ref()))?),
                None => None,
            };
            (feature_gram(phi.as_ref(), None)?, cross)
        }
    };
    let km = KernelMatrix::new(k)?;
    match cross {
        Some(c) => km.with_cross(c),
        None => Ok(km),
    }
}
