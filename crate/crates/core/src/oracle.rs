//! Randomized agreement checks between the closed-form leave-one-out paths
//! and explicit retraining. Used by `verify --lemma oracle` and the tests.

use faer::Mat;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use crate::dataio::one_hot;
use crate::kernels::{linear_kernel, ntk_kernel, KernelSpec};
use crate::linalg::DEFAULT_RANK_TOL;
use crate::loo::{
    brute_force_loo, brute_force_loo_binary, loo_binary, loo_noisy, loo_regularized, loo_zero_reg,
};
use crate::regression::eigendecompose;
use crate::stats::LemmaReport;
use crate::{rng, Error, Matrix, Result};

pub const REGULARIZED_REL_TOL: f64 = 1e-8;
pub const ZERO_REG_REL_TOL: f64 = 1e-6;
pub const CONTINUITY_REL_TOL: f64 = 1e-4;
pub const NOISY_REL_TOL: f64 = 1e-8;
pub const CLASS_CHOICES: [usize; 3] = [1, 2, 5];
pub const LAMBDA_CHOICES: [f64; 4] = [1e-6, 1e-2, 1.0, 10.0];

/// A random kernel/target pair.
#[derive(Clone, Debug)]
pub struct Instance {
    pub kernel: Matrix,
    pub targets: Matrix,
    pub labels: Vec<usize>,
    pub lambda: f64,
    pub classes: usize,
}

fn gaussian(n: usize, d: usize, r: &mut rng::Rng) -> Matrix {
    Mat::from_fn(n, d, |_, _| StandardNormal.sample(r))
}

/// Targets: one-hot labels for `C > 1`, random signs for `C = 1`.
fn targets(labels: &[usize], classes: usize, r: &mut rng::Rng) -> Matrix {
    if classes == 1 {
        Mat::from_fn(labels.len(), 1, |_, _| if r.random_bool(0.5) { 1.0 } else { -1.0 })
    } else {
        one_hot(labels, classes)
    }
}

/// Full-rank instance: depth-2 NTK on Gaussian inputs, `n in 8..=64`.
pub fn full_rank_instance(seed: u64, index: usize) -> Result<Instance> {
    let mut r = rng::rng(rng::derive_indexed(seed, "oracle-full", index as u64));
    let n = r.random_range(8..=64);
    let d = r.random_range(10..=20);
    let classes = CLASS_CHOICES[r.random_range(0..CLASS_CHOICES.len())];
    let lambda = LAMBDA_CHOICES[r.random_range(0..LAMBDA_CHOICES.len())];
    let x = gaussian(n, d, &mut r);
    let kernel = ntk_kernel(x.as_ref(), None, &KernelSpec::ntk(2))?;
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..classes)).collect();
    let targets = targets(&labels, classes, &mut r);
    Ok(Instance {
        kernel,
        targets,
        labels,
        lambda,
        classes,
    })
}

/// Rank-deficient instance: linear kernel on `d <= n/2` Gaussian features.
pub fn rank_deficient_instance(seed: u64, index: usize) -> Result<Instance> {
    let mut r = rng::rng(rng::derive_indexed(seed, "oracle-deficient", index as u64));
    let n = r.random_range(8..=64);
    let d = r.random_range(2..=n / 2);
    let classes = CLASS_CHOICES[r.random_range(0..CLASS_CHOICES.len())];
    let x = gaussian(n, d, &mut r);
    let kernel = linear_kernel(x.as_ref(), None)?;
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..classes)).collect();
    let targets = targets(&labels, classes, &mut r);
    Ok(Instance {
        kernel,
        targets,
        labels,
        lambda: 0.0,
        classes,
    })
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn report(lemma: &str, ns: Vec<usize>, worst: f64, tol: f64, acc_mismatches: usize, extra: serde_json::Value) -> LemmaReport {
    let trials = ns.len();
    LemmaReport {
        lemma: lemma.into(),
        n: ns,
        trials,
        statistic: worst,
        threshold: tol,
        pass: worst <= tol && acc_mismatches == 0,
        details: json!({ "accuracy_mismatches": acc_mismatches, "extra": extra }),
    }
}

/// Regularized closed form vs retraining: loss within 1e-8 relative,
/// accuracy equal.
pub fn check_regularized(instances: usize, seed: u64) -> Result<LemmaReport> {
    let (mut worst, mut mismatches, mut ns) = (0.0f64, 0, Vec::new());
    for i in 0..instances {
        let inst = full_rank_instance(seed, i)?;
        let k = inst.kernel.as_ref();
        let y = inst.targets.as_ref();
        let closed = loo_regularized(k, y, inst.lambda)?;
        let brute = brute_force_loo(k, y, inst.lambda, y)?;
        worst = worst.max(rel_err(closed.loss(), brute.loss()));
        mismatches += usize::from(closed.accuracy() != brute.accuracy());
        ns.push(k.nrows());
    }
    Ok(report("oracle-regularized", ns, worst, REGULARIZED_REL_TOL, mismatches, json!(null)))
}

/// Both zero-regularization branches vs pseudo-inverse retraining (1e-6
/// relative), plus continuity against `lambda = 1e-9` on the full-rank
/// instances (1e-4 relative).
pub fn check_zero_reg(instances: usize, seed: u64) -> Result<LemmaReport> {
    let (mut worst, mut mismatches, mut ns) = (0.0f64, 0, Vec::new());
    let mut worst_continuity = 0.0f64;
    let mut branches = [0usize; 2];
    for i in 0..instances {
        for inst in [rank_deficient_instance(seed, i)?, full_rank_instance(seed, i)?] {
            let k = inst.kernel.as_ref();
            let y = inst.targets.as_ref();
            let eig = eigendecompose(k, DEFAULT_RANK_TOL)?;
            let full = eig.rank() == eig.n();
            branches[usize::from(full)] += 1;
            let closed = loo_zero_reg(&eig, y)?;
            let brute = brute_force_loo(k, y, 0.0, y)?;
            worst = worst.max(rel_err(closed.loss(), brute.loss()));
            mismatches += usize::from(closed.accuracy() != brute.accuracy());
            if full {
                let near = loo_regularized(k, y, 1e-9)?;
                worst_continuity = worst_continuity.max(rel_err(closed.loss(), near.loss()));
            }
            ns.push(k.nrows());
        }
    }
    let mut rep = report(
        "oracle-zero-reg",
        ns,
        worst,
        ZERO_REG_REL_TOL,
        mismatches,
        json!({
            "rank_deficient_instances": branches[0],
            "full_rank_instances": branches[1],
            "continuity_rel_err": worst_continuity,
        }),
    );
    rep.pass &= worst_continuity <= CONTINUITY_REL_TOL && branches[0] > 0 && branches[1] > 0;
    Ok(rep)
}

/// Noisy-label closed form vs retraining on noisy labels scored against
/// clean ones; the noisy = clean reduction must be bit-identical.
pub fn check_noisy(instances: usize, seed: u64) -> Result<LemmaReport> {
    let (mut worst, mut mismatches, mut ns) = (0.0f64, 0, Vec::new());
    let mut reduction_exact = true;
    for i in 0..instances {
        let inst = full_rank_instance(seed, i)?;
        let k = inst.kernel.as_ref();
        let clean = inst.targets.as_ref();
        let mut r = rng::rng(rng::derive_indexed(seed, "oracle-noise", i as u64));
        let noisy = if inst.classes == 1 {
            Mat::from_fn(clean.nrows(), 1, |i, _| if r.random_bool(0.5) { -clean[(i, 0)] } else { clean[(i, 0)] })
        } else {
            let labels: Vec<usize> = inst
                .labels
                .iter()
                .map(|&l| if r.random_bool(0.5) { r.random_range(0..inst.classes) } else { l })
                .collect();
            one_hot(&labels, inst.classes)
        };
        let eig = eigendecompose(k, DEFAULT_RANK_TOL)?;
        if eig.rank() < eig.n() {
            return Err(Error::Numerical(format!("oracle instance {i} is not full rank")));
        }
        let closed = loo_noisy(&eig, noisy.as_ref(), clean)?;
        let brute = brute_force_loo(k, noisy.as_ref(), 0.0, clean)?;
        worst = worst.max(rel_err(closed.loss(), brute.loss()));
        mismatches += usize::from(closed.accuracy() != brute.accuracy());

        let same = loo_noisy(&eig, clean, clean)?;
        let plain = loo_zero_reg(&eig, clean)?;
        reduction_exact &= same.residuals() == plain.residuals()
            && same.loss() == plain.loss()
            && same.accuracy() == plain.accuracy();
        ns.push(k.nrows());
    }
    let mut rep = report("oracle-noisy", ns, worst, NOISY_REL_TOL, mismatches, json!({ "reduction_bit_exact": reduction_exact }));
    rep.pass &= reduction_exact;
    Ok(rep)
}

/// Binary sign criterion vs sign agreement of retrained predictors; the
/// statistic counts accuracy mismatches.
pub fn check_binary(instances: usize, seed: u64) -> Result<LemmaReport> {
    let mut mismatches = 0usize;
    let mut ns = Vec::new();
    for i in 0..instances {
        let inst = full_rank_instance(seed, i)?;
        let mut r = rng::rng(rng::derive_indexed(seed, "oracle-binary", i as u64));
        let y: Vec<f64> = (0..inst.kernel.nrows())
            .map(|_| if r.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let k = inst.kernel.as_ref();
        let closed = loo_binary(k, &y, inst.lambda)?;
        let brute = brute_force_loo_binary(k, &y, inst.lambda)?;
        mismatches += usize::from(closed.accuracy() != brute.accuracy());
        ns.push(y.len());
    }
    let mut rep = report("oracle-binary", ns, mismatches as f64, 0.0, mismatches, json!(null));
    rep.pass = mismatches == 0;
    Ok(rep)
}

/// All four checks on `instances` random instances each.
pub fn oracle_suite(instances: usize, seed: u64) -> Result<Vec<LemmaReport>> {
    Ok(vec![
        check_regularized(instances, seed)?,
        check_zero_reg(instances, seed)?,
        check_noisy(instances, seed)?,
        check_binary(instances, seed)?,
    ])
}
