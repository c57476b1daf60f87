//! Sweep families on small synthetic problems.

use kernel_loo::dataio::{synth_blobs, Dataset};
use kernel_loo::experiments::{
    per_knob_median, prepare_data, run_noise_sweep, run_rank_sweep, run_sweep, run_sweep_on, run_transfer_eval,
    split_dataset, RankVariant, SplitData, SweepConfig,
};
use kernel_loo::linalg::DEFAULT_RANK_TOL;
use kernel_loo::loo::loo_zero_reg;
use kernel_loo::regression::eigendecompose;
use kernel_loo::kernels::{build_kernel, KernelSpec};
use kernel_loo::{Error, Matrix};
use serde_json::json;

fn config(v: serde_json::Value) -> SweepConfig {
    SweepConfig::from_json(&v.to_string()).unwrap()
}

fn rank_config(variant: &str, grid: &[f64], fixed: Option<usize>) -> SweepConfig {
    config(json!({
        "family": "rank",
        "grid": grid,
        "kernel": { "family": "random-feature", "depth": 2 },
        "repeats": 2,
        "seed": 3,
        "dataset": { "source": "synth-blobs", "n": 50, "d": 10, "classes": 2, "separation": 1.0 },
        "rank_variant": variant,
        "fixed_width": fixed,
    }))
}

#[test]
fn depth_one_rank_is_min_of_width_and_n() {
    let cfg = rank_config("depth1", &[5.0, 20.0, 39.0, 40.0, 41.0, 80.0], None);
    let recs = run_sweep(&cfg, 1).unwrap();
    assert_eq!(recs.len(), 12);
    for r in &recs {
        assert_eq!(r.kernel_rank, (r.knob as usize).min(40), "{r:?}");
    }
}

#[test]
fn depth_two_rank_is_bounded_by_the_last_width() {
    // The ReLU between the layers is not linear, so only the width of the
    // feature layer bounds the rank; the first width does not.
    let cfg = rank_config("depth2-m1", &[5.0, 10.0, 40.0, 80.0, 160.0], Some(15));
    let recs = run_sweep(&cfg, 1).unwrap();
    for r in &recs {
        assert!(r.kernel_rank <= 15, "{r:?}");
    }
    assert!(recs.iter().any(|r| r.kernel_rank > r.knob as usize));
    let cfg = rank_config("depth2-m2", &[10.0, 40.0, 80.0], Some(25));
    for r in run_sweep(&cfg, 1).unwrap() {
        assert!(r.kernel_rank <= (r.knob as usize).min(40), "{r:?}");
    }
}

#[test]
fn linearization_rank_is_finite_and_bounded() {
    let cfg = rank_config("linearization", &[1.0, 2.0, 4.0], None);
    let recs = run_sweep(&cfg, 1).unwrap();
    for r in &recs {
        let m = r.knob as usize;
        let params = m * 10 + m * m + m;
        assert!(r.kernel_rank <= params.min(40));
    }
    // A width-one network can be dead on every input; wider ones are not.
    assert!(recs.iter().filter(|r| r.knob == 4.0).all(|r| r.kernel_rank > 0));
    let mut bad = rank_config("linearization", &[1.0], None);
    bad.grid = vec![65.0];
    assert!(matches!(bad.validate(), Err(Error::Config(_))));
}

#[test]
fn zero_inputs_have_rank_zero() {
    let mut cfg = rank_config("depth1", &[3.0, 30.0], None);
    for variant in [RankVariant::Depth1, RankVariant::Linearization] {
        cfg.rank_variant = variant;
        let zeros = |n: usize| Dataset::from_labels(Matrix::zeros(n, 10), &(0..n).map(|i| i % 2).collect::<Vec<_>>(), 2).unwrap();
        let data = SplitData { train: zeros(20), test: zeros(5), identical: false };
        for r in run_rank_sweep(&cfg, &data, 1).unwrap() {
            assert_eq!(r.kernel_rank, 0);
        }
    }
}

fn noise_config(grid: &[f64]) -> SweepConfig {
    config(json!({
        "family": "noise",
        "grid": grid,
        "kernel": { "family": "ntk", "depth": 3 },
        "repeats": 2,
        "seed": 1,
        "dataset": { "source": "synth-blobs", "n": 150, "d": 8, "classes": 3 },
    }))
}

#[test]
fn zero_noise_record_equals_plain_loo() {
    let cfg = noise_config(&[0.0, 0.5, 1.0]);
    let data = prepare_data(&cfg).unwrap();
    let recs = run_noise_sweep(&cfg, &data, 1).unwrap();
    let plain = {
        let k = build_kernel(&cfg.kernel, data.train.inputs(), None).unwrap();
        let eig = eigendecompose(k.values(), DEFAULT_RANK_TOL).unwrap();
        loo_zero_reg(&eig, data.train.targets()).unwrap()
    };
    for r in recs.iter().filter(|r| r.knob == 0.0) {
        assert_eq!(r.loo_loss.to_bits(), plain.loss().to_bits());
        assert_eq!(r.loo_acc.to_bits(), plain.accuracy().to_bits());
    }
}

#[test]
fn noise_sweep_rejects_rank_deficient_kernels() {
    let mut cfg = noise_config(&[0.0]);
    cfg.kernel = KernelSpec::linear();
    let err = run_sweep(&cfg, 1).unwrap_err();
    assert!(err.to_string().contains("full-rank"), "{err}");
}

#[test]
fn sweeps_do_not_depend_on_thread_count() {
    let cfg = config(json!({
        "family": "width",
        "grid": [10, 30, 60, 120],
        "kernel": { "family": "random-feature", "depth": 2 },
        "repeats": 3,
        "seed": 5,
        "dataset": { "source": "synth-blobs", "n": 80, "d": 6, "classes": 2 },
        "noise": 0.3,
    }));
    let one = run_sweep(&cfg, 1).unwrap();
    let three = run_sweep(&cfg, 3).unwrap();
    assert_eq!(one, three);
    let knobs: Vec<(f64, usize)> = one.iter().map(|r| (r.knob, r.repeat)).collect();
    let mut sorted = knobs.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    assert_eq!(knobs, sorted);
}

#[test]
fn depth_sweep_records_are_sane_and_deterministic() {
    let cfg = config(json!({
        "family": "depth",
        "grid": [2, 3, 5, 8],
        "kernel": { "family": "ntk", "depth": 3 },
        "repeats": 2,
        "dataset": { "source": "synth-blobs", "n": 120, "d": 5, "classes": 2 },
        "train_size": 80,
    }));
    let recs = run_sweep(&cfg, 2).unwrap();
    for r in &recs {
        assert!((0.0..=1.0).contains(&r.loo_acc) && (0.0..=1.0).contains(&r.test_acc));
        assert!(r.loo_loss.is_finite() && r.test_loss.is_finite() && r.train_loss.is_finite());
        assert!(r.kernel_rank <= 80);
    }
    assert_eq!(recs, run_sweep(&cfg, 1).unwrap());
}

#[test]
fn sample_size_beyond_available_data_is_a_config_error() {
    let cfg = config(json!({
        "family": "sample-size",
        "grid": [10, 500],
        "kernel": { "family": "ntk", "depth": 2 },
        "dataset": { "source": "synth-blobs", "n": 100, "d": 5, "classes": 2 },
    }));
    assert!(matches!(run_sweep(&cfg, 1), Err(Error::Config(_))));
}

#[test]
fn sample_size_gap_shrinks_with_n() {
    let cfg = config(json!({
        "family": "sample-size",
        "grid": [200, 2000],
        "kernel": { "family": "ntk", "depth": 3 },
        "repeats": 3,
        "seed": 0,
        "dataset": { "source": "synth-blobs", "n": 2500, "d": 10, "classes": 2, "separation": 3.0 },
    }));
    let recs = run_sweep(&cfg, 1).unwrap();
    let gaps = per_knob_median(&recs, |r| (r.loo_acc - r.test_acc).abs());
    assert!(gaps[1].1 < gaps[0].1, "{gaps:?}");
    assert!(gaps[1].1 <= 0.05, "{gaps:?}");
}

#[test]
fn transfer_evaluation() {
    let ds = synth_blobs(2500, 16, 4, 5.0, 11).unwrap();
    let (train, test) = split_dataset(&ds, 0.2, 11).unwrap();
    let (rec, identical) = run_transfer_eval(&train, &test, 0.0).unwrap();
    assert!(!identical);
    assert!((rec.loo_acc - rec.test_acc).abs() <= 0.03, "{rec:?}");

    let (rec, identical) = run_transfer_eval(&train, &train, 1e-3).unwrap();
    assert!(identical);
    assert!(rec.loo_acc <= rec.test_acc);

    let other = synth_blobs(50, 8, 4, 5.0, 1).unwrap();
    assert!(matches!(run_transfer_eval(&train, &other, 0.0), Err(Error::Config(_))));
}

#[test]
fn transfer_sweep_over_lambda() {
    let cfg = config(json!({
        "family": "transfer",
        "grid": [0.0, 0.1, 10.0],
        "kernel": { "family": "linear" },
        "repeats": 1,
        "dataset": { "source": "synth-blobs", "n": 300, "d": 12, "classes": 3, "separation": 4.0 },
    }));
    let data = prepare_data(&cfg).unwrap();
    let recs = run_sweep_on(&cfg, &data, 1).unwrap();
    assert_eq!(recs.iter().map(|r| r.knob).collect::<Vec<_>>(), vec![0.0, 0.1, 10.0]);
    assert!(recs.iter().all(|r| r.kernel_rank == 12));
}
