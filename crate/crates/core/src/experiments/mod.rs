//! Desk-scale sweeps: sample size, label noise, random-feature width, Gram
//! rank, NTK depth and feature transfer.
//!
//! Every sweep is a list of independent jobs (grid point x repeat, or one
//! job per repeat for noise sweeps) whose randomness derives from
//! `(seed, repeat)` only. Records come back sorted by knob, then repeat,
//! whatever the number of worker threads.

pub mod config;
pub mod linearization;
pub mod output;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{self, randomize_labels, Dataset, NoiseSpec, Standardizer};
use crate::kernels::{build_kernel, feature_gram, random_feature_map, rank_of, KernelFamily, KernelMatrix, KernelSpec};
use crate::linalg::DEFAULT_RANK_TOL;
use crate::loo::{loo_noisy, loo_regularized_eig, loo_zero_reg, LooReport, FLAG_TOL};
use crate::regression::{eigendecompose, eval_metrics, fit_eig, EigenDecomposition, Metrics};
use crate::{rng, Error, Matrix, MatrixRef, Result};

pub use config::{DatasetSource, RankVariant, SweepConfig, SweepFamily};
pub use linearization::linearization_features;
pub use output::{records_from_csv, records_to_csv, summarize, write_outputs, SweepSummary, CSV_HEADER};

/// One grid point of one repeat. `test_loss` and `train_loss` are the raw
/// halved squared errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub knob: f64,
    pub repeat: usize,
    pub seed: u64,
    pub loo_loss: f64,
    pub loo_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    pub train_loss: f64,
    pub kernel_rank: usize,
    pub flagged_points: usize,
}

/// Training pool and held-out test set of a sweep.
#[derive(Clone, Debug)]
pub struct SplitData {
    pub train: Dataset,
    pub test: Dataset,
    /// Train and test are the same data.
    pub identical: bool,
}

/// Seed of repeat `r`.
pub fn repeat_seed(cfg: &SweepConfig, repeat: usize) -> u64 {
    rng::derive_indexed(cfg.seed, "repeat", repeat as u64)
}

/// Seeded split into `(train, test)`; both keep the source row order.
pub fn split_dataset(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = ds.n();
    if n < 2 {
        return Err(Error::config("dataset: at least two rows are needed for a test split"));
    }
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::rng(rng::derive(seed, "split")));
    let mut test = perm[..n_test].to_vec();
    let mut train = perm[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Loads or synthesizes the dataset and splits off the test set.
pub fn prepare_data(cfg: &SweepConfig) -> Result<SplitData> {
    let (train, test, identical) = match &cfg.dataset {
        DatasetSource::SynthBlobs { n, d, classes, separation } => {
            let ds = dataio::synth_blobs(*n, *d, *classes, *separation, rng::derive(cfg.seed, "dataset"))?;
            let (tr, te) = split_dataset(&ds, cfg.test_fraction, cfg.seed)?;
            (tr, te, false)
        }
        DatasetSource::Csv { path, classes, layout, header } => {
            let ds = dataio::load_csv(path, *classes, *layout, *header)?;
            let (tr, te) = split_dataset(&ds, cfg.test_fraction, cfg.seed)?;
            (tr, te, false)
        }
        DatasetSource::Features {
            train,
            train_labels,
            test,
            test_labels,
            classes,
            header,
        } => {
            let tr = dataio::load_feature_matrix(train, train_labels, *classes, *header)?;
            let te = dataio::load_feature_matrix(test, test_labels, *classes, *header)?;
            let same = tr == te;
            (tr, te, same)
        }
    };
    if cfg.standardize {
        let s = Standardizer::fit(train.inputs());
        let train_std = train.with_inputs(s.apply(train.inputs())?)?;
        let test_std = test.with_inputs(s.apply(test.inputs())?)?;
        return Ok(SplitData {
            train: train_std,
            test: test_std,
            identical,
        });
    }
    Ok(SplitData { train, test, identical })
}

fn subsample(pool: &Dataset, size: Option<usize>, seed: u64) -> Result<Dataset> {
    match size {
        None => Ok(pool.clone()),
        Some(s) if s > pool.n() => Err(Error::config(format!(
            "requested {s} training points but only {} are available after the test split",
            pool.n()
        ))),
        Some(s) => {
            let mut rows = sample(&mut rng::rng(rng::derive(seed, "subsample")), pool.n(), s).into_vec();
            rows.sort_unstable();
            Ok(pool.subset(&rows))
        }
    }
}

/// Runs `f(0..count)` on `jobs` threads, returning results in index order.
pub fn run_jobs<T, F>(count: usize, jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if jobs <= 1 {
        return (0..count).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config(format!("cannot start {jobs} worker threads: {e}")))?;
    let results: Vec<Result<T>> = pool.install(|| (0..count).into_par_iter().map(&f).collect());
    results.into_iter().collect()
}

/// Leave-one-out, train and test metrics of one kernel fit.
struct Scored {
    loo: LooScore,
    train: Metrics,
    test: Metrics,
    rank: usize,
}

/// Leave-one-out summary of one fit. Loss and accuracy are NaN when the
/// zero-regularization limit is undefined because some point carries no
/// null-space mass.
struct LooScore {
    loss: f64,
    accuracy: f64,
    flagged: usize,
}

impl From<&LooReport> for LooScore {
    fn from(r: &LooReport) -> Self {
        LooScore {
            loss: r.loss(),
            accuracy: r.accuracy(),
            flagged: r.flagged().len(),
        }
    }
}

fn zero_reg_score(eig: &EigenDecomposition, y: MatrixRef<'_>) -> Result<LooScore> {
    match loo_zero_reg(eig, y) {
        Ok(r) => Ok(LooScore::from(&r)),
        Err(Error::Singular { index, detail }) => {
            let (n, r) = (eig.n(), eig.rank());
            let v = eig.vectors();
            let flagged = (0..n)
                .filter(|&i| (r..n).map(|j| v[(i, j)] * v[(i, j)]).sum::<f64>() < FLAG_TOL)
                .count();
            log::warn!("leave-one-out undefined at point {index} ({detail}); recording NaN");
            Ok(LooScore {
                loss: f64::NAN,
                accuracy: f64::NAN,
                flagged,
            })
        }
        Err(e) => Err(e),
    }
}

fn score_eig(
    eig: &EigenDecomposition,
    k: MatrixRef<'_>,
    cross: MatrixRef<'_>,
    y_fit: MatrixRef<'_>,
    y_test: MatrixRef<'_>,
    lambda: f64,
) -> Result<Scored> {
    let loo = if lambda > 0.0 {
        LooScore::from(&loo_regularized_eig(eig, y_fit, lambda)?)
    } else {
        zero_reg_score(eig, y_fit)?
    };
    let (train, test) = fit_metrics(eig, k, cross, y_fit, y_test, lambda)?;
    Ok(Scored {
        loo,
        train,
        test,
        rank: eig.rank(),
    })
}

fn fit_metrics(
    eig: &EigenDecomposition,
    k: MatrixRef<'_>,
    cross: MatrixRef<'_>,
    y_fit: MatrixRef<'_>,
    y_test: MatrixRef<'_>,
    lambda: f64,
) -> Result<(Metrics, Metrics)> {
    let model = fit_eig(eig, y_fit, lambda)?;
    let train_pred: Matrix = k * model.alpha();
    let test_pred: Matrix = cross * model.alpha();
    Ok((
        eval_metrics(train_pred.as_ref(), y_fit)?,
        eval_metrics(test_pred.as_ref(), y_test)?,
    ))
}

fn score(k: &KernelMatrix, y_fit: MatrixRef<'_>, y_test: MatrixRef<'_>, lambda: f64) -> Result<Scored> {
    let eig = eigendecompose(k.values(), DEFAULT_RANK_TOL)?;
    let cross = k.cross().ok_or_else(|| Error::Numerical("kernel has no test block".into()))?;
    score_eig(&eig, k.values(), cross, y_fit, y_test, lambda)
}

fn record(knob: f64, repeat: usize, seed: u64, s: &Scored) -> SweepRecord {
    SweepRecord {
        knob,
        repeat,
        seed,
        loo_loss: s.loo.loss,
        loo_acc: s.loo.accuracy,
        test_loss: s.test.loss,
        test_acc: s.test.accuracy,
        train_loss: s.train.loss,
        kernel_rank: s.rank,
        flagged_points: s.loo.flagged,
    }
}

fn log_record(family: &str, r: &SweepRecord) {
    log::info!(
        "{family} knob={} repeat={} loo_loss={:.6e} loo_acc={:.4} test_acc={:.4} rank={}",
        r.knob,
        r.repeat,
        r.loo_loss,
        r.loo_acc,
        r.test_acc,
        r.kernel_rank
    );
}

fn sort_records(mut records: Vec<SweepRecord>) -> Vec<SweepRecord> {
    records.sort_by(|a, b| a.knob.total_cmp(&b.knob).then(a.repeat.cmp(&b.repeat)));
    records
}

/// Grid x repeat jobs, knob-major.
fn grid_jobs<F>(cfg: &SweepConfig, jobs: usize, family: &str, f: F) -> Result<Vec<SweepRecord>>
where
    F: Fn(f64, usize, u64) -> Result<SweepRecord> + Sync + Send,
{
    let reps = cfg.repeats;
    let records = run_jobs(cfg.grid.len() * reps, jobs, |j| {
        let (g, r) = (j / reps, j % reps);
        let rec = f(cfg.grid[g], r, repeat_seed(cfg, r))?;
        log_record(family, &rec);
        Ok(rec)
    })?;
    Ok(sort_records(records))
}

fn expect_family(cfg: &SweepConfig, family: SweepFamily) -> Result<()> {
    cfg.validate()?;
    if cfg.family != family {
        return Err(Error::config(format!("family: expected {family:?}, got {:?}", cfg.family)));
    }
    Ok(())
}

/// Kernel of repeat `seed`: random-feature weights are redrawn per repeat,
/// deterministic kernels are unchanged.
fn repeat_kernel(spec: &KernelSpec, seed: u64) -> KernelSpec {
    let mut spec = spec.clone();
    if spec.family == KernelFamily::RandomFeature {
        spec.seed = rng::derive_indexed(seed, "kernel", spec.seed);
    }
    spec
}

/// Per grid `n` and repeat: subsample `n` training points, fit, and score
/// leave-one-out against held-out test metrics.
pub fn run_sample_size_sweep(cfg: &SweepConfig, data: &SplitData, jobs: usize) -> Result<Vec<SweepRecord>> {
    expect_family(cfg, SweepFamily::SampleSize)?;
    if let Some(&max) = cfg.grid.last() {
        if max as usize > data.train.n() {
            return Err(Error::config(format!(
                "grid: sample size {max} exceeds the {} training points available",
                data.train.n()
            )));
        }
    }
    grid_jobs(cfg, jobs, "sample-size", |knob, r, seed| {
        let train = subsample(&data.train, Some(knob as usize), seed)?;
        let spec = repeat_kernel(&cfg.kernel, seed);
        let k = build_kernel(&spec, train.inputs(), Some(data.test.inputs()))?;
        let s = score(&k, train.targets(), data.test.targets(), cfg.lambda)?;
        Ok(record(knob, r, seed, &s))
    })
}

/// Per repeat one eigendecomposition; per noise level `p` the labels are
/// redrawn, leave-one-out is scored against the clean labels and the
/// noisily trained model against clean test labels.
pub fn run_noise_sweep(cfg: &SweepConfig, data: &SplitData, jobs: usize) -> Result<Vec<SweepRecord>> {
    expect_family(cfg, SweepFamily::Noise)?;
    let per_repeat = run_jobs(cfg.repeats, jobs, |r| {
        let seed = repeat_seed(cfg, r);
        let train = subsample(&data.train, cfg.train_size, seed)?;
        let spec = repeat_kernel(&cfg.kernel, seed);
        let k = build_kernel(&spec, train.inputs(), Some(data.test.inputs()))?;
        let eig = eigendecompose(k.values(), DEFAULT_RANK_TOL)?;
        if eig.rank() < eig.n() {
            return Err(Error::domain(format!(
                "noise sweep: the noisy-label formula assumes a full-rank kernel, got rank {} of {}",
                eig.rank(),
                eig.n()
            )));
        }
        let cross = k.cross().expect("test block requested");
        let mut out = Vec::with_capacity(cfg.grid.len());
        for (j, &p) in cfg.grid.iter().enumerate() {
            let noisy = randomize_labels(&train, NoiseSpec::new(p, rng::derive_indexed(seed, "noise", j as u64))?)?;
            let y_noisy = noisy.noisy.targets();
            let loo = loo_noisy(&eig, y_noisy, train.targets())?;
            let (train_m, test_m) = fit_metrics(&eig, k.values(), cross, y_noisy, data.test.targets(), 0.0)?;
            let s = Scored {
                loo: LooScore::from(&loo),
                train: train_m,
                test: test_m,
                rank: eig.rank(),
            };
            let rec = record(p, r, seed, &s);
            log_record("noise", &rec);
            out.push(rec);
        }
        Ok(out)
    })?;
    Ok(sort_records(per_repeat.into_iter().flatten().collect()))
}

/// Hidden widths of a width sweep: every hidden layer takes the knob.
fn hidden_layers(spec: &KernelSpec) -> usize {
    spec.depth.saturating_sub(1).max(1)
}

/// Random-feature Gram `phi phi^T / m` per width; leave-one-out is scored
/// against the labels the model is trained on (redrawn with probability
/// `cfg.noise`), test metrics against clean test labels.
pub fn run_width_sweep(cfg: &SweepConfig, data: &SplitData, jobs: usize) -> Result<Vec<SweepRecord>> {
    expect_family(cfg, SweepFamily::Width)?;
    grid_jobs(cfg, jobs, "width", |knob, r, seed| {
        let train = subsample(&data.train, cfg.train_size, seed)?;
        let train = match cfg.noise {
            Some(p) => randomize_labels(&train, NoiseSpec::new(p, rng::derive(seed, "noise"))?)?.noisy,
            None => train,
        };
        let base = repeat_kernel(&cfg.kernel, seed);
        let spec = KernelSpec::random_features(vec![knob as usize; hidden_layers(&cfg.kernel)], base.seed);
        let k = build_kernel(&spec, train.inputs(), Some(data.test.inputs()))?;
        let s = score(&k, train.targets(), data.test.targets(), cfg.lambda)?;
        Ok(record(knob, r, seed, &s))
    })
}

/// Feature maps of the rank-sweep variants at knob `m`.
fn rank_features(cfg: &SweepConfig, m: usize, seed: u64, x: MatrixRef<'_>) -> Result<Matrix> {
    let fixed = cfg.fixed_width.unwrap_or(0);
    let widths = match cfg.rank_variant {
        RankVariant::Depth1 => vec![m],
        RankVariant::Depth2M1 => vec![m, fixed],
        RankVariant::Depth2M2 => vec![fixed, m],
        RankVariant::Linearization => return linearization_features(x, m, m, seed),
    };
    random_feature_map(x, &KernelSpec::random_features(widths, seed))
}

/// Rank of the training Gram matrix against the knob for one architecture
/// variant, with leave-one-out and test metrics alongside.
pub fn run_rank_sweep(cfg: &SweepConfig, data: &SplitData, jobs: usize) -> Result<Vec<SweepRecord>> {
    expect_family(cfg, SweepFamily::Rank)?;
    grid_jobs(cfg, jobs, "rank", |knob, r, seed| {
        let train = subsample(&data.train, cfg.train_size, seed)?;
        let kseed = repeat_kernel(&cfg.kernel, seed).seed;
        let phi = rank_features(cfg, knob as usize, kseed, train.inputs())?;
        let phi_test = rank_features(cfg, knob as usize, kseed, data.test.inputs())?;
        let k = KernelMatrix::new(feature_gram(phi.as_ref(), None)?)?
            .with_cross(feature_gram(phi_test.as_ref(), Some(phi.as_ref()))?)?;
        let mut s = score(&k, train.targets(), data.test.targets(), cfg.lambda)?;
        s.rank = rank_of(phi.as_ref(), DEFAULT_RANK_TOL)?;
        Ok(record(knob, r, seed, &s))
    })
}

/// NTK of each depth in the grid.
pub fn run_depth_sweep(cfg: &SweepConfig, data: &SplitData, jobs: usize) -> Result<Vec<SweepRecord>> {
    expect_family(cfg, SweepFamily::Depth)?;
    grid_jobs(cfg, jobs, "depth", |knob, r, seed| {
        let train = subsample(&data.train, cfg.train_size, seed)?;
        let spec = KernelSpec::ntk(knob as usize);
        let k = build_kernel(&spec, train.inputs(), Some(data.test.inputs()))?;
        let s = score(&k, train.targets(), data.test.targets(), cfg.lambda)?;
        Ok(record(knob, r, seed, &s))
    })
}

/// Linear-kernel leave-one-out on ingested training features and test
/// metrics on the held-out block. The flag reports identical train and test
/// data, for which test metrics are measured on seen points.
pub fn run_transfer_eval(train: &Dataset, test: &Dataset, lambda: f64) -> Result<(SweepRecord, bool)> {
    if train.dim() != test.dim() || train.classes() != test.classes() {
        return Err(Error::config(format!(
            "train features are {}-dimensional with {} classes, test features {}-dimensional with {}",
            train.dim(),
            train.classes(),
            test.dim(),
            test.classes()
        )));
    }
    let identical = train == test;
    if identical {
        log::warn!("transfer evaluation on identical train and test data: test metrics are on seen points");
    }
    let k = build_kernel(&KernelSpec::linear(), train.inputs(), Some(test.inputs()))?;
    let s = score(&k, train.targets(), test.targets(), lambda)?;
    Ok((record(lambda, 0, 0, &s), identical))
}

/// Transfer sweep over the `lambda` grid.
pub fn run_transfer_sweep(cfg: &SweepConfig, data: &SplitData, jobs: usize) -> Result<Vec<SweepRecord>> {
    expect_family(cfg, SweepFamily::Transfer)?;
    grid_jobs(cfg, jobs, "transfer", |knob, r, seed| {
        let train = subsample(&data.train, cfg.train_size, seed)?;
        let (mut rec, _) = run_transfer_eval(&train, &data.test, knob)?;
        rec.repeat = r;
        rec.seed = seed;
        Ok(rec)
    })
}

/// Dispatches on `cfg.family` with already prepared data.
pub fn run_sweep_on(cfg: &SweepConfig, data: &SplitData, jobs: usize) -> Result<Vec<SweepRecord>> {
    match cfg.family {
        SweepFamily::SampleSize => run_sample_size_sweep(cfg, data, jobs),
        SweepFamily::Noise => run_noise_sweep(cfg, data, jobs),
        SweepFamily::Width => run_width_sweep(cfg, data, jobs),
        SweepFamily::Rank => run_rank_sweep(cfg, data, jobs),
        SweepFamily::Depth => run_depth_sweep(cfg, data, jobs),
        SweepFamily::Transfer => run_transfer_sweep(cfg, data, jobs),
    }
}

pub fn run_sweep(cfg: &SweepConfig, jobs: usize) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    if data.identical {
        log::warn!("train and test data are identical");
    }
    run_sweep_on(cfg, &data, jobs)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(x: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
        let mut r = vec![0.0; x.len()];
        let mut start = 0;
        while start < idx.len() {
            let mut end = start + 1;
            while end < idx.len() && x[idx[end]] == x[idx[start]] {
                end += 1;
            }
            let avg = (start + end - 1) as f64 / 2.0 + 1.0;
            for &i in &idx[start..end] {
                r[i] = avg;
            }
            start = end;
        }
        r
    }
    assert_eq!(a.len(), b.len(), "spearman needs equal lengths");
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Mean of one record field per knob, in grid order.
pub fn per_knob_mean(records: &[SweepRecord], field: fn(&SweepRecord) -> f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64, usize)> = Vec::new();
    for r in records {
        match out.last_mut() {
            Some((k, sum, count)) if *k == r.knob => {
                *sum += field(r);
                *count += 1;
            }
            _ => out.push((r.knob, field(r), 1)),
        }
    }
    out.into_iter().map(|(k, s, c)| (k, s / c as f64)).collect()
}

/// Median of one record field per knob, in grid order.
pub fn per_knob_median(records: &[SweepRecord], field: fn(&SweepRecord) -> f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, Vec<f64>)> = Vec::new();
    for r in records {
        match out.last_mut() {
            Some((k, vals)) if *k == r.knob => vals.push(field(r)),
            _ => out.push((r.knob, vec![field(r)])),
        }
    }
    out.into_iter().map(|(k, v)| (k, crate::stats::median(&v))).collect()
}

/// Width grid around `n`: `n/8, n/4, n/2, 3n/4, n - sqrt(n), n, n + sqrt(n),
/// 2n, 4n, 8n`, rounded and deduplicated.
pub fn width_grid(n: usize) -> Vec<f64> {
    let nf = n as f64;
    let s = nf.sqrt();
    let mut g: Vec<f64> = [nf / 8.0, nf / 4.0, nf / 2.0, 0.75 * nf, nf - s, nf, nf + s, 2.0 * nf, 4.0 * nf, 8.0 * nf]
        .iter()
        .map(|v| v.round().max(1.0))
        .collect();
    g.dedup();
    g
}
