//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O, 2 configuration or domain error, 3
//! numerical failure, 4 failed verification. Machine-readable JSON goes to
//! stdout; diagnostics go to stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::{self, randomize_labels, Dataset, LabelLayout, NoiseSpec, Standardizer};
use crate::experiments::{self, output::write_atomic, SweepConfig};
use crate::kernels::{build_kernel, KernelFamily, KernelMatrix, KernelSpec};
use crate::linalg::{write_matrix_csv, DEFAULT_RANK_TOL};
use crate::loo::{loo_binary, loo_noisy, loo_regularized, loo_zero_reg, LooMethod, LooReport, LooSummary};
use crate::regression::eigendecompose;
use crate::stats::{self, LemmaReport};
use crate::{oracle, rng, Error, Matrix, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "kernel-loo", version, about = "Closed-form leave-one-out for kernel regression")]
pub struct Cli {
    /// Run seed; sub-seeds are derived per component. Overrides a sweep
    /// config's seed when given.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Leave-one-out loss and accuracy of one dataset and kernel.
    Loo(LooArgs),
    /// Run a sweep described by a JSON config.
    Sweep(SweepArgs),
    /// Monte-Carlo lemma checks and the brute-force oracle suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["csv", "synth_blobs", "kernel_in", "features"])))]
#[command(allow_negative_numbers = true)]
pub struct LooArgs {
    /// Labelled CSV: features plus one integer label column.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Synthetic Gaussian blobs `n,d,C`.
    #[arg(long, value_name = "N,D,C")]
    pub synth_blobs: Option<String>,
    /// Precomputed symmetric Gram matrix (CSV, no header); needs `--labels`.
    #[arg(long)]
    pub kernel_in: Option<PathBuf>,
    /// Feature matrix (CSV); needs `--labels`.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// One integer label per line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Number of classes; inferred from the labels when omitted.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Position of the label column in `--csv`.
    #[arg(long, value_enum, default_value = "label-last")]
    pub layout: LabelLayout,
    /// Input CSVs start with a header row.
    #[arg(long)]
    pub header: bool,
    /// Distance scale between blob centres.
    #[arg(long, default_value_t = 3.0)]
    pub separation: f64,
    #[arg(long, value_enum, default_value = "linear")]
    pub kernel: KernelFamily,
    /// Number of weight matrices.
    #[arg(long, default_value_t = 1)]
    pub depth: usize,
    /// Hidden widths of a random-feature kernel, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub widths: Vec<usize>,
    /// Ridge strength; 0 takes the pseudo-inverse limit.
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    /// Redraw this fraction of training labels and score against the clean
    /// ones (zero regularization only).
    #[arg(long)]
    pub noise: Option<f64>,
    /// Two classes as `-1 / +1` targets; accuracy uses the sign criterion.
    #[arg(long)]
    pub binary: bool,
    /// Scale every input column to zero mean and unit variance.
    #[arg(long)]
    pub standardize: bool,
    /// Write the training Gram matrix here.
    #[arg(long)]
    pub kernel_out: Option<PathBuf>,
    /// Write the leave-one-out residual matrix here.
    #[arg(long)]
    pub residuals_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON sweep config.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for the CSV, summary and manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "LOO_KERNEL_JOBS", default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Lemma {
    B1,
    B5,
    B6,
    Spike,
    Oracle,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Run only this check; all of them by default.
    #[arg(long, value_enum)]
    pub lemma: Option<Lemma>,
    /// Problem size (for b6 and spike, the smallest size of the list).
    #[arg(long)]
    pub n: Option<usize>,
    /// Monte-Carlo trials (oracle: random instances).
    #[arg(long)]
    pub trials: Option<usize>,
}

/// Record written next to sweep outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub timestamp: u64,
    pub outputs: Vec<PathBuf>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Serialize)]
struct LooOutput {
    #[serde(flatten)]
    summary: LooSummary,
    method: LooMethod,
}

#[derive(Debug, Serialize)]
struct VerifyOutput {
    pass: bool,
    reports: Vec<LemmaReport>,
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let mut stdout = std::io::stdout().lock();
    let result = match &cli.command {
        Command::Loo(a) => cmd_loo(a, cli.seed.unwrap_or(0), &mut stdout),
        Command::Sweep(a) => cmd_sweep(a, cli.seed, &args),
        Command::Verify(a) => cmd_verify(a, cli.seed.unwrap_or(0), &mut stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn parse_triple(text: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let bad = || Error::config(format!("--synth-blobs expects n,d,C, got {text:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let p = |s: &str| s.parse::<usize>().map_err(|_| bad());
    Ok((p(parts[0])?, p(parts[1])?, p(parts[2])?))
}

fn need_classes(a: &LooArgs, labels: &[usize]) -> usize {
    a.classes.unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1))
}

fn kernel_spec(a: &LooArgs, seed: u64) -> KernelSpec {
    match a.kernel {
        KernelFamily::RandomFeature => KernelSpec::random_features(a.widths.clone(), rng::derive(seed, "cli-kernel")),
        family => KernelSpec {
            family,
            depth: a.depth,
            nonlinearity: Default::default(),
            widths: a.widths.clone(),
            seed: 0,
        },
    }
}

/// Training Gram matrix and dataset targets for `loo`.
fn loo_inputs(a: &LooArgs, seed: u64) -> Result<(KernelMatrix, Dataset)> {
    if let Some(path) = &a.kernel_in {
        let labels_path = a.labels.as_ref().ok_or_else(|| Error::config("--kernel-in needs --labels"))?;
        let k = KernelMatrix::read_csv(path)?;
        let labels = dataio::load_labels(labels_path)?;
        if labels.len() != k.n() {
            return Err(Error::Consistency(format!(
                "kernel is {}x{} but there are {} labels",
                k.n(),
                k.n(),
                labels.len()
            )));
        }
        let classes = need_classes(a, &labels);
        // Inputs are never read with a precomputed kernel; one placeholder
        // column satisfies the dataset shape check.
        let ds = Dataset::from_labels(Matrix::zeros(labels.len(), 1), &labels, classes)?;
        return Ok((k, ds));
    }
    let ds = if let Some(path) = &a.features {
        let labels_path = a.labels.as_ref().ok_or_else(|| Error::config("--features needs --labels"))?;
        let classes = match a.classes {
            Some(c) => c,
            None => need_classes(a, &dataio::load_labels(labels_path)?),
        };
        dataio::load_feature_matrix(path, labels_path, classes, a.header)?
    } else if let Some(path) = &a.csv {
        let classes = a.classes.ok_or_else(|| Error::config("--csv needs --classes"))?;
        dataio::load_csv(path, classes, a.layout, a.header)?
    } else {
        let (n, d, c) = parse_triple(a.synth_blobs.as_deref().unwrap_or_default())?;
        dataio::synth_blobs(n, d, c, a.separation, rng::derive(seed, "cli-blobs"))?
    };
    let ds = if a.standardize {
        ds.with_inputs(Standardizer::fit(ds.inputs()).apply(ds.inputs())?)?
    } else {
        ds
    };
    let k = build_kernel(&kernel_spec(a, seed), ds.inputs(), None)?;
    Ok((k, ds))
}

fn binary_targets(ds: &Dataset) -> Result<Vec<f64>> {
    let labels = ds.labels().ok_or_else(|| Error::domain("--binary needs integer labels"))?;
    if ds.classes() != 2 {
        return Err(Error::domain(format!("--binary needs 2 classes, got {}", ds.classes())));
    }
    Ok(labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect())
}

fn compute_loo(a: &LooArgs, k: &KernelMatrix, ds: &Dataset, seed: u64) -> Result<LooReport> {
    if !(a.lambda >= 0.0 && a.lambda.is_finite()) {
        return Err(Error::config(format!("--lambda must be finite and >= 0, got {}", a.lambda)));
    }
    if a.binary {
        if a.noise.is_some() {
            return Err(Error::config("--binary and --noise cannot be combined"));
        }
        return loo_binary(k.values(), &binary_targets(ds)?, a.lambda);
    }
    if let Some(p) = a.noise {
        if a.lambda != 0.0 {
            return Err(Error::config("--noise uses the zero-regularization formula; set --lambda 0"));
        }
        let noisy = randomize_labels(ds, NoiseSpec::new(p, rng::derive(seed, "cli-noise"))?)?;
        let eig = eigendecompose(k.values(), DEFAULT_RANK_TOL)?;
        return loo_noisy(&eig, noisy.noisy.targets(), ds.targets());
    }
    if a.lambda > 0.0 {
        loo_regularized(k.values(), ds.targets(), a.lambda)
    } else {
        loo_zero_reg(&eigendecompose(k.values(), DEFAULT_RANK_TOL)?, ds.targets())
    }
}

fn print_json(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable output");
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

pub fn cmd_loo(a: &LooArgs, seed: u64, out: &mut dyn Write) -> Result<i32> {
    if !(a.lambda >= 0.0 && a.lambda.is_finite()) {
        return Err(Error::config(format!("--lambda must be finite and >= 0, got {}", a.lambda)));
    }
    let (k, ds) = loo_inputs(a, seed)?;
    if let Some(path) = &a.kernel_out {
        k.write_csv(path)?;
    }
    let report = compute_loo(a, &k, &ds, seed)?;
    if !report.flagged().is_empty() {
        log::warn!("near-singular leave-one-out denominators at points {:?}", report.flagged());
    }
    if let Some(path) = &a.residuals_out {
        write_matrix_csv(path, report.residuals())?;
    }
    print_json(
        out,
        &LooOutput {
            summary: report.summary(),
            method: report.method(),
        },
    )?;
    Ok(EXIT_OK)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn cmd_sweep(a: &SweepArgs, seed: Option<u64>, argv: &[OsString]) -> Result<i32> {
    let bytes = std::fs::read(&a.config).map_err(|e| Error::io(&a.config, e))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| Error::config("config is not UTF-8"))?;
    let mut cfg = SweepConfig::from_json(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let records = experiments::run_sweep(&cfg, a.jobs.max(1))?;
    let mut outputs = experiments::write_outputs(&a.out, &cfg, &records)?;
    let manifest_path = a.out.join(MANIFEST_NAME);
    outputs.push(manifest_path.clone());
    let manifest = RunManifest {
        command_line: argv.iter().map(|s| s.to_string_lossy().into_owned()).collect(),
        config_sha256: sha256_hex(&bytes),
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        outputs,
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    write_atomic(&manifest_path, json.as_bytes())?;
    eprintln!("wrote {} records to {}", records.len(), a.out.display());
    Ok(EXIT_OK)
}

/// Default sizes and trial counts of every check.
pub fn verification_reports(lemma: Option<Lemma>, n: Option<usize>, trials: Option<usize>, seed: u64) -> Result<Vec<LemmaReport>> {
    let all = [Lemma::B1, Lemma::B5, Lemma::B6, Lemma::Spike, Lemma::Oracle];
    let selected: Vec<Lemma> = lemma.map_or(all.to_vec(), |l| vec![l]);
    let mut reports = Vec::new();
    for l in selected {
        match l {
            Lemma::B1 => {
                for n in n.map_or(vec![2, 16, 64], |n| vec![n]) {
                    reports.push(stats::verify_lemma_b1(trials.unwrap_or(1000), n, seed)?);
                }
            }
            Lemma::B5 => {
                for n in n.map_or(vec![4, 32], |n| vec![n]) {
                    let t = trials.unwrap_or(10_000);
                    reports.push(stats::verify_lemma_b5(t, n, seed)?);
                    reports.push(stats::verify_lemma_b5_sign_invariance(t, n, seed)?);
                }
            }
            Lemma::B6 => {
                let list = n.map_or(vec![8, 64, 512], |n| vec![n, 8 * n, 64 * n]);
                reports.push(stats::verify_lemma_b6(&list, trials.unwrap_or(10_000), seed)?);
            }
            Lemma::Spike => {
                let list = n.map_or(vec![64, 256], |n| vec![n, 4 * n]);
                reports.push(stats::verify_spike_growth(&list, trials.unwrap_or(200), seed)?);
            }
            Lemma::Oracle => reports.extend(oracle::oracle_suite(trials.unwrap_or(20), seed)?),
        }
    }
    Ok(reports)
}

pub fn cmd_verify(a: &VerifyArgs, seed: u64, out: &mut dyn Write) -> Result<i32> {
    let reports = verification_reports(a.lemma, a.n, a.trials, seed)?;
    for r in &reports {
        eprintln!("{:<20} {}", r.lemma, if r.pass { "pass" } else { "FAIL" });
    }
    let pass = reports.iter().all(|r| r.pass);
    print_json(out, &VerifyOutput { pass, reports })?;
    Ok(if pass { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

/// Reads a manifest written by `sweep`.
pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triple_parsing() {
        assert_eq!(parse_triple("200,10,2").unwrap(), (200, 10, 2));
        assert!(parse_triple("200,10").is_err());
        assert!(parse_triple("a,b,c").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["kernel-loo", "verify", "--lemma", "b7"]), 2);
        assert_eq!(run(["kernel-loo", "loo"]), 2);
        assert_eq!(run(["kernel-loo", "loo", "--synth-blobs", "20,3,2", "--lambda", "-1"]), 2);
    }
}
