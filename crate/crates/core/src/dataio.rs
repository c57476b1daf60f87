//! Dataset ingestion, synthetic data and label randomization.

use std::path::Path;

use faer::Mat;
use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{csv_error, select_rows};
use crate::{rng, Error, Matrix, MatrixRef, Result};

/// Inputs `X` (n x d) and targets `Y` (n x C).
///
/// Classification datasets carry one-hot target rows; regression datasets may
/// carry arbitrary real rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Matrix,
    targets: Matrix,
}

impl Dataset {
    pub fn new(inputs: Matrix, targets: Matrix) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(Error::domain("dataset has no rows"));
        }
        if inputs.ncols() == 0 || targets.ncols() == 0 {
            return Err(Error::domain("dataset needs d >= 1 and C >= 1"));
        }
        if inputs.nrows() != targets.nrows() {
            return Err(Error::Consistency(format!(
                "{} input rows but {} target rows",
                inputs.nrows(),
                targets.nrows()
            )));
        }
        Ok(Dataset { inputs, targets })
    }

    /// Builds a classification dataset with one-hot targets.
    pub fn from_labels(inputs: Matrix, labels: &[usize], classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::domain("class count must be at least 1"));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::domain(format!(
                "label {l} of row {i} is outside [0, {}]",
                classes - 1
            )));
        }
        Dataset::new(inputs, one_hot(labels, classes))
    }

    pub fn inputs(&self) -> MatrixRef<'_> {
        self.inputs.as_ref()
    }

    pub fn targets(&self) -> MatrixRef<'_> {
        self.targets.as_ref()
    }

    pub fn n(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn classes(&self) -> usize {
        self.targets.ncols()
    }

    pub fn is_one_hot(&self) -> bool {
        (0..self.n()).all(|i| one_hot_index(self.targets.as_ref(), i).is_some())
    }

    /// Class index of every row, or `None` if some row is not one-hot.
    pub fn labels(&self) -> Option<Vec<usize>> {
        (0..self.n())
            .map(|i| one_hot_index(self.targets.as_ref(), i))
            .collect()
    }

    /// Rows `rows` (in that order) of both inputs and targets.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            inputs: select_rows(self.inputs.as_ref(), rows),
            targets: select_rows(self.targets.as_ref(), rows),
        }
    }

    pub fn with_targets(&self, targets: Matrix) -> Result<Dataset> {
        Dataset::new(self.inputs.clone(), targets)
    }

    pub fn with_inputs(&self, inputs: Matrix) -> Result<Dataset> {
        Dataset::new(inputs, self.targets.clone())
    }
}

fn one_hot_index(targets: MatrixRef<'_>, row: usize) -> Option<usize> {
    let mut hot = None;
    for k in 0..targets.ncols() {
        let v = targets[(row, k)];
        if v == 1.0 {
            if hot.is_some() {
                return None;
            }
            hot = Some(k);
        } else if v != 0.0 {
            return None;
        }
    }
    hot
}

pub fn one_hot(labels: &[usize], classes: usize) -> Matrix {
    Mat::from_fn(labels.len(), classes, |i, k| if labels[i] == k { 1.0 } else { 0.0 })
}

/// Position of the label column in a labelled CSV row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LabelLayout {
    LabelFirst,
    LabelLast,
}

/// Loads `d` features plus one integer label per row.
pub fn load_csv(path: &Path, classes: usize, layout: LabelLayout, header: bool) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labeled_csv(&text, path, classes, layout, header)
}

pub(crate) fn parse_labeled_csv(
    text: &str,
    path: &Path,
    classes: usize,
    layout: LabelLayout,
    header: bool,
) -> Result<Dataset> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut features: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, &e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() < 2 {
            return Err(parse_err(line, "expected at least one feature and a label".into()));
        }
        let (label_field, feature_fields): (&str, Vec<&str>) = match layout {
            LabelLayout::LabelFirst => (&record[0], record.iter().skip(1).collect()),
            LabelLayout::LabelLast => (
                &record[record.len() - 1],
                record.iter().take(record.len() - 1).collect(),
            ),
        };
        let label: usize = label_field
            .parse()
            .map_err(|_| parse_err(line, format!("label {label_field:?} is not a non-negative integer")))?;
        if label >= classes {
            return Err(Error::domain(format!(
                "{}: line {line}: label {label} outside [0, {}]",
                path.display(),
                classes.saturating_sub(1)
            )));
        }
        let row = feature_fields
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(line, format!("feature {f:?} is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = features.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    line,
                    format!("expected {} features, found {}", first.len(), row.len()),
                ));
            }
        }
        features.push(row);
        labels.push(label);
    }
    if features.is_empty() {
        return Err(parse_err(0, "no rows".into()));
    }
    Dataset::from_labels(crate::linalg::from_rows(&features), &labels, classes)
}

/// Reads one non-negative integer label per line.
pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, path)
}

pub(crate) fn parse_labels(text: &str, path: &Path) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i as u64 + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        labels.push(t.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: format!("label {t:?} is not a non-negative integer"),
        })?);
    }
    if labels.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "no rows".into(),
        });
    }
    Ok(labels)
}

/// Feature matrix exported by an external model plus its labels.
///
/// A linear kernel on the returned inputs corresponds to retraining only the
/// top layer of that model.
pub fn load_feature_matrix(
    features_path: &Path,
    labels_path: &Path,
    classes: usize,
    header: bool,
) -> Result<Dataset> {
    let features = crate::linalg::read_matrix_csv(features_path, header)?;
    let labels = load_labels(labels_path)?;
    if features.nrows() != labels.len() {
        return Err(Error::Consistency(format!(
            "{} has {} rows but {} has {} labels",
            features_path.display(),
            features.nrows(),
            labels_path.display(),
            labels.len()
        )));
    }
    Dataset::from_labels(features, &labels, classes)
}

/// `C` Gaussian clusters with unit per-coordinate variance.
///
/// Class `c` is centred on `separation / sqrt(2) * e_c` when `C <= d` (all
/// centres pairwise exactly `separation` apart); otherwise centres sit on the
/// first axis at `c * separation`. Row `i` belongs to class `i mod C`.
pub fn synth_blobs(n: usize, d: usize, classes: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if classes == 0 || d == 0 {
        return Err(Error::domain("synthetic blobs need d >= 1 and C >= 1"));
    }
    if n < classes {
        return Err(Error::domain(format!("n = {n} is smaller than C = {classes}")));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::domain("separation must be finite and non-negative"));
    }
    let center = |c: usize, j: usize| -> f64 {
        if classes <= d {
            if j == c {
                separation / std::f64::consts::SQRT_2
            } else {
                0.0
            }
        } else if j == 0 {
            c as f64 * separation
        } else {
            0.0
        }
    };
    let mut rng = rng::rng(rng::derive(seed, "synth-blobs"));
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut inputs = Mat::<f64>::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            inputs[(i, j)] = center(labels[i], j) + z;
        }
    }
    Dataset::from_labels(inputs, &labels, classes)
}

/// Label-noise level `p` and the seed of the corruption.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub p: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("noise level {p} outside [0, 1]")));
        }
        Ok(NoiseSpec { p, seed })
    }
}

/// Result of [`randomize_labels`].
#[derive(Clone, Debug)]
pub struct NoisyLabels {
    pub noisy: Dataset,
    pub clean: Dataset,
    /// Rows whose label was redrawn, ascending. The redraw may reproduce the
    /// original class.
    pub resampled: Vec<usize>,
}

/// Redraws the label of `round(p * n)` rows, chosen without replacement,
/// uniformly over all `C` classes.
pub fn randomize_labels(ds: &Dataset, spec: NoiseSpec) -> Result<NoisyLabels> {
    let spec = NoiseSpec::new(spec.p, spec.seed)?;
    let mut labels = ds
        .labels()
        .ok_or_else(|| Error::domain("label randomization needs one-hot targets"))?;
    let n = ds.n();
    let count = ((spec.p * n as f64).round() as usize).min(n);
    let mut rng = rng::rng(rng::derive(spec.seed, "label-noise"));
    let mut resampled = sample(&mut rng, n, count).into_vec();
    resampled.sort_unstable();
    let classes = ds.classes();
    for &i in &resampled {
        labels[i] = rng.random_range(0..classes);
    }
    Ok(NoisyLabels {
        noisy: ds.with_targets(one_hot(&labels, classes))?,
        clean: ds.clone(),
        resampled,
    })
}

/// Per-feature affine map to zero mean and unit variance.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    /// Statistics of `inputs`; constant features keep scale 1.
    pub fn fit(inputs: MatrixRef<'_>) -> Self {
        let (n, d) = (inputs.nrows(), inputs.ncols());
        let mut mean = vec![0.0; d];
        let mut scale = vec![1.0; d];
        for j in 0..d {
            let m = (0..n).map(|i| inputs[(i, j)]).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (inputs[(i, j)] - m).powi(2)).sum::<f64>() / n as f64;
            mean[j] = m;
            if var > 0.0 {
                scale[j] = var.sqrt();
            }
        }
        Standardizer { mean, scale }
    }

    pub fn apply(&self, inputs: MatrixRef<'_>) -> Result<Matrix> {
        if inputs.ncols() != self.mean.len() {
            return Err(Error::domain("standardizer dimension mismatch"));
        }
        Ok(Mat::from_fn(inputs.nrows(), inputs.ncols(), |i, j| {
            (inputs[(i, j)] - self.mean[j]) / self.scale[j]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> &'static Path {
        Path::new("mem.csv")
    }

    #[test]
    fn label_first_csv_is_one_hot_encoded() {
        let ds = parse_labeled_csv("0,0.5,1.0\n1,0.2,0.3", path(), 2, LabelLayout::LabelFirst, false)
            .unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.targets(), one_hot(&[0, 1], 2).as_ref());
        assert_eq!(ds.inputs()[(1, 0)], 0.2);
    }

    #[test]
    fn label_last_and_header() {
        let ds = parse_labeled_csv("a,b,label\n0.5,1.0,2\n", path(), 3, LabelLayout::LabelLast, true)
            .unwrap();
        assert_eq!(ds.labels().unwrap(), vec![2]);
        assert_eq!(ds.inputs()[(0, 1)], 1.0);
    }

    #[test]
    fn empty_file_reports_no_rows() {
        let err = parse_labeled_csv("", path(), 2, LabelLayout::LabelFirst, false).unwrap_err();
        assert!(err.to_string().contains("no rows"), "{err}");
    }

    #[test]
    fn out_of_range_label_is_domain_error() {
        let err = parse_labeled_csv("5,1.0,2.0\n", path(), 3, LabelLayout::LabelFirst, false)
            .unwrap_err();
        assert!(matches!(err, Error::Domain(_)), "{err:?}");
    }

    #[test]
    fn malformed_row_names_line() {
        let err = parse_labeled_csv("0,1.0\n1,abc\n", path(), 2, LabelLayout::LabelFirst, false)
            .unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn blobs_are_balanced_and_deterministic() {
        let a = synth_blobs(4, 2, 2, 10.0, 0).unwrap();
        let b = synth_blobs(4, 2, 2, 10.0, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.labels().unwrap(), vec![0, 1, 0, 1]);
        assert!(synth_blobs(1, 2, 2, 10.0, 0).is_err());
        assert_ne!(a, synth_blobs(4, 2, 2, 10.0, 1).unwrap());
    }

    #[test]
    fn noise_zero_is_identity_and_half_flags_round_pn() {
        let ds = synth_blobs(4, 3, 2, 1.0, 3).unwrap();
        let zero = randomize_labels(&ds, NoiseSpec::new(0.0, 1).unwrap()).unwrap();
        assert_eq!(zero.noisy, ds);
        assert!(zero.resampled.is_empty());
        let half = randomize_labels(&ds, NoiseSpec::new(0.5, 1).unwrap()).unwrap();
        assert_eq!(half.resampled.len(), 2);
        assert_eq!(half.clean, ds);
        assert_eq!(half.noisy.inputs(), ds.inputs());
        assert!(half.noisy.is_one_hot());
    }

    #[test]
    fn full_noise_changes_about_one_minus_one_over_c() {
        // Each redraw keeps the old class with probability 1/C.
        let (n, c) = (10_000usize, 10usize);
        let ds = synth_blobs(n, 1, c, 1.0, 0).unwrap();
        let out = randomize_labels(&ds, NoiseSpec::new(1.0, 7).unwrap()).unwrap();
        let before = ds.labels().unwrap();
        let after = out.noisy.labels().unwrap();
        let changed = before.iter().zip(&after).filter(|(a, b)| a != b).count() as f64 / n as f64;
        let p = 1.0 - 1.0 / c as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((changed - p).abs() <= 3.0 * sigma, "changed fraction {changed}");
    }

    #[test]
    fn non_one_hot_targets_rejected() {
        let ds = Dataset::new(Mat::from_fn(2, 1, |i, _| i as f64), Mat::from_fn(2, 1, |_, _| 0.3)).unwrap();
        assert!(randomize_labels(&ds, NoiseSpec::new(0.5, 0).unwrap()).is_err());
        assert!(NoiseSpec::new(1.5, 0).is_err());
    }

    #[test]
    fn feature_ingestion_shapes_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("f.csv");
        let l = dir.path().join("l.txt");
        std::fs::write(&f, "1,2,3,4\n0,0,0,0\n5,6,7,8\n").unwrap();
        std::fs::write(&l, "0\n1\n1\n").unwrap();
        let ds = load_feature_matrix(&f, &l, 2, false).unwrap();
        assert_eq!((ds.n(), ds.dim()), (3, 4));
        std::fs::write(&l, "0\n1\n").unwrap();
        assert!(matches!(load_feature_matrix(&f, &l, 2, false), Err(Error::Consistency(_))));
        std::fs::write(&f, "0,0\n0,0\n").unwrap();
        assert!(load_feature_matrix(&f, &l, 2, false).is_ok());
    }

    #[test]
    fn standardizer_centers_and_scales() {
        let x = Mat::from_fn(4, 2, |i, j| if j == 0 { i as f64 } else { 7.0 });
        let s = Standardizer::fit(x.as_ref());
        let z = s.apply(x.as_ref()).unwrap();
        let mean: f64 = (0..4).map(|i| z[(i, 0)]).sum::<f64>() / 4.0;
        let var: f64 = (0..4).map(|i| z[(i, 0)].powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        assert_eq!(z[(0, 1)], 0.0);
    }
}
