//! Sweep configuration files.
//!
//! ```json
//! {
//!   "family": "width",
//!   "grid": [62, 125, 250, 500, 1000],
//!   "kernel": { "family": "random-feature", "depth": 2 },
//!   "lambda": 0.0,
//!   "repeats": 5,
//!   "seed": 0,
//!   "dataset": { "source": "synth-blobs", "n": 3000, "d": 20, "classes": 2, "separation": 3.0 },
//!   "train_size": 500
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataio::LabelLayout;
use crate::kernels::{KernelFamily, KernelSpec};
use crate::{Error, Result};

/// Largest hidden width accepted by the linearization variant.
pub const LINEARIZATION_MAX_WIDTH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepFamily {
    SampleSize,
    Noise,
    Width,
    Rank,
    Depth,
    Transfer,
}

/// Architecture whose rank is tracked by a rank sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankVariant {
    /// One hidden layer of width `m`.
    #[default]
    Depth1,
    /// Hidden widths `(m, fixed_width)`.
    Depth2M1,
    /// Hidden widths `(fixed_width, m)`.
    Depth2M2,
    /// Parameter-gradient features of a two-hidden-layer network with both
    /// widths equal to `m`.
    Linearization,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSource {
    SynthBlobs {
        n: usize,
        d: usize,
        classes: usize,
        #[serde(default = "default_separation")]
        separation: f64,
    },
    Csv {
        path: PathBuf,
        classes: usize,
        #[serde(default = "default_layout")]
        layout: LabelLayout,
        #[serde(default)]
        header: bool,
    },
    /// Pre-split feature matrices; no further test split is made.
    Features {
        train: PathBuf,
        train_labels: PathBuf,
        test: PathBuf,
        test_labels: PathBuf,
        classes: usize,
        #[serde(default)]
        header: bool,
    },
}

fn default_separation() -> f64 {
    3.0
}

fn default_layout() -> LabelLayout {
    LabelLayout::LabelLast
}

fn default_repeats() -> usize {
    5
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub family: SweepFamily,
    /// Knob values: `n`, `p`, width, width, depth or `lambda` by family.
    pub grid: Vec<f64>,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetSource,
    /// Training points subsampled per repeat; `None` uses the whole training
    /// split. Ignored by sample-size sweeps, where the knob is the size.
    #[serde(default)]
    pub train_size: Option<usize>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Width sweeps only: redraw this fraction of training labels.
    #[serde(default)]
    pub noise: Option<f64>,
    #[serde(default)]
    pub rank_variant: RankVariant,
    /// The width held fixed by the two-layer rank variants.
    #[serde(default)]
    pub fixed_width: Option<usize>,
    /// Standardize inputs with statistics of the training split.
    #[serde(default)]
    pub standardize: bool,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::config(format!("{field}: {msg}")));
        if self.grid.is_empty() {
            return bad("grid", "must be nonempty".into());
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return bad("grid", "values must be finite".into());
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("grid", "must be strictly increasing".into());
        }
        if self.repeats < 1 {
            return bad("repeats", "must be at least 1".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda", format!("must be finite and >= 0, got {}", self.lambda));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("test_fraction", format!("must lie in (0, 1), got {}", self.test_fraction));
        }
        if self.train_size == Some(0) {
            return bad("train_size", "must be positive".into());
        }
        if let Some(p) = self.noise {
            if self.family != SweepFamily::Width {
                return bad("noise", "only width sweeps take a label-noise level".into());
            }
            if !(0.0..=1.0).contains(&p) {
                return bad("noise", format!("must lie in [0, 1], got {p}"));
            }
        }
        let integral = |field: &str, min: f64| -> Result<()> {
            match self.grid.iter().find(|&&v| v.fract() != 0.0 || v < min) {
                Some(v) => Err(Error::config(format!("grid: {field} values must be integers >= {min}, got {v}"))),
                None => Ok(()),
            }
        };
        let family = self.kernel.family;
        match self.family {
            SweepFamily::SampleSize => {
                integral("sample sizes", 2.0)?;
            }
            SweepFamily::Noise => {
                if self.grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return bad("grid", "noise levels must lie in [0, 1]".into());
                }
                if self.lambda != 0.0 {
                    return bad("lambda", "the noisy-label formula is the zero-regularization one; set lambda to 0".into());
                }
            }
            SweepFamily::Width | SweepFamily::Rank => {
                integral("widths", 1.0)?;
                if family != KernelFamily::RandomFeature {
                    return bad("kernel.family", "width and rank sweeps need a random-feature kernel".into());
                }
                if self.family == SweepFamily::Rank {
                    match self.rank_variant {
                        RankVariant::Depth2M1 | RankVariant::Depth2M2 if self.fixed_width.unwrap_or(0) == 0 => {
                            return bad("fixed_width", "two-layer rank variants need a positive fixed width".into());
                        }
                        RankVariant::Linearization
                            if self.grid.iter().any(|&m| m > LINEARIZATION_MAX_WIDTH as f64) =>
                        {
                            return bad(
                                "grid",
                                format!("linearization widths must be <= {LINEARIZATION_MAX_WIDTH}"),
                            );
                        }
                        _ => {}
                    }
                }
            }
            SweepFamily::Depth => {
                integral("depths", 1.0)?;
                if family != KernelFamily::Ntk {
                    return bad("kernel.family", "depth sweeps need an ntk kernel".into());
                }
            }
            SweepFamily::Transfer => {
                if self.grid.iter().any(|&l| l < 0.0) {
                    return bad("grid", "transfer grids list lambda values >= 0".into());
                }
                if family != KernelFamily::Linear {
                    return bad("kernel.family", "transfer evaluation uses the linear kernel".into());
                }
            }
        }
        if !matches!(self.family, SweepFamily::Width | SweepFamily::Rank | SweepFamily::Depth) {
            self.kernel
                .validate()
                .map_err(|e| Error::config(format!("kernel: {e}")))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> serde_json::Value {
        serde_json::json!({
            "family": "width",
            "grid": [10, 20, 40],
            "kernel": { "family": "random-feature", "depth": 2 },
            "dataset": { "source": "synth-blobs", "n": 100, "d": 5, "classes": 2 }
        })
    }

    fn parse(v: &serde_json::Value) -> Result<SweepConfig> {
        SweepConfig::from_json(&v.to_string())
    }

    #[test]
    fn defaults() {
        let cfg = parse(&base()).unwrap();
        assert_eq!(cfg.repeats, 5);
        assert_eq!(cfg.test_fraction, 0.2);
        assert_eq!(cfg.lambda, 0.0);
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn schema_violations_are_config_errors() {
        let mut missing = base();
        missing.as_object_mut().unwrap().remove("grid");
        let cases = [
            missing,
            { let mut v = base(); v["grid"] = serde_json::json!([]); v },
            { let mut v = base(); v["grid"] = serde_json::json!([20, 10]); v },
            { let mut v = base(); v["grid"] = serde_json::json!([10, 10]); v },
            { let mut v = base(); v["repeats"] = serde_json::json!(0); v },
            { let mut v = base(); v["lambda"] = serde_json::json!(-1.0); v },
            { let mut v = base(); v["unknown"] = serde_json::json!(1); v },
            { let mut v = base(); v["grid"] = serde_json::json!([1.5]); v },
            { let mut v = base(); v["kernel"] = serde_json::json!({"family": "ntk", "depth": 3}); v },
        ];
        for c in cases {
            let err = parse(&c).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{c}: {err}");
            assert_eq!(err.exit_code(), 2);
        }
    }
}
