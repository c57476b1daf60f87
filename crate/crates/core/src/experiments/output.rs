//! CSV and JSON summaries of sweep records.
//!
//! The CSV doubles `test_loss` and `train_loss` so that every loss column
//! shares the unhalved scale of the leave-one-out loss; JSON keeps raw
//! values alongside.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SweepConfig, SweepRecord};
use crate::{Error, Result};

pub const CSV_HEADER: &str = "knob,repeat,seed,loo_loss,loo_acc,test_loss,test_acc,train_loss,kernel_rank,flagged_points";

pub fn records_to_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.knob,
            r.repeat,
            r.seed,
            r.loo_loss,
            r.loo_acc,
            2.0 * r.test_loss,
            r.test_acc,
            2.0 * r.train_loss,
            r.kernel_rank,
            r.flagged_points
        ));
    }
    out
}

pub fn records_from_csv(text: &str) -> Result<Vec<SweepRecord>> {
    let path = Path::new("<sweep csv>");
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            message: "unexpected header".into(),
        });
    }
    lines
        .enumerate()
        .map(|(idx, line)| {
            let line_no = idx as u64 + 2;
            let err = |message: String| Error::Parse {
                path: path.into(),
                line: line_no,
                message,
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 10 {
                return Err(err(format!("expected 10 fields, got {}", fields.len())));
            }
            let f = |i: usize| fields[i].parse::<f64>().map_err(|e| err(format!("field {i}: {e}")));
            let u = |i: usize| fields[i].parse::<u64>().map_err(|e| err(format!("field {i}: {e}")));
            Ok(SweepRecord {
                knob: f(0)?,
                repeat: u(1)? as usize,
                seed: u(2)?,
                loo_loss: f(3)?,
                loo_acc: f(4)?,
                test_loss: f(5)? / 2.0,
                test_acc: f(6)?,
                train_loss: f(7)? / 2.0,
                kernel_rank: u(8)? as usize,
                flagged_points: u(9)? as usize,
            })
        })
        .collect()
}

/// Mean and sample standard deviation of one column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Moments { mean, std }
    }
}

/// Aggregates over repeats at one knob. Losses are on the CSV scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnobSummary {
    pub knob: f64,
    pub repeats: usize,
    pub loo_loss: Moments,
    pub loo_acc: Moments,
    pub test_loss: Moments,
    pub test_acc: Moments,
    pub train_loss: Moments,
    pub kernel_rank: Moments,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config: SweepConfig,
    pub knobs: Vec<KnobSummary>,
    /// Raw records (halved test and train losses).
    pub records: Vec<SweepRecord>,
}

pub fn summarize(cfg: &SweepConfig, records: &[SweepRecord]) -> SweepSummary {
    let mut knobs = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let knob = records[start].knob;
        let end = start + records[start..].iter().take_while(|r| r.knob == knob).count();
        let group = &records[start..end];
        let col = |f: fn(&SweepRecord) -> f64| Moments::of(&group.iter().map(f).collect::<Vec<_>>());
        knobs.push(KnobSummary {
            knob,
            repeats: group.len(),
            loo_loss: col(|r| r.loo_loss),
            loo_acc: col(|r| r.loo_acc),
            test_loss: col(|r| 2.0 * r.test_loss),
            test_acc: col(|r| r.test_acc),
            train_loss: col(|r| 2.0 * r.train_loss),
            kernel_rank: col(|r| r.kernel_rank as f64),
        });
        start = end;
    }
    SweepSummary {
        config: cfg.clone(),
        knobs,
        records: records.to_vec(),
    }
}

/// Writes `contents` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(contents).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// File names inside a sweep output directory.
pub const CSV_NAME: &str = "sweep.csv";
pub const SUMMARY_NAME: &str = "summary.json";

/// Writes `sweep.csv` and `summary.json` into `dir`, returning their paths.
pub fn write_outputs(dir: &Path, cfg: &SweepConfig, records: &[SweepRecord]) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join(CSV_NAME);
    write_atomic(&csv, records_to_csv(records).as_bytes())?;
    let summary = dir.join(SUMMARY_NAME);
    let mut json = serde_json::to_string_pretty(&summarize(cfg, records)).expect("summary serializes");
    json.push('\n');
    write_atomic(&summary, json.as_bytes())?;
    Ok(vec![csv, summary])
}
