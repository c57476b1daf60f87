//! Small dense-matrix utilities shared by the numerical modules.

use std::io::Write;
use std::path::Path;

use faer::Mat;

use crate::{Error, Matrix, MatrixRef, Result};

/// Default relative tolerance for numerical rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// First `(i, j)` with `|K_ij - K_ji| > 1e-12 * max(1, |K_ij|)`, if any.
pub fn asymmetry(m: MatrixRef<'_>) -> Option<(usize, usize)> {
    if m.nrows() != m.ncols() {
        return Some((0, 0));
    }
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            if (a - b).abs() > 1e-12 * a.abs().max(1.0) || a.is_nan() != b.is_nan() {
                return Some((i, j));
            }
        }
    }
    None
}

/// Overwrites the upper triangle with the lower one.
pub fn mirror_lower(m: &mut Matrix) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            m[(j, i)] = m[(i, j)];
        }
    }
}

/// Number of singular values above `rel_tol` times the largest one.
pub fn rank_of(m: MatrixRef<'_>, rel_tol: f64) -> Result<usize> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0);
    }
    let sv = m
        .singular_values()
        .map_err(|e| Error::Numerical(format!("singular value decomposition: {e:?}")))?;
    let largest = sv.first().copied().unwrap_or(0.0);
    if !(largest > 0.0) {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > rel_tol * largest).count())
}

/// `K` with row and column `skip` removed.
pub fn principal_submatrix(k: MatrixRef<'_>, skip: usize) -> Matrix {
    let n = k.nrows();
    let idx = |a: usize| if a < skip { a } else { a + 1 };
    Mat::from_fn(n - 1, n - 1, |i, j| k[(idx(i), idx(j))])
}

/// Rows of `m` with row `skip` removed.
pub fn drop_row(m: MatrixRef<'_>, skip: usize) -> Matrix {
    let idx = |a: usize| if a < skip { a } else { a + 1 };
    Mat::from_fn(m.nrows() - 1, m.ncols(), |i, j| m[(idx(i), j)])
}

/// Rows of `m` selected by `rows`, in that order.
pub fn select_rows(m: MatrixRef<'_>, rows: &[usize]) -> Matrix {
    Mat::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub fn max_abs(m: MatrixRef<'_>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            best = best.max(m[(i, j)].abs());
        }
    }
    best
}

pub fn from_rows(rows: &[Vec<f64>]) -> Matrix {
    let ncols = rows.first().map_or(0, Vec::len);
    Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

/// Writes a full matrix as comma-separated text, one row per line.
///
/// Values use Rust's shortest round-trip formatting so a write/read cycle is
/// lossless.
pub fn write_matrix_csv(path: &Path, m: MatrixRef<'_>) -> Result<()> {
    let mut out = String::with_capacity(m.nrows() * m.ncols() * 20);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", m[(i, j)]));
        }
        out.push('\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads a rectangular numeric CSV without header.
pub fn read_matrix_csv(path: &Path, header: bool) -> Result<Matrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_csv(&text, path, header)
}

pub(crate) fn parse_matrix_csv(text: &str, path: &Path, header: bool) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, &e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("not a number: {field:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "no rows".into(),
        });
    }
    Ok(from_rows(&rows))
}

pub(crate) fn csv_error(path: &Path, e: &csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_basic_cases() {
        let eye = Mat::<f64>::identity(5, 5);
        assert_eq!(rank_of(eye.as_ref(), DEFAULT_RANK_TOL).unwrap(), 5);
        let zero = Mat::<f64>::zeros(4, 3);
        assert_eq!(rank_of(zero.as_ref(), DEFAULT_RANK_TOL).unwrap(), 0);
        let u = [1.0, -2.0, 0.5, 3.0];
        let outer = Mat::from_fn(4, 4, |i, j| u[i] * u[j]);
        assert_eq!(rank_of(outer.as_ref(), DEFAULT_RANK_TOL).unwrap(), 1);
    }

    #[test]
    fn principal_submatrix_skips_row_and_column() {
        let k = Mat::from_fn(3, 3, |i, j| (10 * i + j) as f64);
        let s = principal_submatrix(k.as_ref(), 1);
        assert_eq!(s[(0, 0)], 0.0);
        assert_eq!(s[(0, 1)], 2.0);
        assert_eq!(s[(1, 0)], 20.0);
        assert_eq!(s[(1, 1)], 22.0);
    }

    #[test]
    fn matrix_csv_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = Mat::from_fn(3, 2, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0));
        write_matrix_csv(&path, m.as_ref()).unwrap();
        let back = read_matrix_csv(&path, false).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn asymmetry_detects_violation() {
        let mut k = Mat::<f64>::identity(3, 3);
        assert_eq!(asymmetry(k.as_ref()), None);
        k[(2, 0)] = 1e-6;
        assert_eq!(asymmetry(k.as_ref()), Some((2, 0)));
    }
}
