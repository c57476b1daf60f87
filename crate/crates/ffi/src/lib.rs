//! C ABI over the kernel-loo library.
//!
//! Objects are opaque heap handles created by `kl_*` constructors and
//! released by the matching `kl_*_free`. Every entry point returns a
//! [`KlStatus`]; on failure `kl_last_error_message` describes the error of
//! the calling thread. Matrices cross the boundary as row-major `double`
//! buffers. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use kernel_loo::dataio::{self, Dataset, LabelLayout};
use kernel_loo::kernels::{build_kernel, KernelMatrix, KernelSpec};
use kernel_loo::linalg::DEFAULT_RANK_TOL;
use kernel_loo::loo::{self, LooReport};
use kernel_loo::regression::eigendecompose;
use kernel_loo::{Error, Matrix};

/// Result of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Singular = 3,
    Io = 4,
    Parse = 5,
    Panic = 6,
}

/// Kernel families accepted by `kl_kernel_compute`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KlKernelFamily {
    Linear = 0,
    Nngp = 1,
    Ntk = 2,
    RandomFeature = 3,
}

/// Inputs plus one-hot targets.
pub struct KlDataset(Dataset);

/// Symmetric training Gram matrix.
pub struct KlKernel(KernelMatrix);

/// Leave-one-out residuals, loss and accuracy.
pub struct KlLooReport(LooReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> KlStatus {
    match e {
        Error::Io { .. } => KlStatus::Io,
        Error::Parse { .. } => KlStatus::Parse,
        Error::Singular { .. } | Error::Numerical(_) => KlStatus::Singular,
        Error::Domain(_) | Error::Consistency(_) | Error::Config(_) => KlStatus::InvalidArgument,
    }
}

struct Fail(KlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

type FfiResult = Result<(), Fail>;

fn null(what: &str) -> Fail {
    Fail(KlStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(KlStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> FfiResult) -> KlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            KlStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            KlStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    // SAFETY: the caller guarantees `p` is null or a live handle from this library.
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: the caller guarantees `len` readable elements at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    // SAFETY: the caller guarantees `p` is null or writable.
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    // SAFETY: the caller guarantees a NUL-terminated string.
    let s = unsafe { CStr::from_ptr(p) };
    Ok(PathBuf::from(s.to_str().map_err(|_| invalid("path is not UTF-8"))?))
}

fn row_major(data: &[f64], rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |i, j| data[i * cols + j])
}

fn store<T>(value: T, dst: *mut *mut T) -> FfiResult {
    // SAFETY: checked non-null by `out`.
    let slot = unsafe { out(dst, "output handle") }?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn kl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Synthetic Gaussian blobs.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn kl_dataset_synth_blobs(
    n: usize,
    d: usize,
    classes: usize,
    separation: f64,
    seed: u64,
    out: *mut *mut KlDataset,
) -> KlStatus {
    guard(|| store(KlDataset(dataio::synth_blobs(n, d, classes, separation, seed)?), out))
}

/// Dataset from row-major inputs (`n x d`) and integer labels.
///
/// # Safety
/// `inputs` must hold `n * d` doubles, `labels` `n` entries, `out` a handle slot.
#[no_mangle]
pub unsafe extern "C" fn kl_dataset_from_labels(
    inputs: *const f64,
    n: usize,
    d: usize,
    labels: *const usize,
    classes: usize,
    out: *mut *mut KlDataset,
) -> KlStatus {
    guard(|| {
        let len = n.checked_mul(d).ok_or_else(|| invalid("n * d overflows"))?;
        let x = unsafe { slice(inputs, len, "inputs") }?;
        let y = unsafe { slice(labels, n, "labels") }?;
        store(KlDataset(Dataset::from_labels(row_major(x, n, d), y, classes)?), out)
    })
}

/// Labelled CSV; `label_first` selects the label column position.
///
/// # Safety
/// `path` must be NUL-terminated, `out` a handle slot.
#[no_mangle]
pub unsafe extern "C" fn kl_dataset_load_csv(
    path: *const c_char,
    classes: usize,
    label_first: bool,
    header: bool,
    out: *mut *mut KlDataset,
) -> KlStatus {
    guard(|| {
        let p = unsafe { self::path(path) }?;
        let layout = if label_first { LabelLayout::LabelFirst } else { LabelLayout::LabelLast };
        store(KlDataset(dataio::load_csv(&p, classes, layout, header)?), out)
    })
}

/// # Safety
/// `ds` must be a dataset handle, `n`, `d` and `classes` writable.
#[no_mangle]
pub unsafe extern "C" fn kl_dataset_shape(ds: *const KlDataset, n: *mut usize, d: *mut usize, classes: *mut usize) -> KlStatus {
    guard(|| {
        let ds = unsafe { deref(ds, "dataset") }?;
        *unsafe { out(n, "n") }? = ds.0.n();
        *unsafe { out(d, "d") }? = ds.0.dim();
        *unsafe { out(classes, "classes") }? = ds.0.classes();
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn kl_dataset_free(ds: *mut KlDataset) {
    if !ds.is_null() {
        // SAFETY: created by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(ds) });
    }
}

/// Gram matrix of the dataset inputs. `widths` is only read for
/// random-feature kernels, whose depth is `n_widths + 1`.
///
/// # Safety
/// `ds` must be a dataset handle, `widths` hold `n_widths` entries, `out` a handle slot.
#[no_mangle]
pub unsafe extern "C" fn kl_kernel_compute(
    ds: *const KlDataset,
    family: KlKernelFamily,
    depth: usize,
    widths: *const usize,
    n_widths: usize,
    seed: u64,
    out: *mut *mut KlKernel,
) -> KlStatus {
    guard(|| {
        let ds = unsafe { deref(ds, "dataset") }?;
        let spec = match family {
            KlKernelFamily::Linear => KernelSpec::linear(),
            KlKernelFamily::Nngp => KernelSpec::nngp(depth),
            KlKernelFamily::Ntk => KernelSpec::ntk(depth),
            KlKernelFamily::RandomFeature => {
                KernelSpec::random_features(unsafe { slice(widths, n_widths, "widths") }?.to_vec(), seed)
            }
        };
        store(KlKernel(build_kernel(&spec, ds.0.inputs(), None)?), out)
    })
}

/// Kernel from a row-major symmetric `n x n` buffer.
///
/// # Safety
/// `values` must hold `n * n` doubles, `out` a handle slot.
#[no_mangle]
pub unsafe extern "C" fn kl_kernel_from_matrix(values: *const f64, n: usize, out: *mut *mut KlKernel) -> KlStatus {
    guard(|| {
        let len = n.checked_mul(n).ok_or_else(|| invalid("n * n overflows"))?;
        let v = unsafe { slice(values, len, "values") }?;
        store(KlKernel(KernelMatrix::new(row_major(v, n, n))?), out)
    })
}

/// # Safety
/// `k` must be a kernel handle and `n` writable.
#[no_mangle]
pub unsafe extern "C" fn kl_kernel_size(k: *const KlKernel, n: *mut usize) -> KlStatus {
    guard(|| {
        *unsafe { out(n, "n") }? = unsafe { deref(k, "kernel") }?.0.n();
        Ok(())
    })
}

/// Copies the `n x n` Gram matrix row-major into `buf` of length `len`.
///
/// # Safety
/// `k` must be a kernel handle, `buf` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn kl_kernel_copy_values(k: *const KlKernel, buf: *mut f64, len: usize) -> KlStatus {
    guard(|| {
        let m = unsafe { deref(k, "kernel") }?.0.values();
        copy_matrix(m, buf, len)
    })
}

fn copy_matrix(m: kernel_loo::MatrixRef<'_>, buf: *mut f64, len: usize) -> FfiResult {
    let need = m.nrows() * m.ncols();
    if len < need {
        return Err(invalid(format!("buffer holds {len} values, {need} needed")));
    }
    if buf.is_null() {
        return Err(null("buffer"));
    }
    // SAFETY: `buf` is writable for `len >= need` doubles.
    let dst = unsafe { std::slice::from_raw_parts_mut(buf, need) };
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            dst[i * m.ncols() + j] = m[(i, j)];
        }
    }
    Ok(())
}

/// # Safety
/// `k` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn kl_kernel_free(k: *mut KlKernel) {
    if !k.is_null() {
        // SAFETY: created by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(k) });
    }
}

/// Regularized leave-one-out (`lambda > 0`) on the dataset targets.
///
/// # Safety
/// Handles must be valid, `out` a handle slot.
#[no_mangle]
pub unsafe extern "C" fn kl_loo_regularized(
    k: *const KlKernel,
    ds: *const KlDataset,
    lambda: f64,
    out: *mut *mut KlLooReport,
) -> KlStatus {
    guard(|| {
        let k = unsafe { deref(k, "kernel") }?;
        let ds = unsafe { deref(ds, "dataset") }?;
        store(KlLooReport(loo::loo_regularized(k.0.values(), ds.0.targets(), lambda)?), out)
    })
}

/// Zero-regularization leave-one-out on the dataset targets.
///
/// # Safety
/// Handles must be valid, `out` a handle slot.
#[no_mangle]
pub unsafe extern "C" fn kl_loo_zero_reg(k: *const KlKernel, ds: *const KlDataset, out: *mut *mut KlLooReport) -> KlStatus {
    guard(|| {
        let k = unsafe { deref(k, "kernel") }?;
        let ds = unsafe { deref(ds, "dataset") }?;
        let eig = eigendecompose(k.0.values(), DEFAULT_RANK_TOL)?;
        store(KlLooReport(loo::loo_zero_reg(&eig, ds.0.targets())?), out)
    })
}

/// Zero-regularization leave-one-out of a model trained on `noisy` targets,
/// scored against `clean` targets. Requires a full-rank kernel.
///
/// # Safety
/// Handles must be valid, `out` a handle slot.
#[no_mangle]
pub unsafe extern "C" fn kl_loo_noisy(
    k: *const KlKernel,
    noisy: *const KlDataset,
    clean: *const KlDataset,
    out: *mut *mut KlLooReport,
) -> KlStatus {
    guard(|| {
        let k = unsafe { deref(k, "kernel") }?;
        let noisy = unsafe { deref(noisy, "noisy dataset") }?;
        let clean = unsafe { deref(clean, "clean dataset") }?;
        let eig = eigendecompose(k.0.values(), DEFAULT_RANK_TOL)?;
        store(KlLooReport(loo::loo_noisy(&eig, noisy.0.targets(), clean.0.targets())?), out)
    })
}

/// Binary leave-one-out with `y` in `{-1, +1}`; `lambda >= 0`.
///
/// # Safety
/// `k` must be a kernel handle, `y` hold `n` doubles, `out` a handle slot.
#[no_mangle]
pub unsafe extern "C" fn kl_loo_binary(
    k: *const KlKernel,
    y: *const f64,
    n: usize,
    lambda: f64,
    out: *mut *mut KlLooReport,
) -> KlStatus {
    guard(|| {
        let k = unsafe { deref(k, "kernel") }?;
        let y = unsafe { slice(y, n, "y") }?;
        store(KlLooReport(loo::loo_binary(k.0.values(), y, lambda)?), out)
    })
}

/// # Safety
/// `r` must be a report handle and `value` writable.
#[no_mangle]
pub unsafe extern "C" fn kl_loo_report_loss(r: *const KlLooReport, value: *mut f64) -> KlStatus {
    guard(|| {
        *unsafe { out(value, "value") }? = unsafe { deref(r, "report") }?.0.loss();
        Ok(())
    })
}

/// # Safety
/// `r` must be a report handle and `value` writable.
#[no_mangle]
pub unsafe extern "C" fn kl_loo_report_accuracy(r: *const KlLooReport, value: *mut f64) -> KlStatus {
    guard(|| {
        *unsafe { out(value, "value") }? = unsafe { deref(r, "report") }?.0.accuracy();
        Ok(())
    })
}

/// Shape of the residual matrix.
///
/// # Safety
/// `r` must be a report handle, `rows` and `cols` writable.
#[no_mangle]
pub unsafe extern "C" fn kl_loo_report_shape(r: *const KlLooReport, rows: *mut usize, cols: *mut usize) -> KlStatus {
    guard(|| {
        let res = unsafe { deref(r, "report") }?.0.residuals();
        *unsafe { out(rows, "rows") }? = res.nrows();
        *unsafe { out(cols, "cols") }? = res.ncols();
        Ok(())
    })
}

/// Copies the residual matrix row-major into `buf` of length `len`.
///
/// # Safety
/// `r` must be a report handle, `buf` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn kl_loo_report_copy_residuals(r: *const KlLooReport, buf: *mut f64, len: usize) -> KlStatus {
    guard(|| copy_matrix(unsafe { deref(r, "report") }?.0.residuals(), buf, len))
}

/// Number of flagged points, written to `count`; their indices are copied
/// into `buf` when it holds at least `count` entries.
///
/// # Safety
/// `r` must be a report handle, `count` writable, `buf` null or writable for `len` entries.
#[no_mangle]
pub unsafe extern "C" fn kl_loo_report_flagged(r: *const KlLooReport, buf: *mut usize, len: usize, count: *mut usize) -> KlStatus {
    guard(|| {
        let flagged = unsafe { deref(r, "report") }?.0.flagged();
        *unsafe { out(count, "count") }? = flagged.len();
        if !buf.is_null() && len >= flagged.len() {
            // SAFETY: `buf` is writable for `len` entries.
            unsafe { std::slice::from_raw_parts_mut(buf, flagged.len()) }.copy_from_slice(flagged);
        }
        Ok(())
    })
}

/// JSON summary as a newly allocated string; release with `kl_string_free`.
///
/// # Safety
/// `r` must be a report handle and `json` writable.
#[no_mangle]
pub unsafe extern "C" fn kl_loo_report_to_json(r: *const KlLooReport, json: *mut *mut c_char) -> KlStatus {
    guard(|| {
        let text = unsafe { deref(r, "report") }?.0.to_json();
        let c = CString::new(text).map_err(|_| invalid("summary contains NUL"))?;
        *unsafe { out(json, "json") }? = c.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string from `kl_loo_report_to_json`.
#[no_mangle]
pub unsafe extern "C" fn kl_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: created by CString::into_raw in this library.
        drop(unsafe { CString::from_raw(s) });
    }
}

/// # Safety
/// `r` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn kl_loo_report_free(r: *mut KlLooReport) {
    if !r.is_null() {
        // SAFETY: created by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(r) });
    }
}
