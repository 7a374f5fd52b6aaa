//! C interface to the private estimators.
//!
//! Objects cross the boundary as opaque handles created by `*_new` or an
//! estimator call and released by the matching `*_free`. Every fallible call
//! returns a [`DpStatus`]; on failure [`dp_last_error`] describes the cause
//! for the calling thread. Panics never unwind into C: they are caught and
//! reported as [`DpStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dp_estim::{
    private_linear_regression, private_mean, private_sparse_mean, private_sparse_regression, DataMatrix, Error,
    Estimate, MeanConfig, PrivacyBudget, RegressionConfig, RegressionData, Seed, TheoryConstants, Truncation,
};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DpStatus {
    Ok = 0,
    InvalidArgument = 1,
    Unsupported = 2,
    NullPointer = 3,
    Data = 4,
    Panic = 5,
    Internal = 6,
}

/// Row-major data matrix.
pub struct DpMatrix(DataMatrix);

/// Design matrix with responses.
pub struct DpRegressionData(RegressionData);

/// Released estimate with its budget ledger.
pub struct DpEstimate(Estimate);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &Error) -> DpStatus {
    match err {
        Error::InvalidArgument(_) => DpStatus::InvalidArgument,
        Error::Unsupported(_) => DpStatus::Unsupported,
        Error::Repetition { source, .. } => status_of(source),
        Error::Data(_) | Error::Io(_) | Error::Json(_) => DpStatus::Data,
        _ => DpStatus::Internal,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DpStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer passed as {what}"));
            DpStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            DpStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn clear<T>(out: *mut *mut T) {
    if !out.is_null() {
        *out = ptr::null_mut();
    }
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn dp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `n * d` row-major values into a new matrix.
///
/// # Safety
/// `values` must point to `n * d` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dp_matrix_new(values: *const f64, n: usize, d: usize, out: *mut *mut DpMatrix) -> DpStatus {
    clear(out);
    guard(|| {
        let len = n.checked_mul(d).ok_or_else(|| Error::InvalidArgument("n * d overflows".into()))?;
        let v = slice(values, len, "values")?.to_vec();
        store(out, DpMatrix(DataMatrix::new(n, d, v)?))
    })
}

/// # Safety
/// `m` must be NULL or a handle from [`dp_matrix_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dp_matrix_free(m: *mut DpMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Copies an `n × d` row-major design and `n` responses.
///
/// # Safety
/// `x` must point to `n * d` doubles and `y` to `n`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dp_regression_data_new(
    x: *const f64,
    y: *const f64,
    n: usize,
    d: usize,
    out: *mut *mut DpRegressionData,
) -> DpStatus {
    clear(out);
    guard(|| {
        let len = n.checked_mul(d).ok_or_else(|| Error::InvalidArgument("n * d overflows".into()))?;
        let design = DataMatrix::new(n, d, slice(x, len, "x")?.to_vec())?;
        let data = RegressionData::new(design, slice(y, n, "y")?.to_vec())?;
        store(out, DpRegressionData(data))
    })
}

/// # Safety
/// `r` must be NULL or a handle from [`dp_regression_data_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dp_regression_data_free(r: *mut DpRegressionData) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Gaussian-perturbed mean of entries clamped to `[-r, r]`.
///
/// # Safety
/// `x` must be a live matrix handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dp_private_mean(
    x: *const DpMatrix,
    epsilon: f64,
    delta: f64,
    r: f64,
    seed: u64,
    out: *mut *mut DpEstimate,
) -> DpStatus {
    clear(out);
    guard(|| {
        let x = borrow(x, "x")?;
        let cfg = MeanConfig::new(Truncation::symmetric(r)?, PrivacyBudget::new(epsilon, delta)?, Seed(seed));
        store(out, DpEstimate(private_mean(&x.0, &cfg)?))
    })
}

/// `s`-sparse private mean of entries clamped to `[-r, r]`.
///
/// # Safety
/// `x` must be a live matrix handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dp_private_sparse_mean(
    x: *const DpMatrix,
    epsilon: f64,
    delta: f64,
    r: f64,
    s: usize,
    seed: u64,
    out: *mut *mut DpEstimate,
) -> DpStatus {
    clear(out);
    guard(|| {
        let x = borrow(x, "x")?;
        let cfg = MeanConfig::new(Truncation::symmetric(r)?, PrivacyBudget::new(epsilon, delta)?, Seed(seed)).sparse(s);
        store(out, DpEstimate(private_sparse_mean(&x.0, &cfg)?))
    })
}

/// Noisy projected gradient descent with default tuning and response clamp
/// `sqrt(2 ln n)`.
///
/// # Safety
/// `data` must be a live regression handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dp_private_linear_regression(
    data: *const DpRegressionData,
    epsilon: f64,
    delta: f64,
    seed: u64,
    out: *mut *mut DpEstimate,
) -> DpStatus {
    clear(out);
    guard(|| {
        let data = &borrow(data, "data")?.0;
        let t = TheoryConstants::response_truncation(1.0, data.n())?;
        let cfg = TheoryConstants::default().dense_config(data.n(), data.d(), t, PrivacyBudget::new(epsilon, delta)?, Seed(seed));
        store(out, DpEstimate(private_linear_regression(data, &cfg)?.0))
    })
}

/// Noisy iterative hard thresholding at sparsity `s` with default tuning.
///
/// # Safety
/// `data` must be a live regression handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dp_private_sparse_regression(
    data: *const DpRegressionData,
    epsilon: f64,
    delta: f64,
    s: usize,
    seed: u64,
    out: *mut *mut DpEstimate,
) -> DpStatus {
    clear(out);
    guard(|| {
        let data = &borrow(data, "data")?.0;
        let t = TheoryConstants::response_truncation(1.0, data.n())?;
        let cfg = TheoryConstants::default().sparse_config_with(data.n(), s, t, PrivacyBudget::new(epsilon, delta)?, Seed(seed));
        store(out, DpEstimate(private_sparse_regression(data, &cfg)?.0))
    })
}

/// Regression with every parameter given as a JSON configuration object.
/// A configuration with `"s"` runs the sparse estimator.
///
/// # Safety
/// `data` must be a live regression handle, `config_json` a NUL-terminated
/// UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dp_private_regression_json(
    data: *const DpRegressionData,
    config_json: *const c_char,
    out: *mut *mut DpEstimate,
) -> DpStatus {
    clear(out);
    guard(|| {
        let data = &borrow(data, "data")?.0;
        if config_json.is_null() {
            return Err(Fail::Null("config_json"));
        }
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|e| Error::InvalidArgument(format!("configuration is not UTF-8: {e}")))?;
        let cfg: RegressionConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("configuration: {e}")))?;
        let est = match cfg.s {
            Some(_) => private_sparse_regression(data, &cfg)?,
            None => private_linear_regression(data, &cfg)?,
        };
        store(out, DpEstimate(est.0))
    })
}

/// Number of coordinates in the estimate (0 for NULL).
///
/// # Safety
/// `e` must be NULL or a live estimate handle.
#[no_mangle]
pub unsafe extern "C" fn dp_estimate_len(e: *const DpEstimate) -> usize {
    e.as_ref().map_or(0, |e| e.0.value.len())
}

/// Copies the estimate into `buf`, which must hold exactly `len` doubles.
///
/// # Safety
/// `e` must be a live estimate handle and `buf` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dp_estimate_values(e: *const DpEstimate, buf: *mut f64, len: usize) -> DpStatus {
    guard(|| {
        let e = borrow(e, "estimate")?;
        let v = &e.0.value;
        if len != v.len() {
            return Err(Error::InvalidArgument(format!("buffer holds {len} values, estimate has {}", v.len())).into());
        }
        if buf.is_null() {
            return Err(Fail::Null("buf"));
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, len);
        Ok(())
    })
}

/// Budget ledger as JSON in `*out`; release it with [`dp_string_free`].
///
/// # Safety
/// `e` must be a live estimate handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dp_estimate_ledger_json(e: *const DpEstimate, out: *mut *mut c_char) -> DpStatus {
    clear(out);
    guard(|| {
        let e = borrow(e, "estimate")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let text = serde_json::to_string(&e.0.budget).map_err(Error::from)?;
        *out = CString::new(text)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// 1 when every node of the ledger sums exactly to its budget, else 0.
///
/// # Safety
/// `e` must be NULL or a live estimate handle.
#[no_mangle]
pub unsafe extern "C" fn dp_estimate_budget_balanced(e: *const DpEstimate) -> i32 {
    e.as_ref().map_or(0, |e| i32::from(e.0.budget.is_balanced()))
}

/// # Safety
/// `e` must be NULL or a live estimate handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dp_estimate_free(e: *mut DpEstimate) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// # Safety
/// `s` must be NULL or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
