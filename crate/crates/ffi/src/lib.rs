//! C ABI over `funcnet`.
//!
//! Every fallible function returns a `FuncnetStatus`; on failure the
//! message is kept per thread and read back with `funcnet_last_error`.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use funcnet::curvedata::{piecewise_rul_label, SparseCurve};
use funcnet::funcnet::{count_params, ModelKind};
use funcnet::pipeline::Scorer;
use funcnet::{Error, Pipeline};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FuncnetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidArgument = 5,
    DimensionMismatch = 6,
    Numerical = 7,
    FormatVersion = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Baseline architectures for `funcnet_count_params`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FuncnetModelKind {
    Rnn = 0,
    Lstm = 1,
    Gru = 2,
    Fmlp = 3,
}

/// Trained pipeline: FPCA scorer plus network.
pub struct FuncnetPipeline {
    inner: Pipeline,
}

/// FPCA scorer (univariate per feature, or joint).
pub struct FuncnetFpca {
    inner: Scorer,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    let c = CString::new(msg).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> FuncnetStatus {
    match e {
        Error::Io { .. } => FuncnetStatus::Io,
        Error::Parse { .. } | Error::Json(_) => FuncnetStatus::Parse,
        Error::DimensionMismatch { .. } => FuncnetStatus::DimensionMismatch,
        Error::FormatVersion { .. } => FuncnetStatus::FormatVersion,
        Error::Unidentifiable(_)
        | Error::NoSignal
        | Error::NonFinite(_)
        | Error::NotPositiveDefinite { .. }
        | Error::Diverged { .. } => FuncnetStatus::Numerical,
        _ => FuncnetStatus::InvalidArgument,
    }
}

struct Fail(FuncnetStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn fail<T>(status: FuncnetStatus, msg: impl Into<String>) -> Result<T, Fail> {
    Err(Fail(status, msg.into()))
}

/// Run `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FuncnetStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FuncnetStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FuncnetStatus::Panic
        }
    }
}

fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    // SAFETY: callers pass either null or a pointer obtained from this library.
    unsafe { p.as_ref() }.ok_or_else(|| Fail(FuncnetStatus::NullPointer, format!("{what} is null")))
}

fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return fail(FuncnetStatus::NullPointer, format!("{what} is null"));
    }
    // SAFETY: non-null and documented as NUL-terminated.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Fail(FuncnetStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// Build one curve per feature from parallel C arrays.
///
/// # Safety
/// `lens`, `times` and `values` must each hold `n_features` entries, and
/// `times[r]`, `values[r]` must point to `lens[r]` doubles.
unsafe fn curves_from_raw(
    n_features: usize,
    lens: *const usize,
    times: *const *const f64,
    values: *const *const f64,
) -> Result<Vec<SparseCurve>, Fail> {
    if n_features == 0 {
        return Ok(Vec::new());
    }
    if lens.is_null() || times.is_null() || values.is_null() {
        return fail(FuncnetStatus::NullPointer, "curve arrays are null");
    }
    let lens = std::slice::from_raw_parts(lens, n_features);
    let times = std::slice::from_raw_parts(times, n_features);
    let values = std::slice::from_raw_parts(values, n_features);
    let mut out = Vec::with_capacity(n_features);
    for r in 0..n_features {
        let m = lens[r];
        if m > 0 && (times[r].is_null() || values[r].is_null()) {
            return fail(FuncnetStatus::NullPointer, format!("curve {r} arrays are null"));
        }
        let (t, v) = if m == 0 {
            (Vec::new(), Vec::new())
        } else {
            (
                std::slice::from_raw_parts(times[r], m).to_vec(),
                std::slice::from_raw_parts(values[r], m).to_vec(),
            )
        };
        out.push(SparseCurve::new(t, v)?);
    }
    Ok(out)
}

fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return fail(FuncnetStatus::NullPointer, format!("{what} is null"));
    }
    // SAFETY: checked non-null; caller provides writable storage.
    unsafe { out.write(value) };
    Ok(())
}

fn put_handle<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return fail(FuncnetStatus::NullPointer, "out is null");
    }
    // SAFETY: checked non-null; ownership passes to the caller.
    unsafe { out.write(Box::into_raw(Box::new(value))) };
    Ok(())
}

fn copy_into(src: &[f64], out: *mut f64, capacity: usize, out_len: *mut usize) -> Result<(), Fail> {
    write_out(out_len, src.len(), "out_len")?;
    if src.len() > capacity {
        return fail(
            FuncnetStatus::BufferTooSmall,
            format!("need {} doubles, buffer holds {capacity}", src.len()),
        );
    }
    if !src.is_empty() {
        if out.is_null() {
            return fail(FuncnetStatus::NullPointer, "out is null");
        }
        // SAFETY: `out` holds at least `capacity >= src.len()` doubles.
        unsafe { ptr::copy_nonoverlapping(src.as_ptr(), out, src.len()) };
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn funcnet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null.
///
/// The pointer stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn funcnet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Load a pipeline bundle written by `Pipeline::save` or `funcnet train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn funcnet_pipeline_load(path: *const c_char, out: *mut *mut FuncnetPipeline) -> FuncnetStatus {
    guard(|| {
        let p = c_str(path, "path")?;
        let inner = Pipeline::load(Path::new(p))?;
        put_handle(out, FuncnetPipeline { inner })
    })
}

/// Parse a pipeline bundle from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn funcnet_pipeline_from_json(json: *const c_char, out: *mut *mut FuncnetPipeline) -> FuncnetStatus {
    guard(|| {
        let text = c_str(json, "json")?;
        let inner = Pipeline::from_json(text)?;
        put_handle(out, FuncnetPipeline { inner })
    })
}

/// Release a pipeline. Null is ignored.
///
/// # Safety
/// `handle` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn funcnet_pipeline_free(handle: *mut FuncnetPipeline) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Number of input features (curves per subject).
///
/// # Safety
/// `handle` must be a live pipeline; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn funcnet_pipeline_n_features(handle: *const FuncnetPipeline, out: *mut usize) -> FuncnetStatus {
    guard(|| {
        let h = non_null(handle, "handle")?;
        write_out(out, h.inner.feature_names.len(), "out")
    })
}

/// Length of the score vector fed to the network.
///
/// # Safety
/// `handle` must be a live pipeline; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn funcnet_pipeline_n_inputs(handle: *const FuncnetPipeline, out: *mut usize) -> FuncnetStatus {
    guard(|| {
        let h = non_null(handle, "handle")?;
        write_out(out, h.inner.network.n_inputs(), "out")
    })
}

/// Predict one subject.
///
/// Feature `r` is observed `lens[r]` times at `times[r]` with `values[r]`.
/// `out_value` receives the probability (classification) or response;
/// `out_label` receives 0/1, or -1 for regression. Either may be null.
///
/// # Safety
/// Arrays must match the layout above; `handle` must be live.
#[no_mangle]
pub unsafe extern "C" fn funcnet_pipeline_predict(
    handle: *const FuncnetPipeline,
    n_features: usize,
    lens: *const usize,
    times: *const *const f64,
    values: *const *const f64,
    out_value: *mut f64,
    out_label: *mut i32,
) -> FuncnetStatus {
    guard(|| {
        let h = non_null(handle, "handle")?;
        let curves = curves_from_raw(n_features, lens, times, values)?;
        let pred = h.inner.predict_curves(&curves)?;
        if !out_value.is_null() {
            out_value.write(pred.value);
        }
        if !out_label.is_null() {
            out_label.write(pred.label.map_or(-1, i32::from));
        }
        Ok(())
    })
}

/// Network inputs (FPC scores) of one subject under a pipeline's scorer.
///
/// Writes up to `capacity` doubles to `out` and the required length to
/// `out_len`; returns `BufferTooSmall` when `capacity` is short.
///
/// # Safety
/// Same curve layout as `funcnet_pipeline_predict`; `out` holds `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn funcnet_pipeline_scores(
    handle: *const FuncnetPipeline,
    n_features: usize,
    lens: *const usize,
    times: *const *const f64,
    values: *const *const f64,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> FuncnetStatus {
    guard(|| {
        let h = non_null(handle, "handle")?;
        let curves = curves_from_raw(n_features, lens, times, values)?;
        let s = h.inner.scorer.inputs(&curves)?;
        copy_into(&s, out, capacity, out_len)
    })
}

/// Load an FPCA scorer from `funcnet fpca` output or from a pipeline bundle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn funcnet_fpca_load(path: *const c_char, out: *mut *mut FuncnetFpca) -> FuncnetStatus {
    guard(|| {
        let p = c_str(path, "path")?;
        let inner = Scorer::load(Path::new(p))?;
        put_handle(out, FuncnetFpca { inner })
    })
}

/// Release an FPCA handle. Null is ignored.
///
/// # Safety
/// `handle` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn funcnet_fpca_free(handle: *mut FuncnetFpca) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Number of features the scorer expects.
///
/// # Safety
/// `handle` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn funcnet_fpca_n_features(handle: *const FuncnetFpca, out: *mut usize) -> FuncnetStatus {
    guard(|| {
        let h = non_null(handle, "handle")?;
        write_out(out, h.inner.feature_models().len(), "out")
    })
}

/// Total score-vector length.
///
/// # Safety
/// `handle` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn funcnet_fpca_n_scores(handle: *const FuncnetFpca, out: *mut usize) -> FuncnetStatus {
    guard(|| {
        let h = non_null(handle, "handle")?;
        write_out(out, h.inner.input_dims().iter().sum(), "out")
    })
}

/// Scores of one subject; see `funcnet_pipeline_scores` for the buffer protocol.
///
/// # Safety
/// Same as `funcnet_pipeline_scores`.
#[no_mangle]
pub unsafe extern "C" fn funcnet_fpca_scores(
    handle: *const FuncnetFpca,
    n_features: usize,
    lens: *const usize,
    times: *const *const f64,
    values: *const *const f64,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> FuncnetStatus {
    guard(|| {
        let h = non_null(handle, "handle")?;
        let curves = curves_from_raw(n_features, lens, times, values)?;
        let s = h.inner.inputs(&curves)?;
        copy_into(&s, out, capacity, out_len)
    })
}

/// Parameter count of a recurrent baseline or of an FMLP whose functional
/// neurons each use `q` basis coefficients per feature.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn funcnet_count_params(
    kind: FuncnetModelKind,
    hidden: usize,
    features: usize,
    q: usize,
    out: *mut u64,
) -> FuncnetStatus {
    guard(|| {
        let kind = match kind {
            FuncnetModelKind::Rnn => ModelKind::Rnn,
            FuncnetModelKind::Lstm => ModelKind::Lstm,
            FuncnetModelKind::Gru => ModelKind::Gru,
            FuncnetModelKind::Fmlp => ModelKind::Fmlp,
        };
        let qs = vec![vec![q; features]; hidden];
        let n = count_params(kind, hidden, features, &qs)?;
        write_out(out, n, "out")
    })
}

/// `min(linear_rul, cap)`.
#[no_mangle]
pub extern "C" fn funcnet_piecewise_rul(linear_rul: f64, cap: f64) -> f64 {
    piecewise_rul_label(linear_rul, cap)
}
