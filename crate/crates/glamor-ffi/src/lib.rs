//! C ABI over the glamor library: opaque model handles, status codes, and
//! a thread-local last-error message.
//!
//! Conventions: every fallible function returns `GlamorStatus` and writes
//! its result through out-pointers, which stay untouched on failure. A
//! non-ok status leaves a human-readable message retrievable with
//! `glamor_last_error_message` until the next failure on the same thread.
//! Pointers must be non-null and, for arrays, valid for the stated length;
//! handles are freed exactly once with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};

use glamor::gld::GldParams;
use glamor::glam::Predictor;
use glamor::rng::{substream, uniform_open01, Stream};
use glamor::{Error, GlamModel};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlamorStatus {
    Ok = 0,
    /// Null pointer, malformed UTF-8/JSON, or a length mismatch.
    InvalidArgument = 1,
    /// Input outside a mathematical domain (quantile level, support, ...).
    Domain = 2,
    /// Parameters do not define a valid distribution or model.
    InvalidModel = 3,
    /// Requested quantity does not exist (moments, indices).
    Undefined = 4,
    /// Fitting or estimation failed to produce a result.
    Failed = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: Vec<u8> = msg.bytes().filter(|&b| b != 0).collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).expect("NUL bytes stripped");
    });
}

fn status_of(e: &Error) -> GlamorStatus {
    match e {
        Error::Domain(_) => GlamorStatus::Domain,
        Error::InvalidParams(_) => GlamorStatus::InvalidModel,
        Error::MomentUndefined(_) | Error::UndefinedIndex(_) => GlamorStatus::Undefined,
        Error::Config(_) | Error::Data(_) => GlamorStatus::InvalidArgument,
        _ => GlamorStatus::Failed,
    }
}

fn fail(e: &Error) -> GlamorStatus {
    set_error(&e.to_string());
    status_of(e)
}

fn invalid(msg: &str) -> GlamorStatus {
    set_error(msg);
    GlamorStatus::InvalidArgument
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread. Never null.
#[no_mangle]
pub extern "C" fn glamor_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// FKML generalized lambda parameter vector.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GlamorGld {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
}

impl GlamorGld {
    fn checked(&self) -> Result<GldParams, Error> {
        GldParams::new(self.lambda1, self.lambda2, self.lambda3, self.lambda4)
    }
}

macro_rules! nonnull {
    ($ptr:expr, $name:literal) => {
        match unsafe { $ptr.as_ref() } {
            Some(r) => r,
            None => return invalid(concat!($name, " is null")),
        }
    };
}

macro_rules! out_slot {
    ($ptr:expr, $name:literal) => {
        match unsafe { $ptr.as_mut() } {
            Some(r) => r,
            None => return invalid(concat!($name, " is null")),
        }
    };
}

/// Quantile Q(u) of a GLD.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn glamor_gld_quantile(
    params: *const GlamorGld,
    u: f64,
    out: *mut f64,
) -> GlamorStatus {
    let params = nonnull!(params, "params");
    let out = out_slot!(out, "out");
    match params.checked().and_then(|p| p.quantile(u)) {
        Ok(v) => {
            *out = v;
            GlamorStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Density f(y) of a GLD (zero outside the support).
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn glamor_gld_pdf(
    params: *const GlamorGld,
    y: f64,
    out: *mut f64,
) -> GlamorStatus {
    let params = nonnull!(params, "params");
    let out = out_slot!(out, "out");
    match params.checked().and_then(|p| p.pdf(y, glamor::gld::DEFAULT_TOL)) {
        Ok(v) => {
            *out = v;
            GlamorStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// CDF F(y) of a GLD, by bisection of the quantile function.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn glamor_gld_cdf(
    params: *const GlamorGld,
    y: f64,
    out: *mut f64,
) -> GlamorStatus {
    let params = nonnull!(params, "params");
    let out = out_slot!(out, "out");
    match params.checked().and_then(|p| p.cdf(y, glamor::gld::DEFAULT_TOL)) {
        Ok(v) => {
            *out = v;
            GlamorStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Mean of a GLD; requires λ3, λ4 > −1.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn glamor_gld_mean(params: *const GlamorGld, out: *mut f64) -> GlamorStatus {
    let params = nonnull!(params, "params");
    let out = out_slot!(out, "out");
    match params.checked().and_then(|p| p.mean()) {
        Ok(v) => {
            *out = v;
            GlamorStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Variance of a GLD; requires λ3, λ4 > −1/2.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn glamor_gld_variance(
    params: *const GlamorGld,
    out: *mut f64,
) -> GlamorStatus {
    let params = nonnull!(params, "params");
    let out = out_slot!(out, "out");
    match params.checked().and_then(|p| p.variance()) {
        Ok(v) => {
            *out = v;
            GlamorStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Opaque fitted-model handle.
pub struct GlamorModel {
    inner: GlamModel,
}

/// Parses a model from its JSON serialization and returns an owned handle.
///
/// # Safety
/// `json` must be a NUL-terminated string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn glamor_model_from_json(
    json: *const c_char,
    out: *mut *mut GlamorModel,
) -> GlamorStatus {
    if json.is_null() {
        return invalid("json is null");
    }
    let out = out_slot!(out, "out");
    let text = match CStr::from_ptr(json).to_str() {
        Ok(t) => t,
        Err(_) => return invalid("json is not valid UTF-8"),
    };
    let model: GlamModel = match serde_json::from_str(text) {
        Ok(m) => m,
        Err(e) => return invalid(&format!("model JSON parse failure: {e}")),
    };
    if let Err(e) = model.validate() {
        set_error(&e.to_string());
        return GlamorStatus::InvalidModel;
    }
    *out = Box::into_raw(Box::new(GlamorModel { inner: model }));
    GlamorStatus::Ok
}

/// Serializes a model handle back to JSON; free with `glamor_string_free`.
///
/// # Safety
/// `model` must be a live handle, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn glamor_model_to_json(
    model: *const GlamorModel,
    out: *mut *mut c_char,
) -> GlamorStatus {
    let model = nonnull!(model, "model");
    let out = out_slot!(out, "out");
    let text = match serde_json::to_string(&model.inner) {
        Ok(t) => t,
        Err(e) => {
            set_error(&format!("serialization failure: {e}"));
            return GlamorStatus::Failed;
        }
    };
    match CString::new(text) {
        Ok(c) => {
            *out = c.into_raw();
            GlamorStatus::Ok
        }
        Err(_) => {
            set_error("serialized JSON contained a NUL byte");
            GlamorStatus::Failed
        }
    }
}

/// Number of input dimensions of the model.
///
/// # Safety
/// `model` must be a live handle, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn glamor_model_dim(
    model: *const GlamorModel,
    out: *mut usize,
) -> GlamorStatus {
    let model = nonnull!(model, "model");
    let out = out_slot!(out, "out");
    *out = model.inner.input_model.dim();
    GlamorStatus::Ok
}

/// GLD parameters predicted at one input point.
///
/// # Safety
/// `model` must be a live handle, `x` valid for `dim` reads, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn glamor_model_lambda(
    model: *const GlamorModel,
    x: *const f64,
    dim: usize,
    out: *mut GlamorGld,
) -> GlamorStatus {
    let model = nonnull!(model, "model");
    let out = out_slot!(out, "out");
    if x.is_null() {
        return invalid("x is null");
    }
    if dim != model.inner.input_model.dim() {
        return invalid("x length does not match the model dimension");
    }
    let xs = std::slice::from_raw_parts(x, dim);
    match model.inner.predict_lambda(xs) {
        Ok(p) => {
            *out = GlamorGld {
                lambda1: p.lambda1,
                lambda2: p.lambda2,
                lambda3: p.lambda3,
                lambda4: p.lambda4,
            };
            GlamorStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Conditional response quantile Q(u; x) of the emulator.
///
/// # Safety
/// `model` must be a live handle, `x` valid for `dim` reads, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn glamor_model_quantile(
    model: *const GlamorModel,
    u: f64,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> GlamorStatus {
    let model = nonnull!(model, "model");
    let out = out_slot!(out, "out");
    if x.is_null() {
        return invalid("x is null");
    }
    if dim != model.inner.input_model.dim() {
        return invalid("x length does not match the model dimension");
    }
    let xs = std::slice::from_raw_parts(x, dim);
    match model.inner.emulator_quantile(u, xs) {
        Ok(v) => {
            *out = v;
            GlamorStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Draws `n` emulator samples at a fixed input into `out`, reproducibly
/// from `seed`.
///
/// # Safety
/// `model` must be a live handle, `x` valid for `dim` reads, `out` valid
/// for `n` writes.
#[no_mangle]
pub unsafe extern "C" fn glamor_model_sample(
    model: *const GlamorModel,
    x: *const f64,
    dim: usize,
    seed: u64,
    n: usize,
    out: *mut f64,
) -> GlamorStatus {
    let model = nonnull!(model, "model");
    if x.is_null() || out.is_null() {
        return invalid("x or out is null");
    }
    if dim != model.inner.input_model.dim() {
        return invalid("x length does not match the model dimension");
    }
    if n == 0 {
        return invalid("sample count is zero");
    }
    let xs = std::slice::from_raw_parts(x, dim);
    if let Err(e) = model.inner.input_model.check_point(xs) {
        return fail(&e);
    }
    let mut pred = match Predictor::new(&model.inner) {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    let slots = std::slice::from_raw_parts_mut(out, n);
    let mut rng = substream(seed, Stream::Simulate(0));
    for slot in slots {
        *slot = pred.quantile(uniform_open01(&mut rng), xs);
    }
    GlamorStatus::Ok
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must come from `glamor_model_from_json` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn glamor_model_free(model: *mut GlamorModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from a glamor function and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn glamor_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
