//! C interface to the snnk library.
//!
//! Every function returns an [`SnnkStatus`]. On failure the message is kept
//! per thread and read with [`snnk_last_error`]. Matrices are dense and
//! row-major. Layers are opaque handles released with [`snnk_layer_free`];
//! strings returned by the library are released with [`snnk_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use libc::{c_char, size_t};
use nalgebra::DMatrix;
use snnk::activations::Activation;
use snnk::snnk::{arc_cosine_exact, ffl_forward, gaussian_projection, snnk_from_ffl, FflSpec, SnnkLayer};
use snnk::urf::UrfConfig;
use snnk::SnnkError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnnkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Unsupported = 4,
    Numerical = 5,
    Serialization = 6,
    Panic = 7,
}

/// Opaque SNNK layer.
pub struct SnnkLayerHandle(SnnkLayer);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &SnnkError) -> SnnkStatus {
    match e {
        SnnkError::ShapeMismatch(_) | SnnkError::LayoutMismatch => SnnkStatus::ShapeMismatch,
        SnnkError::UnsupportedActivation(_) | SnnkError::UnsupportedClosedForm(_) | SnnkError::NotAtomic => {
            SnnkStatus::Unsupported
        }
        SnnkError::QuadratureNonConvergent { .. }
        | SnnkError::SingularSystem
        | SnnkError::DivergenceDetected { .. }
        | SnnkError::ZeroVector => SnnkStatus::Numerical,
        SnnkError::Json(_) | SnnkError::Csv(_) | SnnkError::Io(_) => SnnkStatus::Serialization,
        SnnkError::ProposalMismatch(_) | SnnkError::InvalidConfig(_) => SnnkStatus::InvalidArgument,
    }
}

struct Fail(SnnkStatus, String);

impl From<SnnkError> for Fail {
    fn from(e: SnnkError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SnnkStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SnnkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SnnkStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic inside snnk");
            SnnkStatus::Panic
        }
    }
}

unsafe fn slice_in<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn str_in<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(SnnkStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn layer_ref<'a>(h: *const SnnkLayerHandle) -> Result<&'a SnnkLayer, Fail> {
    h.as_ref().map(|h| &h.0).ok_or_else(|| null("layer"))
}

unsafe fn put_layer(out: *mut *mut SnnkLayerHandle, layer: SnnkLayer) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(SnnkLayerHandle(layer)));
    Ok(())
}

fn dims(rows: usize, cols: usize) -> Result<usize, Fail> {
    rows.checked_mul(cols).ok_or_else(|| Fail(SnnkStatus::ShapeMismatch, "size overflow".into()))
}

unsafe fn ffl_in(
    weights: *const f64,
    out_dim: size_t,
    in_dim: size_t,
    bias: *const f64,
    activation: *const c_char,
) -> Result<FflSpec, Fail> {
    let w = slice_in(weights, dims(out_dim, in_dim)?, "weights")?;
    let b = slice_in(bias, out_dim, "bias")?;
    let act: Activation = str_in(activation, "activation")?.parse()?;
    Ok(FflSpec::new(DMatrix::from_row_slice(out_dim, in_dim, w), b.to_vec(), act)?)
}

/// Message of the last failed call on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn snnk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn snnk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// SNNK layer replacing `x ↦ f(W x + b)` with `W` of shape
/// `out_dim × in_dim`. `m` features per axis, shape parameter `a <= 0`.
///
/// # Safety
/// `weights` must hold `out_dim * in_dim` values, `bias` `out_dim`, and
/// `activation` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn snnk_layer_from_ffl(
    weights: *const f64,
    out_dim: size_t,
    in_dim: size_t,
    bias: *const f64,
    activation: *const c_char,
    m: size_t,
    a: f64,
    seed: u64,
    out: *mut *mut SnnkLayerHandle,
) -> SnnkStatus {
    guard(|| {
        let spec = ffl_in(weights, out_dim, in_dim, bias, activation)?;
        let cfg = UrfConfig { m, a, seed, ..Default::default() };
        put_layer(out, snnk_from_ffl(&spec, &cfg)?)
    })
}

/// ReLU-SNNK layer for weight rows `W` (`out_dim × in_dim`) with a Gaussian
/// projection of `features` rows. Outputs estimate the first-order
/// arc-cosine kernel between each row and the input.
///
/// # Safety
/// `weights` must hold `out_dim * in_dim` values.
#[no_mangle]
pub unsafe extern "C" fn snnk_layer_relu(
    weights: *const f64,
    out_dim: size_t,
    in_dim: size_t,
    features: size_t,
    seed: u64,
    out: *mut *mut SnnkLayerHandle,
) -> SnnkStatus {
    guard(|| {
        if features == 0 {
            return Err(Fail(SnnkStatus::InvalidArgument, "features must be positive".into()));
        }
        let w = slice_in(weights, dims(out_dim, in_dim)?, "weights")?;
        let w = DMatrix::from_row_slice(out_dim, in_dim, w);
        let g = gaussian_projection(features, in_dim, seed);
        put_layer(out, SnnkLayer::relu_from_weights(&w, g, seed)?)
    })
}

/// Applies the layer to `rows` inputs of length `in_dim`; writes
/// `rows * output_dim` values to `out`.
///
/// # Safety
/// `layer` must be a live handle, `x` must hold `rows * in_dim` values and
/// `out` must have room for `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn snnk_layer_forward(
    layer: *const SnnkLayerHandle,
    x: *const f64,
    rows: size_t,
    in_dim: size_t,
    out: *mut f64,
    out_len: size_t,
) -> SnnkStatus {
    guard(|| {
        let layer = layer_ref(layer)?;
        let xs = slice_in(x, dims(rows, in_dim)?, "x")?;
        let need = dims(rows, layer.output_dim())?;
        if out_len < need {
            return Err(Fail(SnnkStatus::ShapeMismatch, format!("output buffer holds {out_len}, need {need}")));
        }
        if need > 0 && out.is_null() {
            return Err(null("out"));
        }
        let y = layer.forward_batch(&DMatrix::from_row_slice(rows, in_dim, xs))?;
        for r in 0..rows {
            for c in 0..y.ncols() {
                *out.add(r * y.ncols() + c) = y[(r, c)];
            }
        }
        Ok(())
    })
}

/// Writes input dimension, output dimension and feature length.
///
/// # Safety
/// `layer` must be a live handle; each non-null pointer must be writable.
#[no_mangle]
pub unsafe extern "C" fn snnk_layer_shape(
    layer: *const SnnkLayerHandle,
    input_dim: *mut size_t,
    output_dim: *mut size_t,
    feature_len: *mut size_t,
) -> SnnkStatus {
    guard(|| {
        let layer = layer_ref(layer)?;
        if let Some(p) = input_dim.as_mut() {
            *p = layer.input_dim();
        }
        if let Some(p) = output_dim.as_mut() {
            *p = layer.output_dim();
        }
        if let Some(p) = feature_len.as_mut() {
            *p = layer.feature_len();
        }
        Ok(())
    })
}

/// Number of real trainable scalars in the feature-weight matrix.
///
/// # Safety
/// `layer` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn snnk_layer_parameters(layer: *const SnnkLayerHandle, out: *mut size_t) -> SnnkStatus {
    guard(|| {
        let layer = layer_ref(layer)?;
        *out.as_mut().ok_or_else(|| null("out"))? = layer.trainable_parameters();
        Ok(())
    })
}

/// Serializes the layer; free the string with [`snnk_string_free`].
///
/// # Safety
/// `layer` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn snnk_layer_to_json(layer: *const SnnkLayerHandle, out: *mut *mut c_char) -> SnnkStatus {
    guard(|| {
        let layer = layer_ref(layer)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = CString::new(layer.to_json()?).map_err(|e| Fail(SnnkStatus::Serialization, e.to_string()))?;
        *out = s.into_raw();
        Ok(())
    })
}

/// Rebuilds a layer from [`snnk_layer_to_json`] output.
///
/// # Safety
/// `json` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn snnk_layer_from_json(json: *const c_char, out: *mut *mut SnnkLayerHandle) -> SnnkStatus {
    guard(|| put_layer(out, SnnkLayer::from_json(str_in(json, "json")?)?))
}

/// # Safety
/// `layer` must come from this library and not be freed twice. Null is a
/// no-op.
#[no_mangle]
pub unsafe extern "C" fn snnk_layer_free(layer: *mut SnnkLayerHandle) {
    if !layer.is_null() {
        drop(Box::from_raw(layer));
    }
}

/// # Safety
/// `s` must come from this library and not be freed twice. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn snnk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Exact `f(W x + b)` for one input, for comparison with a layer.
///
/// # Safety
/// Buffers must hold `out_dim * in_dim`, `out_dim`, `in_dim` and `out_dim`
/// values respectively; `activation` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn snnk_ffl_forward(
    weights: *const f64,
    out_dim: size_t,
    in_dim: size_t,
    bias: *const f64,
    activation: *const c_char,
    x: *const f64,
    out: *mut f64,
) -> SnnkStatus {
    guard(|| {
        let spec = ffl_in(weights, out_dim, in_dim, bias, activation)?;
        let y = ffl_forward(slice_in(x, in_dim, "x")?, &spec)?;
        if out_dim > 0 && out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(y.as_ptr(), out, y.len());
        Ok(())
    })
}

/// Arc-cosine kernel `K_n(x, y)` for `n <= 2`.
///
/// # Safety
/// `x` and `y` must hold `dim` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn snnk_arc_cosine(n: u32, x: *const f64, y: *const f64, dim: size_t, out: *mut f64) -> SnnkStatus {
    guard(|| {
        let v = arc_cosine_exact(n, slice_in(x, dim, "x")?, slice_in(y, dim, "y")?)?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}
