//! C ABI over the vbssl toolkit.
//!
//! Every function returns a `VbsslStatus`. On failure the message is kept
//! per thread and can be copied out with `vbssl_last_error_message`.
//! Matrices are row-major `double` buffers. Output buffers are owned by the
//! caller and their capacity is passed in elements.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ndarray::{Array2, Array3, ArrayView2};
use vbssl::model::checkpoint;
use vbssl::{Error, Result};

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VbsslStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Io = 4,
    BadCheckpoint = 5,
    NonFinite = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// The loss and its terms, each term unweighted.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VbsslLoss {
    pub invariance: f64,
    pub variance_a: f64,
    pub variance_b: f64,
    pub covariance_a: f64,
    pub covariance_b: f64,
    pub total: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VbsslMetrics {
    pub accuracy: f64,
    pub top3_accuracy: f64,
    pub f1_macro: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
}

/// Opaque handle to a loaded model.
pub struct VbsslModel {
    ckpt: checkpoint::Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> VbsslStatus {
    match e {
        Error::ShapeMismatch(_) => VbsslStatus::ShapeMismatch,
        Error::MissingFile(_) | Error::Io { .. } => VbsslStatus::Io,
        Error::Checkpoint { .. } => VbsslStatus::BadCheckpoint,
        Error::NonFinite(_) => VbsslStatus::NonFinite,
        _ => VbsslStatus::InvalidArgument,
    }
}

struct Failure(VbsslStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(VbsslStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> std::result::Result<(), Failure>) -> VbsslStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            VbsslStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            VbsslStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must point to `len` readable values, or be null with `len == 0`.
unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> std::result::Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must point to `cap` writable values.
unsafe fn out_slice<'a, T>(ptr: *mut T, cap: usize, need: usize, what: &str) -> std::result::Result<&'a mut [T], Failure> {
    if cap < need {
        return Err(Failure(VbsslStatus::BufferTooSmall, format!("{what} holds {cap} values, {need} needed")));
    }
    if need == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, cap))
}

fn matrix(data: &[f64], rows: usize, cols: usize) -> Result<ArrayView2<'_, f64>> {
    ArrayView2::from_shape((rows, cols), data).map_err(|e| Error::ShapeMismatch(e.to_string()))
}

fn checked_len(a: usize, b: usize) -> std::result::Result<usize, Failure> {
    a.checked_mul(b).ok_or_else(|| Failure(VbsslStatus::InvalidArgument, "dimensions overflow".into()))
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `cap - 1` bytes) and returns the full message length in bytes.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be null with `cap == 0`.
#[no_mangle]
pub unsafe extern "C" fn vbssl_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// VICReg loss of two `n x d` embedding batches.
///
/// # Safety
/// `za` and `zb` must each point to `n * d` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vbssl_vicreg_loss(
    za: *const f64,
    zb: *const f64,
    n: usize,
    d: usize,
    lambda: f64,
    mu: f64,
    nu: f64,
    gamma: f64,
    epsilon: f64,
    out: *mut VbsslLoss,
) -> VbsslStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let len = checked_len(n, d)?;
        let a = matrix(slice(za, len, "za")?, n, d)?;
        let b = matrix(slice(zb, len, "zb")?, n, d)?;
        let w = vbssl::vicreg::VicregWeights { lambda, mu, nu, gamma, epsilon };
        w.validate()?;
        let l = vbssl::vicreg::vicreg_total(a, b, &w)?;
        *out = VbsslLoss {
            invariance: l.invariance,
            variance_a: l.variance_a,
            variance_b: l.variance_b,
            covariance_a: l.covariance_a,
            covariance_b: l.covariance_b,
            total: l.total,
        };
        Ok(())
    })
}

/// Shape of the magnitude STFT of `len` samples.
///
/// # Safety
/// `bins` and `frames` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vbssl_stft_shape(len: usize, fft_size: usize, hop: usize, bins: *mut usize, frames: *mut usize) -> VbsslStatus {
    guard(|| {
        if bins.is_null() || frames.is_null() {
            return Err(null("bins/frames"));
        }
        if fft_size == 0 || hop == 0 {
            return Err(Error::InvalidArgument("fft_size and hop must be positive".into()).into());
        }
        *bins = fft_size / 2 + 1;
        *frames = vbssl::dsp::frame_count(len, fft_size, hop);
        Ok(())
    })
}

/// Magnitude STFT (Hann window) of mono samples, written as a
/// `bins x frames` row-major matrix into `out`.
///
/// # Safety
/// `samples` must point to `len` floats and `out` to `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn vbssl_stft_magnitude(
    samples: *const f32,
    len: usize,
    sample_rate: u32,
    fft_size: usize,
    hop: usize,
    out: *mut f64,
    cap: usize,
) -> VbsslStatus {
    guard(|| {
        let clip = vbssl::audio::AudioClip::new(slice(samples, len, "samples")?.to_vec(), sample_rate)?;
        let spec = vbssl::dsp::stft(&clip, fft_size, hop)?;
        let dst = out_slice(out, cap, spec.values.len(), "out")?;
        for (o, v) in dst.iter_mut().zip(spec.values.iter()) {
            *o = v.norm();
        }
        Ok(())
    })
}

/// Classification metrics of `n x k` logits against labels in `0..k`.
///
/// # Safety
/// `labels` must point to `n` values, `logits` to `n * k` doubles, and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vbssl_compute_metrics(
    labels: *const usize,
    logits: *const f64,
    n: usize,
    k: usize,
    out: *mut VbsslMetrics,
) -> VbsslStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let labels = slice(labels, n, "labels")?;
        let logits = matrix(slice(logits, checked_len(n, k)?, "logits")?, n, k)?.to_owned();
        let m = vbssl::metrics::compute_metrics(labels, &logits)?;
        *out = VbsslMetrics {
            accuracy: m.accuracy,
            top3_accuracy: m.top3_accuracy,
            f1_macro: m.f1_macro,
            precision_macro: m.precision_macro,
            recall_macro: m.recall_macro,
        };
        Ok(())
    })
}

/// Loads a checkpoint. Release the handle with `vbssl_model_free`.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vbssl_model_load(path: *const c_char, out: *mut *mut VbsslModel) -> VbsslStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return Err(null("path/out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure(VbsslStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
        let ckpt = checkpoint::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(VbsslModel { ckpt }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from `vbssl_model_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vbssl_model_free(model: *mut VbsslModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input spectrogram shape and number of classes (0 for a model without a
/// classifier head).
///
/// # Safety
/// `model` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn vbssl_model_info(model: *const VbsslModel, bins: *mut usize, frames: *mut usize, classes: *mut usize) -> VbsslStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if bins.is_null() || frames.is_null() || classes.is_null() {
            return Err(null("bins/frames/classes"));
        }
        let cfg = &m.ckpt.model.config;
        (*bins, *frames) = cfg.input_shape;
        *classes = if cfg.has_classifier() { cfg.num_classes } else { 0 };
        Ok(())
    })
}

/// Eval-mode logits for `n` spectrograms of the model's input shape, written
/// as an `n x classes` matrix.
///
/// # Safety
/// `views` must point to `n * bins * frames` doubles and `out` to `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn vbssl_model_predict(
    model: *const VbsslModel,
    views: *const f64,
    n: usize,
    out: *mut f64,
    cap: usize,
) -> VbsslStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let (bins, frames) = m.ckpt.model.config.input_shape;
        let x = slice(views, checked_len(n, checked_len(bins, frames)?)?, "views")?;
        let x = Array3::from_shape_vec((n, bins, frames), x.to_vec()).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let logits: Array2<f64> = m.ckpt.model.predict(&x)?;
        let dst = out_slice(out, cap, logits.len(), "out")?;
        dst[..logits.len()].copy_from_slice(logits.as_slice().expect("standard layout"));
        Ok(())
    })
}
