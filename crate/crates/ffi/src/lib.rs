//! C ABI over the `rgbd-action` pipeline.
//!
//! All objects are opaque handles created by constructor functions such as
//! `rgbd_model_load` or `rgbd_sample_synthetic` and released with the
//! matching `*_free`. Fallible calls
//! return an [`RgbdStatus`]; on failure the message is available from
//! [`rgbd_last_error_message`] on the same thread until the next failing call.
//! Strings returned by accessors are owned by their handle.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use rgbd_action::data::{generate_synthetic, load_depth, load_skeleton, Manifest, MotionTemplate, SynthOptions};
use rgbd_action::pipeline::{
    load_model, predict_sample, save_model, train_pipeline, ManifestSource, PipelineConfig, Prediction,
    TrainedPipeline,
};
use rgbd_action::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RgbdStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8 or an argument was out of range.
    InvalidArgument = 2,
    Io = 3,
    /// Malformed or inconsistent input data.
    Data = 4,
    /// Bad configuration file or override.
    Config = 5,
    /// Model archive could not be read.
    Model = 6,
    Numerical = 7,
    /// Internal panic; the handle arguments should be considered unusable.
    Panic = 8,
}

/// A trained pipeline.
pub struct RgbdModel {
    inner: TrainedPipeline,
    class_names: Vec<CString>,
}

/// A skeleton plus depth sample.
pub struct RgbdSample {
    inner: rgbd_action::data::ActionSample,
}

/// The result of classifying one sample.
pub struct RgbdPrediction {
    inner: Prediction,
    class_name: CString,
    symbols: Vec<u32>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RgbdStatus {
    match e {
        Error::Io { .. } => RgbdStatus::Io,
        Error::Parse { .. } | Error::InvalidInput(_) => RgbdStatus::Data,
        Error::Numerical(_) => RgbdStatus::Numerical,
        Error::Model(_) => RgbdStatus::Model,
        Error::Config(_) => RgbdStatus::Config,
        Error::Stage { source, .. } => status_of(source),
    }
}

fn fail(status: RgbdStatus, message: impl Into<String>) -> RgbdStatus {
    set_error(message.into());
    status
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), RgbdStatus>) -> RgbdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RgbdStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(RgbdStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

fn lift<T>(r: rgbd_action::Result<T>) -> Result<T, RgbdStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, RgbdStatus> {
    Ok(PathBuf::from(str_arg(p, name)?))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, RgbdStatus> {
    if p.is_null() {
        return Err(fail(RgbdStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(RgbdStatus::InvalidArgument, format!("`{name}` is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, RgbdStatus> {
    p.as_ref().ok_or_else(|| fail(RgbdStatus::NullArgument, format!("`{name}` is null")))
}

unsafe fn store<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

fn check_out<T>(out: *mut *mut T) -> Result<(), RgbdStatus> {
    if out.is_null() {
        return Err(fail(RgbdStatus::NullArgument, "`out` is null"));
    }
    Ok(())
}

fn wrap_model(inner: TrainedPipeline) -> RgbdModel {
    let class_names = inner
        .class_names
        .iter()
        .map(|c| CString::new(c.replace('\0', " ")).unwrap_or_default())
        .collect();
    RgbdModel { inner, class_names }
}

/// Message of the last failing call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rgbd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rgbd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Load a model archive.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rgbd_model_load(path: *const c_char, out: *mut *mut RgbdModel) -> RgbdStatus {
    guard(|| {
        check_out(out)?;
        let path = path_arg(path, "path")?;
        let model = lift(load_model(&path))?;
        store(out, wrap_model(model));
        Ok(())
    })
}

/// Train on a labeled manifest. `config_path` may be null for defaults.
///
/// # Safety
/// String arguments must be NUL-terminated or null where allowed; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rgbd_model_train(
    manifest_path: *const c_char,
    config_path: *const c_char,
    out: *mut *mut RgbdModel,
) -> RgbdStatus {
    guard(|| {
        check_out(out)?;
        let manifest_path = path_arg(manifest_path, "manifest_path")?;
        let config_path = if config_path.is_null() {
            None
        } else {
            Some(path_arg(config_path, "config_path")?)
        };
        let cfg = lift(PipelineConfig::load(config_path.as_deref(), &[]))?;
        let manifest = lift(Manifest::load(&manifest_path))?;
        let source = ManifestSource {
            manifest,
            joint_count: cfg.joint_count,
        };
        let (model, _) = lift(train_pipeline(&source, &cfg))?;
        store(out, wrap_model(model));
        Ok(())
    })
}

/// Write a model archive.
///
/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rgbd_model_save(model: *const RgbdModel, path: *const c_char) -> RgbdStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let path = path_arg(path, "path")?;
        lift(save_model(&model.inner, &path))
    })
}

/// # Safety
/// `model` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rgbd_model_free(model: *mut RgbdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of action classes, 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn rgbd_model_class_count(model: *const RgbdModel) -> usize {
    model.as_ref().map_or(0, |m| m.class_names.len())
}

/// Name of class `index`, or null when out of range.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn rgbd_model_class_name(model: *const RgbdModel, index: usize) -> *const c_char {
    model
        .as_ref()
        .and_then(|m| m.class_names.get(index))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// Number of segment symbols the model knows, 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn rgbd_model_symbol_count(model: *const RgbdModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.symbol_count())
}

/// Load a sample from a skeleton text file and a depth binary file.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rgbd_sample_load(
    skeleton_path: *const c_char,
    depth_path: *const c_char,
    joint_count: usize,
    out: *mut *mut RgbdSample,
) -> RgbdStatus {
    guard(|| {
        check_out(out)?;
        let skel_path = path_arg(skeleton_path, "skeleton_path")?;
        let depth_path = path_arg(depth_path, "depth_path")?;
        let skeleton = lift(load_skeleton(&skel_path, joint_count))?;
        let depth = lift(load_depth(&depth_path))?;
        let id = skel_path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        let inner = lift(rgbd_action::data::ActionSample::new(id, None, skeleton, depth))?;
        store(out, RgbdSample { inner });
        Ok(())
    })
}

/// Generate a synthetic sample from motion template `template_id`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rgbd_sample_synthetic(
    template_id: u32,
    frames: u32,
    noise_sigma: f64,
    seed: u64,
    out: *mut *mut RgbdSample,
) -> RgbdStatus {
    guard(|| {
        check_out(out)?;
        let template = lift(MotionTemplate::from_id(template_id as usize))?;
        let opts = SynthOptions {
            noise_sigma,
            frames: frames as usize,
            ..SynthOptions::default()
        };
        let id = format!("{}_{seed}", template.name());
        let inner = lift(generate_synthetic(template, &opts, seed, id))?;
        store(out, RgbdSample { inner });
        Ok(())
    })
}

/// Number of frames, 0 for a null handle.
///
/// # Safety
/// `sample` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn rgbd_sample_frame_count(sample: *const RgbdSample) -> usize {
    sample.as_ref().map_or(0, |s| s.inner.skeleton.len())
}

/// # Safety
/// `sample` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rgbd_sample_free(sample: *mut RgbdSample) {
    if !sample.is_null() {
        drop(Box::from_raw(sample));
    }
}

/// Classify a sample.
///
/// # Safety
/// Handles must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rgbd_predict(
    model: *const RgbdModel,
    sample: *const RgbdSample,
    out: *mut *mut RgbdPrediction,
) -> RgbdStatus {
    guard(|| {
        check_out(out)?;
        let model = ref_arg(model, "model")?;
        let sample = ref_arg(sample, "sample")?;
        let inner = lift(predict_sample(&model.inner, &sample.inner))?;
        let class_name = model.class_names[inner.class_id].clone();
        let symbols = inner.symbols.iter().map(|&s| s as u32).collect();
        store(
            out,
            RgbdPrediction {
                inner,
                class_name,
                symbols,
            },
        );
        Ok(())
    })
}

/// Predicted class index, or -1 for a null handle.
///
/// # Safety
/// `pred` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn rgbd_prediction_class_id(pred: *const RgbdPrediction) -> i64 {
    pred.as_ref().map_or(-1, |p| p.inner.class_id as i64)
}

/// Predicted class name, owned by the prediction.
///
/// # Safety
/// `pred` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn rgbd_prediction_class_name(pred: *const RgbdPrediction) -> *const c_char {
    pred.as_ref().map_or(ptr::null(), |p| p.class_name.as_ptr())
}

/// Segment symbol sequence; `len` receives its length.
///
/// # Safety
/// `pred` must be null or come from this library; `len` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn rgbd_prediction_symbols(pred: *const RgbdPrediction, len: *mut usize) -> *const u32 {
    let (p, n) = pred.as_ref().map_or((ptr::null(), 0), |p| (p.symbols.as_ptr(), p.symbols.len()));
    if !len.is_null() {
        *len = n;
    }
    p
}

/// Per-class HMM likelihood features fed to the SVM; `len` receives the class count.
///
/// # Safety
/// `pred` must be null or come from this library; `len` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn rgbd_prediction_features(pred: *const RgbdPrediction, len: *mut usize) -> *const f64 {
    let (p, n) = pred
        .as_ref()
        .map_or((ptr::null(), 0), |p| (p.inner.features.as_ptr(), p.inner.features.len()));
    if !len.is_null() {
        *len = n;
    }
    p
}

/// # Safety
/// `pred` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rgbd_prediction_free(pred: *mut RgbdPrediction) {
    if !pred.is_null() {
        drop(Box::from_raw(pred));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rgbd_action::ModelError;

    #[test]
    fn stage_errors_map_to_inner_status() {
        let e = Error::Numerical("x".into()).in_stage("igmm", "s");
        assert_eq!(status_of(&e), RgbdStatus::Numerical);
        assert_eq!(status_of(&Error::Model(ModelError::BadMagic)), RgbdStatus::Model);
    }

    #[test]
    fn panics_become_status() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, RgbdStatus::Panic);
        let msg = unsafe { CStr::from_ptr(rgbd_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("boom"));
    }
}
