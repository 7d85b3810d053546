//! C ABI over `dascn-core`.
//!
//! Datasets and trained models cross the boundary as opaque handles. Every
//! entry point returns a [`DascnStatus`]; on failure a message is kept in a
//! thread-local slot readable through [`dascn_last_error`]. Panics are caught
//! at the boundary and reported as [`DascnStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use dascn_core::checkpoint;
use dascn_core::data::{self, DatasetBundle, SyntheticSpec};
use dascn_core::evaluation::{self, EvalConfig};
use dascn_core::networks::ModelParams;
use dascn_core::synthesis::{self, SynthesisRequest};
use dascn_core::trainer::{self, TrainConfig};
use dascn_core::Error;

/// Result codes shared by every function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DascnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Json = 5,
    Divergence = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque dataset handle.
pub struct DascnDataset {
    inner: DatasetBundle,
}

/// Opaque trained-model handle: parameters plus the config that produced them.
pub struct DascnModel {
    params: ModelParams,
    config: TrainConfig,
}

/// Dataset shape.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DascnDims {
    pub feature_dim: usize,
    pub attribute_dim: usize,
    pub n_seen_classes: usize,
    pub n_unseen_classes: usize,
    pub n_train: usize,
    pub n_test_seen: usize,
    pub n_test_unseen: usize,
}

/// Generalized zero-shot accuracies.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DascnScores {
    pub ts: f64,
    pub tr: f64,
    pub h: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    let c = CString::new(text).expect("interior NULs replaced");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

struct Failure {
    status: DascnStatus,
    message: String,
}

impl Failure {
    fn new(status: DascnStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn null(name: &str) -> Self {
        Self::new(DascnStatus::NullPointer, format!("{name} is null"))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Io { .. } => DascnStatus::Io,
            Error::Format { .. } => DascnStatus::Format,
            Error::Validation(_) => DascnStatus::InvalidArgument,
            Error::Divergence { .. } => DascnStatus::Divergence,
            Error::Json { .. } => DascnStatus::Json,
        };
        Self::new(status, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn guard(f: impl FnOnce() -> Outcome) -> DascnStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DascnStatus::Ok,
        Ok(Err(failure)) => {
            set_last_error(failure.message);
            failure.status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {message}"));
            DascnStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(DascnStatus::InvalidArgument, format!("{name} is not valid UTF-8")))
}

unsafe fn json_arg<T: serde::de::DeserializeOwned + Default>(p: *const c_char, name: &str) -> Result<T, Failure> {
    if p.is_null() {
        return Ok(T::default());
    }
    let text = str_arg(p, name)?;
    serde_json::from_str(text).map_err(|e| Error::json(name, e).into())
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(name))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(name))
}

/// Message of the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn dascn_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Load `<root>/<split>/` in the on-disk dataset layout.
///
/// # Safety
/// `root` and `split` must be NUL-terminated strings. `out` must be a valid
/// pointer; on success it receives a handle to free with
/// [`dascn_dataset_free`].
#[no_mangle]
pub unsafe extern "C" fn dascn_dataset_load(
    root: *const c_char,
    split: *const c_char,
    out: *mut *mut DascnDataset,
) -> DascnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let root = PathBuf::from(str_arg(root, "root")?);
        let split = str_arg(split, "split")?;
        let inner = data::load_dataset(&root, split)?;
        *out = Box::into_raw(Box::new(DascnDataset { inner }));
        Ok(())
    })
}

/// Build the Gaussian-cluster dataset. `seed` drives both the class layout
/// and the sample noise.
///
/// # Safety
/// `out` must be a valid pointer; on success it receives a handle to free
/// with [`dascn_dataset_free`].
#[no_mangle]
pub unsafe extern "C" fn dascn_dataset_synthetic(
    n_seen_classes: usize,
    n_unseen_classes: usize,
    feature_dim: usize,
    attribute_dim: usize,
    samples_per_class: usize,
    cluster_std: f64,
    seed: u64,
    out: *mut *mut DascnDataset,
) -> DascnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let spec = SyntheticSpec {
            n_seen_classes,
            n_unseen_classes,
            feature_dim,
            attribute_dim,
            samples_per_class,
            cluster_std,
            projection_seed: seed,
            noise_seed: seed.wrapping_add(100),
        };
        let inner = data::make_synthetic_dataset(&spec)?;
        *out = Box::into_raw(Box::new(DascnDataset { inner }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dascn_dataset_free(dataset: *mut DascnDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// # Safety
/// `dataset` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dascn_dataset_dims(dataset: *const DascnDataset, out: *mut DascnDims) -> DascnStatus {
    guard(|| {
        let b = &handle(dataset, "dataset")?.inner;
        *out_arg(out, "out")? = DascnDims {
            feature_dim: b.feature_dim(),
            attribute_dim: b.attribute_dim(),
            n_seen_classes: b.seen_classes.len(),
            n_unseen_classes: b.unseen_classes.len(),
            n_train: b.labels_train.len(),
            n_test_seen: b.labels_test_seen.len(),
            n_test_unseen: b.labels_test_unseen.len(),
        };
        Ok(())
    })
}

/// Train a model. `config_json` is a JSON training config; missing fields
/// take their defaults and NULL means all defaults.
///
/// # Safety
/// `dataset` must be a live handle, `config_json` NULL or a NUL-terminated
/// string, and `out` a valid pointer. On success `*out` receives a handle to
/// free with [`dascn_model_free`].
#[no_mangle]
pub unsafe extern "C" fn dascn_train(
    dataset: *const DascnDataset,
    config_json: *const c_char,
    out: *mut *mut DascnModel,
) -> DascnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let bundle = &handle(dataset, "dataset")?.inner;
        let config: TrainConfig = json_arg(config_json, "config_json")?;
        let (params, _log) = trainer::train(bundle, &config)?;
        *out = Box::into_raw(Box::new(DascnModel { params, config }));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dascn_model_save(model: *const DascnModel, path: *const c_char) -> DascnStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        checkpoint::save_checkpoint(&path, &model.params, &model.config)?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer. On
/// success `*out` receives a handle to free with [`dascn_model_free`].
#[no_mangle]
pub unsafe extern "C" fn dascn_model_load(path: *const c_char, out: *mut *mut DascnModel) -> DascnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        let ckpt = checkpoint::load_checkpoint(&path)?;
        *out = Box::into_raw(Box::new(DascnModel {
            params: ckpt.params,
            config: ckpt.config,
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dascn_model_free(model: *mut DascnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Synthesize features for every class, fit the final classifier and score
/// the unseen and seen test splits. `eval_json` follows the evaluation
/// config schema; NULL means defaults.
///
/// # Safety
/// `model` and `dataset` must be live handles, `eval_json` NULL or a
/// NUL-terminated string, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dascn_evaluate(
    model: *const DascnModel,
    dataset: *const DascnDataset,
    eval_json: *const c_char,
    out: *mut DascnScores,
) -> DascnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let model = handle(model, "model")?;
        let bundle = &handle(dataset, "dataset")?.inner;
        let eval: EvalConfig = json_arg(eval_json, "eval_json")?;
        let report = evaluation::evaluate_gzsl(&model.params, bundle, &eval)?;
        *out = DascnScores {
            ts: report.ts,
            tr: report.tr,
            h: report.h,
        };
        Ok(())
    })
}

/// `2·ts·tr / (ts + tr)`, zero when both are zero.
#[no_mangle]
pub extern "C" fn dascn_harmonic_mean(ts: f64, tr: f64) -> f64 {
    evaluation::harmonic_mean(ts, tr)
}

/// Write `n` synthesized rows for `class_id`, row-major, into `buf`.
/// `buf_len` counts doubles and must be at least `n * feature_dim`.
///
/// # Safety
/// `model` and `dataset` must be live handles and `buf` must point to
/// `buf_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dascn_synthesize(
    model: *const DascnModel,
    dataset: *const DascnDataset,
    class_id: usize,
    n: usize,
    seed: u64,
    buf: *mut f64,
    buf_len: usize,
) -> DascnStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let bundle = &handle(dataset, "dataset")?.inner;
        if buf.is_null() {
            return Err(Failure::null("buf"));
        }
        if class_id >= bundle.class_count() {
            return Err(Failure::new(
                DascnStatus::InvalidArgument,
                format!("class_id {class_id} out of range 0..{}", bundle.class_count()),
            ));
        }
        let need = n.checked_mul(model.params.arch.feature_dim).ok_or_else(|| {
            Failure::new(DascnStatus::InvalidArgument, "n * feature_dim overflows")
        })?;
        if buf_len < need {
            return Err(Failure::new(
                DascnStatus::BufferTooSmall,
                format!("buffer holds {buf_len} doubles, need {need}"),
            ));
        }
        let request = SynthesisRequest {
            classes: vec![class_id],
            n_per_class: n,
            seed,
        };
        let (rows, _labels) = synthesis::synthesize_features(&model.params, bundle, &request)?;
        let dst = std::slice::from_raw_parts_mut(buf, need);
        for (d, v) in dst.iter_mut().zip(rows.iter()) {
            *d = *v;
        }
        Ok(())
    })
}
