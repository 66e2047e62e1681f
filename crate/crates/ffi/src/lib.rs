//! C ABI over the table, model, and signal-feature entry points.
//!
//! Conventions: every fallible call returns a [`CeabenchStatus`]; `CEABENCH_
//! STATUS_OK` is zero. On failure the call stores a message retrievable with
//! [`ceabench_last_error`] until the next failure on the same thread. Objects
//! come back as opaque pointers owned by the caller and are released with the
//! matching `_free` function. No call unwinds across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ceabench::domain::FeatureTable;
use ceabench::error::Error;
use ceabench::forest::io::{load_model, save_model};
use ceabench::forest::{fit_forest, predict, ClassWeighting, ForestModel, ForestParams};
use ceabench::hrv::{compute_nn_intervals, detect_r_peaks, hrv_features, NnSeries};
use ceabench::domain::SampleSeries;
use ceabench::features::table_io::{read_table, write_table};

/// Call outcome. Nonzero values match the CLI exit codes for the same
/// failure kinds.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CeabenchStatus {
    Ok = 0,
    /// A panic was caught at the boundary; state may be stale but the
    /// process is intact.
    Internal = 1,
    MissingInput = 3,
    Schema = 4,
    Param = 5,
    InsufficientData = 6,
    Format = 7,
    Vocabulary = 8,
    Io = 9,
}

/// Owned feature table; create with `ceabench_table_read`, release with
/// `ceabench_table_free`.
pub struct CeabenchTable(FeatureTable);

/// Owned forest model; create with `ceabench_model_fit` or
/// `ceabench_model_load`, release with `ceabench_model_free`.
pub struct CeabenchModel(ForestModel);

/// Forest training controls; fill with `ceabench_forest_params_default`
/// and adjust.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct CeabenchForestParams {
    pub trees: usize,
    pub max_leaves: usize,
    pub features_per_split: usize,
    pub min_samples_leaf: usize,
    /// Nonzero reweights classes to equal total weight.
    pub balanced: u8,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn store_error(message: &str) {
    let sanitized: String = message.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = Some(CString::new(sanitized).unwrap_or_default());
    });
}

fn status_of(err: &Error) -> CeabenchStatus {
    match err {
        Error::MissingInput(_) => CeabenchStatus::MissingInput,
        Error::Schema(_) => CeabenchStatus::Schema,
        Error::Param { .. } => CeabenchStatus::Param,
        Error::InsufficientData(_) => CeabenchStatus::InsufficientData,
        Error::Format(_) => CeabenchStatus::Format,
        Error::Vocabulary(_) => CeabenchStatus::Vocabulary,
        Error::Io(_) => CeabenchStatus::Io,
    }
}

fn fail(err: Error) -> CeabenchStatus {
    store_error(&err.to_string());
    status_of(&err)
}

fn param_error(what: &str) -> CeabenchStatus {
    fail(Error::param(what, "null pointer".to_string()))
}

/// Runs `body` with panics converted to `Internal`.
fn guarded(body: impl FnOnce() -> CeabenchStatus) -> CeabenchStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic at the C boundary".to_string());
            store_error(&message);
            CeabenchStatus::Internal
        }
    }
}

/// Interprets a caller string as UTF-8 path bytes.
unsafe fn path_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a Path, CeabenchStatus> {
    if ptr.is_null() {
        return Err(param_error(what));
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => Err(fail(Error::param(what, "path is not valid UTF-8".to_string()))),
    }
}

/// Message from the most recent failure on this thread, or an empty string.
/// The pointer stays valid until the next failing ceabench call on the same
/// thread.
///
/// # Safety
/// The returned pointer must not be freed or written through.
#[no_mangle]
pub unsafe extern "C" fn ceabench_last_error() -> *const c_char {
    static EMPTY: &[u8] = b"\0";
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(message) => message.as_ptr(),
        None => EMPTY.as_ptr().cast(),
    })
}

/// Library version as a static C string.
///
/// # Safety
/// The returned pointer is static; do not free it.
#[no_mangle]
pub unsafe extern "C" fn ceabench_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Reads a feature-table CSV.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer slot.
#[no_mangle]
pub unsafe extern "C" fn ceabench_table_read(
    path: *const c_char,
    out: *mut *mut CeabenchTable,
) -> CeabenchStatus {
    guarded(|| {
        if out.is_null() {
            return param_error("out");
        }
        let path = match path_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match read_table(path) {
            Ok(table) => {
                *out = Box::into_raw(Box::new(CeabenchTable(table)));
                CeabenchStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Writes a feature table as CSV.
///
/// # Safety
/// `table` must come from this library and `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ceabench_table_write(
    table: *const CeabenchTable,
    path: *const c_char,
) -> CeabenchStatus {
    guarded(|| {
        let Some(table) = table.as_ref() else {
            return param_error("table");
        };
        let path = match path_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match write_table(&table.0, path) {
            Ok(()) => CeabenchStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Number of rows. Zero when `table` is null.
///
/// # Safety
/// `table` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ceabench_table_rows(table: *const CeabenchTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.len())
}

/// Number of feature columns. Zero when `table` is null.
///
/// # Safety
/// `table` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ceabench_table_columns(table: *const CeabenchTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.schema.len())
}

/// Releases a table. Null is a no-op.
///
/// # Safety
/// `table` must be null or an unreleased pointer from this library.
#[no_mangle]
pub unsafe extern "C" fn ceabench_table_free(table: *mut CeabenchTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Spec-default training parameters.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ceabench_forest_params_default(out: *mut CeabenchForestParams) {
    if out.is_null() {
        return;
    }
    let d = ForestParams::default();
    *out = CeabenchForestParams {
        trees: d.n_trees,
        max_leaves: d.max_leaves,
        features_per_split: d.features_per_split,
        min_samples_leaf: d.min_samples_leaf,
        balanced: matches!(d.class_weighting, ClassWeighting::Balanced) as u8,
        seed: d.seed,
    };
}

fn forest_params(p: &CeabenchForestParams) -> ForestParams {
    ForestParams {
        n_trees: p.trees,
        max_leaves: p.max_leaves,
        features_per_split: p.features_per_split,
        min_samples_leaf: p.min_samples_leaf,
        class_weighting: if p.balanced != 0 {
            ClassWeighting::Balanced
        } else {
            ClassWeighting::None
        },
        seed: p.seed,
    }
}

/// Trains a forest on a feature table.
///
/// # Safety
/// All pointers must be valid; `out` receives an owned model on success.
#[no_mangle]
pub unsafe extern "C" fn ceabench_model_fit(
    table: *const CeabenchTable,
    params: *const CeabenchForestParams,
    out: *mut *mut CeabenchModel,
) -> CeabenchStatus {
    guarded(|| {
        let Some(table) = table.as_ref() else {
            return param_error("table");
        };
        let Some(params) = params.as_ref() else {
            return param_error("params");
        };
        if out.is_null() {
            return param_error("out");
        }
        match fit_forest(&table.0, &forest_params(params)) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(CeabenchModel(model)));
                CeabenchStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Loads a model file.
///
/// # Safety
/// `path` must be NUL-terminated and `out` a valid pointer slot.
#[no_mangle]
pub unsafe extern "C" fn ceabench_model_load(
    path: *const c_char,
    out: *mut *mut CeabenchModel,
) -> CeabenchStatus {
    guarded(|| {
        if out.is_null() {
            return param_error("out");
        }
        let path = match path_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match load_model(path) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(CeabenchModel(model)));
                CeabenchStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Saves a model file.
///
/// # Safety
/// `model` must come from this library and `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ceabench_model_save(
    model: *const CeabenchModel,
    path: *const c_char,
) -> CeabenchStatus {
    guarded(|| {
        let Some(model) = model.as_ref() else {
            return param_error("model");
        };
        let path = match path_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match save_model(&model.0, path) {
            Ok(()) => CeabenchStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Number of classes the model can predict. Zero when `model` is null.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ceabench_model_classes(model: *const CeabenchModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.classes.len())
}

/// Copies the class name at `index` into `buf` (NUL-terminated, truncated
/// to `cap`). Returns the full length in bytes excluding the NUL, or 0 for
/// a bad index or null model. Call with `cap` 0 to size the buffer.
///
/// # Safety
/// `buf` must point to at least `cap` writable bytes unless `cap` is 0.
#[no_mangle]
pub unsafe extern "C" fn ceabench_model_class_name(
    model: *const CeabenchModel,
    index: usize,
    buf: *mut c_char,
    cap: usize,
) -> usize {
    let Some(model) = model.as_ref() else {
        return 0;
    };
    let Some(name) = model.0.classes.get(index) else {
        return 0;
    };
    let bytes = name.as_bytes();
    if cap > 0 && !buf.is_null() {
        let n = bytes.len().min(cap - 1);
        std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast(), n);
        *buf.add(n) = 0;
    }
    bytes.len()
}

/// Number of feature columns the model expects.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ceabench_model_features(model: *const CeabenchModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.schema.len())
}

/// Classifies one feature vector. Writes the winning class index to
/// `class_index_out`; when `probs_out` is non-null it must hold
/// `ceabench_model_classes` doubles and receives the class distribution.
/// Missing features may be NaN.
///
/// # Safety
/// `values` must point to `len` doubles; output pointers must be valid as
/// described.
#[no_mangle]
pub unsafe extern "C" fn ceabench_model_predict(
    model: *const CeabenchModel,
    values: *const f64,
    len: usize,
    class_index_out: *mut usize,
    probs_out: *mut f64,
) -> CeabenchStatus {
    guarded(|| {
        let Some(model) = model.as_ref() else {
            return param_error("model");
        };
        if values.is_null() {
            return param_error("values");
        }
        if class_index_out.is_null() {
            return param_error("class_index_out");
        }
        let row = std::slice::from_raw_parts(values, len);
        match predict(&model.0, row) {
            Ok((label, distribution)) => {
                // The label is produced from the class list, so lookup
                // cannot fail.
                let index = model.0.classes.iter().position(|c| c == &label).unwrap();
                *class_index_out = index;
                if !probs_out.is_null() {
                    std::ptr::copy_nonoverlapping(
                        distribution.as_ptr(),
                        probs_out,
                        distribution.len(),
                    );
                }
                CeabenchStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a model. Null is a no-op.
///
/// # Safety
/// `model` must be null or an unreleased pointer from this library.
#[no_mangle]
pub unsafe extern "C" fn ceabench_model_free(model: *mut CeabenchModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// The 12 NN-interval statistics in schema order: ibi_mean, bpm, sdnn,
/// sdsd, rmssd, pnn50, pnn20, hr_mad, sd1, sd2, s, sd1_sd2. Intervals are
/// milliseconds. `degenerate_out` (nullable) is set nonzero when sd2 = 0
/// forced the sd1/sd2 ratio to 0.
///
/// # Safety
/// `nn_ms` must point to `len` doubles and `out` to 12 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ceabench_hrv_features(
    nn_ms: *const f64,
    len: usize,
    out: *mut f64,
    degenerate_out: *mut u8,
) -> CeabenchStatus {
    guarded(|| {
        if nn_ms.is_null() {
            return param_error("nn_ms");
        }
        if out.is_null() {
            return param_error("out");
        }
        let values = std::slice::from_raw_parts(nn_ms, len).to_vec();
        let mut onsets = Vec::with_capacity(values.len());
        let mut t = 0.0;
        for v in &values {
            onsets.push(t);
            t += v / 1000.0;
        }
        match hrv_features(&NnSeries { values_ms: values, onsets_s: onsets }) {
            Ok(f) => {
                let flat = [
                    f.ibi_mean, f.bpm, f.sdnn, f.sdsd, f.rmssd, f.pnn50, f.pnn20, f.hr_mad,
                    f.sd1, f.sd2, f.s, f.sd1_sd2,
                ];
                std::ptr::copy_nonoverlapping(flat.as_ptr(), out, flat.len());
                if !degenerate_out.is_null() {
                    *degenerate_out = f.degenerate_sd_ratio as u8;
                }
                CeabenchStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Detects R peaks in an ECG trace sampled at `rate_hz` starting at
/// `start_s`. On success `peaks_out` receives an owned array of peak times
/// in seconds and `n_out` its length; release it with
/// `ceabench_doubles_free`.
///
/// # Safety
/// `samples` must point to `len` doubles; `peaks_out` and `n_out` must be
/// valid pointer slots.
#[no_mangle]
pub unsafe extern "C" fn ceabench_detect_r_peaks(
    samples: *const f64,
    len: usize,
    rate_hz: f64,
    start_s: f64,
    peaks_out: *mut *mut f64,
    n_out: *mut usize,
) -> CeabenchStatus {
    guarded(|| {
        if samples.is_null() {
            return param_error("samples");
        }
        if peaks_out.is_null() || n_out.is_null() {
            return param_error("peaks_out");
        }
        let series =
            SampleSeries::new(rate_hz, start_s, std::slice::from_raw_parts(samples, len).to_vec());
        match detect_r_peaks(&series) {
            Ok(peaks) => {
                let boxed: Box<[f64]> = peaks.into_boxed_slice();
                *n_out = boxed.len();
                *peaks_out = Box::into_raw(boxed).cast();
                CeabenchStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// NN intervals (milliseconds) from peak times (seconds), mirroring the
/// artifact-rejection rules of the feature extractor. Ownership as in
/// `ceabench_detect_r_peaks`.
///
/// # Safety
/// `peaks_s` must point to `len` doubles; outputs must be valid slots.
#[no_mangle]
pub unsafe extern "C" fn ceabench_nn_intervals(
    peaks_s: *const f64,
    len: usize,
    nn_ms_out: *mut *mut f64,
    n_out: *mut usize,
) -> CeabenchStatus {
    guarded(|| {
        if peaks_s.is_null() {
            return param_error("peaks_s");
        }
        if nn_ms_out.is_null() || n_out.is_null() {
            return param_error("nn_ms_out");
        }
        let peaks = std::slice::from_raw_parts(peaks_s, len);
        match compute_nn_intervals(peaks) {
            Ok(nn) => {
                let boxed: Box<[f64]> = nn.values_ms.into_boxed_slice();
                *n_out = boxed.len();
                *nn_ms_out = Box::into_raw(boxed).cast();
                CeabenchStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases an array returned by this library. Null is a no-op.
///
/// # Safety
/// `ptr`/`len` must be exactly as returned by a ceabench call.
#[no_mangle]
pub unsafe extern "C" fn ceabench_doubles_free(ptr: *mut f64, len: usize) {
    if !ptr.is_null() {
        drop(Box::from_raw(std::ptr::slice_from_raw_parts_mut(ptr, len)));
    }
}
