//! C ABI over `watermark-core`.
//!
//! Objects are opaque heap handles created by `wm_*_new` style functions and
//! released with the matching `wm_*_free`. Every fallible call returns a
//! [`WmStatus`]; on failure `wm_last_error` describes the most recent error
//! on the calling thread. Matrices are passed as row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use watermark_core::design::{Budget, LqgWeights, WatermarkDesign};
use watermark_core::harness::generate_random_system;
use watermark_core::learner::{LearnerCheckpoint, LearnerConfig, OnlineLearner};
use watermark_core::linalg::{Mat, Vector};
use watermark_core::model::PlantModel;
use watermark_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Unstable = 4,
    Numerical = 5,
    Io = 6,
    Parse = 7,
    Panic = 8,
}

pub struct WmModel(PlantModel);

pub struct WmDesign(WatermarkDesign);

pub struct WmLearner(OnlineLearner);

/// Scalar outputs of an offline design.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct WmDesignInfo {
    pub delta: f64,
    pub j0: f64,
    pub lambda_max: f64,
    pub expected_kl: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

fn status_of(err: &Error) -> WmStatus {
    match err {
        Error::DimensionMismatch { .. } => WmStatus::DimensionMismatch,
        Error::UnstableSystem { .. } | Error::UnstableClosedLoop { .. } => WmStatus::Unstable,
        Error::NoConvergence { .. }
        | Error::NotSymmetric { .. }
        | Error::NotPositiveSemidefinite { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::NotObservable { .. }
        | Error::NotControllable { .. }
        | Error::DegenerateNoiseCovariance
        | Error::Singular { .. }
        | Error::RetriesExhausted { .. } => WmStatus::Numerical,
        Error::InvalidParameter(_) | Error::InvalidSchedule(_) => WmStatus::InvalidArgument,
        Error::Parse { .. } | Error::CheckpointVersion { .. } | Error::Json(_) | Error::Csv(_) => WmStatus::Parse,
        Error::Io(_) => WmStatus::Io,
    }
}

/// Runs `body`, converting errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), WmStatus>) -> WmStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => WmStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic".into());
            WmStatus::Panic
        }
    }
}

fn fail(err: Error) -> WmStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn null(what: &str) -> WmStatus {
    set_error(format!("{what} is null"));
    WmStatus::NullPointer
}

unsafe fn matrix(data: *const f64, rows: usize, cols: usize, what: &str) -> Result<Mat, WmStatus> {
    if rows * cols == 0 {
        return Ok(Mat::zeros(rows, cols));
    }
    if data.is_null() {
        return Err(null(what));
    }
    // SAFETY: the caller guarantees `rows * cols` readable doubles.
    let values = unsafe { slice::from_raw_parts(data, rows * cols) };
    Ok(Mat::from_row_slice(rows, cols, values))
}

unsafe fn vector(data: *const f64, len: usize, what: &str) -> Result<Vector, WmStatus> {
    Ok(unsafe { matrix(data, len, 1, what) }?.column(0).into_owned())
}

unsafe fn write_matrix(m: &Mat, out: *mut f64, len: usize) -> Result<(), WmStatus> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if len != m.len() {
        set_error(format!("output buffer holds {len} values, need {}", m.len()));
        return Err(WmStatus::DimensionMismatch);
    }
    // SAFETY: the caller guarantees `len` writable doubles.
    let dst = unsafe { slice::from_raw_parts_mut(out, len) };
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            dst[i * m.ncols() + j] = m[(i, j)];
        }
    }
    Ok(())
}

unsafe fn c_str<'a>(text: *const c_char, what: &str) -> Result<&'a str, WmStatus> {
    if text.is_null() {
        return Err(null(what));
    }
    // SAFETY: the caller passes a NUL-terminated string.
    unsafe { CStr::from_ptr(text) }.to_str().map_err(|e| {
        set_error(format!("{what} is not UTF-8: {e}"));
        WmStatus::InvalidArgument
    })
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), WmStatus> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    // SAFETY: `out` is a valid pointer to a handle slot.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

unsafe fn handle<'a, T>(h: *const T, what: &str) -> Result<&'a T, WmStatus> {
    // SAFETY: non-null handles come from this library.
    unsafe { h.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(h: *mut T, what: &str) -> Result<&'a mut T, WmStatus> {
    // SAFETY: non-null handles come from this library.
    unsafe { h.as_mut() }.ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn wm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds a plant from row-major `A` (n x n), `B` (n x p), `C` (m x n),
/// `Q` (n x n) and `R` (m x m).
///
/// # Safety
/// Each pointer must reference the stated number of doubles; `out` must be
/// a valid handle slot.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn wm_model_new(
    n: usize,
    m: usize,
    p: usize,
    a: *const f64,
    b: *const f64,
    c: *const f64,
    q: *const f64,
    r: *const f64,
    out: *mut *mut WmModel,
) -> WmStatus {
    guard(|| unsafe {
        let model = PlantModel::new(
            matrix(a, n, n, "A")?,
            matrix(b, n, p, "B")?,
            matrix(c, m, n, "C")?,
            matrix(q, n, n, "Q")?,
            matrix(r, m, m, "R")?,
        )
        .map_err(fail)?;
        store(out, WmModel(model))
    })
}

/// Parses a plant from its JSON description.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn wm_model_from_json(json: *const c_char, out: *mut *mut WmModel) -> WmStatus {
    guard(|| unsafe {
        let text = c_str(json, "json")?;
        let model = PlantModel::from_json(text).map_err(fail)?;
        store(out, WmModel(model))
    })
}

/// Random stable plant with spectral radius `rho` and unit noise.
///
/// # Safety
/// `out` must be a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn wm_model_random(
    seed: u64,
    n: usize,
    m: usize,
    p: usize,
    rho: f64,
    out: *mut *mut WmModel,
) -> WmStatus {
    guard(|| unsafe {
        let model = generate_random_system(seed, n, m, p, rho).map_err(fail)?;
        store(out, WmModel(model))
    })
}

/// # Safety
/// `model` must be a handle from this library or NULL; the out pointers
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn wm_model_dims(model: *const WmModel, n: *mut usize, m: *mut usize, p: *mut usize) -> WmStatus {
    guard(|| unsafe {
        let model = &handle(model, "model")?.0;
        if n.is_null() || m.is_null() || p.is_null() {
            return Err(null("dimension output"));
        }
        *n = model.n();
        *m = model.m();
        *p = model.p();
        Ok(())
    })
}

/// # Safety
/// `model` must be a handle from this library or NULL.
#[no_mangle]
pub unsafe extern "C" fn wm_model_free(model: *mut WmModel) {
    if !model.is_null() {
        // SAFETY: handle created by `Box::into_raw` in this library.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Offline optimal design with identity LQG weights. `budget` is absolute,
/// or a fraction of the watermark-free cost when `budget_is_fraction` is
/// non-zero.
///
/// # Safety
/// `model` must be a handle from this library; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn wm_design_new(
    model: *const WmModel,
    budget: f64,
    budget_is_fraction: i32,
    out: *mut *mut WmDesign,
) -> WmStatus {
    guard(|| unsafe {
        let model = &handle(model, "model")?.0;
        let budget = if budget_is_fraction != 0 {
            Budget::FractionOfJ0(budget)
        } else {
            Budget::Absolute(budget)
        };
        let weights = LqgWeights::identity(model.m(), model.p());
        let design = WatermarkDesign::new(model, &weights, budget).map_err(fail)?;
        store(out, WmDesign(design))
    })
}

/// # Safety
/// `design` must be a handle from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wm_design_info(design: *const WmDesign, out: *mut WmDesignInfo) -> WmStatus {
    guard(|| unsafe {
        let d = &handle(design, "design")?.0;
        let out = out.as_mut().ok_or_else(|| null("info output"))?;
        *out = WmDesignInfo {
            delta: d.delta,
            j0: d.j0,
            lambda_max: d.lambda_max,
            expected_kl: d.expected_kl().map_err(fail)?,
        };
        Ok(())
    })
}

/// Copies the optimal watermark covariance (p x p, row-major) into `out`.
///
/// # Safety
/// `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn wm_design_u_star(design: *const WmDesign, out: *mut f64, len: usize) -> WmStatus {
    guard(|| unsafe { write_matrix(&handle(design, "design")?.0.u_star, out, len) })
}

/// # Safety
/// `design` must be a handle from this library or NULL.
#[no_mangle]
pub unsafe extern "C" fn wm_design_free(design: *mut WmDesign) {
    if !design.is_null() {
        // SAFETY: handle created by `Box::into_raw` in this library.
        drop(unsafe { Box::from_raw(design) });
    }
}

/// Online learner for an `m`-output, `p`-input plant with identity LQG
/// weights.
///
/// # Safety
/// `out` must be a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn wm_learner_new(
    m: usize,
    p: usize,
    nbar: usize,
    beta: f64,
    delta: f64,
    fit_every: usize,
    out: *mut *mut WmLearner,
) -> WmStatus {
    guard(|| unsafe {
        if m == 0 || p == 0 {
            set_error("dimensions must be positive".into());
            return Err(WmStatus::InvalidArgument);
        }
        let config = LearnerConfig {
            nbar,
            beta,
            delta,
            fit_every,
        };
        let learner = OnlineLearner::new(config, LqgWeights::identity(m, p)).map_err(fail)?;
        store(out, WmLearner(learner))
    })
}

/// Draws this step's watermark from the standard normal vector `zeta`
/// (length p) and writes it to `phi` (length p).
///
/// # Safety
/// `zeta` and `phi` must hold `p` doubles.
#[no_mangle]
pub unsafe extern "C" fn wm_learner_next_watermark(
    learner: *mut WmLearner,
    zeta: *const f64,
    phi: *mut f64,
    p: usize,
) -> WmStatus {
    guard(|| unsafe {
        let learner = &mut handle_mut(learner, "learner")?.0;
        let zeta = vector(zeta, p, "zeta")?;
        let out = learner.watermark_from_noise(&zeta).map_err(fail)?;
        write_matrix(&Mat::from_column_slice(p, 1, out.as_slice()), phi, p)
    })
}

/// Feeds the measurement `y` (length m) for the current watermark. Writes
/// the estimated detection statistic and whether a Schur-stable fit is in
/// use; either output pointer may be NULL.
///
/// # Safety
/// `y` must hold `m` doubles.
#[no_mangle]
pub unsafe extern "C" fn wm_learner_observe(
    learner: *mut WmLearner,
    y: *const f64,
    m: usize,
    g_hat: *mut f64,
    gate: *mut i32,
) -> WmStatus {
    guard(|| unsafe {
        let learner = &mut handle_mut(learner, "learner")?.0;
        let y = vector(y, m, "y")?;
        let step = learner.observe(&y).map_err(fail)?;
        if let Some(g) = g_hat.as_mut() {
            *g = step.g_hat;
        }
        if let Some(flag) = gate.as_mut() {
            *flag = i32::from(step.gate);
        }
        Ok(())
    })
}

/// Copies the current optimal covariance estimate (p x p) into `out`.
///
/// # Safety
/// `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn wm_learner_u_star(learner: *const WmLearner, out: *mut f64, len: usize) -> WmStatus {
    guard(|| unsafe { write_matrix(handle(learner, "learner")?.0.u_star(), out, len) })
}

/// Serializes the learner. Release the string with `wm_string_free`.
///
/// # Safety
/// `out` must be a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn wm_learner_checkpoint(learner: *const WmLearner, out: *mut *mut c_char) -> WmStatus {
    guard(|| unsafe {
        let learner = &handle(learner, "learner")?.0;
        if out.is_null() {
            return Err(null("output string"));
        }
        let json = learner.to_checkpoint().to_json().map_err(fail)?;
        *out = CString::new(json).map_err(|_| WmStatus::Numerical)?.into_raw();
        Ok(())
    })
}

/// Restores a learner from `wm_learner_checkpoint` output.
///
/// # Safety
/// `json` must be NUL-terminated; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn wm_learner_restore(json: *const c_char, out: *mut *mut WmLearner) -> WmStatus {
    guard(|| unsafe {
        let text = c_str(json, "json")?;
        let cp = LearnerCheckpoint::from_json(text).map_err(fail)?;
        let learner = OnlineLearner::from_checkpoint(&cp).map_err(fail)?;
        store(out, WmLearner(learner))
    })
}

/// # Safety
/// `learner` must be a handle from this library or NULL.
#[no_mangle]
pub unsafe extern "C" fn wm_learner_free(learner: *mut WmLearner) {
    if !learner.is_null() {
        // SAFETY: handle created by `Box::into_raw` in this library.
        drop(unsafe { Box::from_raw(learner) });
    }
}

/// # Safety
/// `s` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn wm_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: string created by `CString::into_raw` in this library.
        drop(unsafe { CString::from_raw(s) });
    }
}
