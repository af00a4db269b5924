//! C ABI over the `lpv-dfsm` core: opaque model and record handles, integer
//! status codes and a per-thread last-error message.
//!
//! Every function returns an [`LpvStatus`]; results are written through out
//! pointers. Handles returned by the library must be released with the
//! matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use lpv_dfsm::controller::ControllerConfig;
use lpv_dfsm::envgen::LoadCaseSpec;
use lpv_dfsm::lpvsim::LpvModel;
use lpv_dfsm::metrics::{self, DelConfig};
use lpv_dfsm::pipeline::Candidate;
use lpv_dfsm::refplant::{environment, PlantParams};
use lpv_dfsm::timeseries::SimulationRecord;
use lpv_dfsm::Error;

/// Status code returned by every function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Diverged = 5,
    UnstableModel = 6,
    NotFound = 7,
    BufferTooSmall = 8,
    Panic = 99,
}

/// Loaded surrogate model.
pub struct LpvModelHandle {
    model: LpvModel,
}

/// Closed-loop simulation result.
pub struct LpvRecordHandle {
    record: SimulationRecord,
    wall_time: f64,
}

/// Load-case settings for a simulation.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpvLoadCase {
    /// Mean hub-height wind speed [m/s].
    pub w_bar: f64,
    pub turbulence_intensity: f64,
    /// Significant wave height [m].
    pub hs: f64,
    /// Peak wave period [s].
    pub tp: f64,
    /// [s]
    pub duration: f64,
    /// [s]
    pub dt: f64,
    pub seed: u64,
}

impl From<LpvLoadCase> for LoadCaseSpec {
    fn from(c: LpvLoadCase) -> Self {
        LoadCaseSpec {
            w_bar: c.w_bar,
            turbulence_intensity: c.turbulence_intensity,
            hs: c.hs,
            tp: c.tp,
            duration: c.duration,
            dt: c.dt,
            seed: c.seed,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LpvStatus {
    match e {
        Error::Io { .. } => LpvStatus::Io,
        Error::Json(_) | Error::Csv(_) | Error::Parse { .. } | Error::MalformedHeader { .. } => LpvStatus::Parse,
        Error::Diverged { .. } => LpvStatus::Diverged,
        Error::UnstableModel(_) => LpvStatus::UnstableModel,
        Error::MissingChannel { .. } => LpvStatus::NotFound,
        _ => LpvStatus::InvalidArgument,
    }
}

struct Failure(LpvStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LpvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LpvStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            LpvStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(LpvStatus::NullPointer, format!("null pointer: {what}"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(LpvStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lpv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lpv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default load case: 14 m/s, 10 % turbulence, 700 s at 0.01 s.
#[no_mangle]
pub extern "C" fn lpv_load_case_default() -> LpvLoadCase {
    let d = LoadCaseSpec::default();
    LpvLoadCase {
        w_bar: d.w_bar,
        turbulence_intensity: d.turbulence_intensity,
        hs: d.hs,
        tp: d.tp,
        duration: d.duration,
        dt: d.dt,
        seed: d.seed,
    }
}

fn store_model(model: LpvModel, out: &mut *mut LpvModelHandle) {
    *out = Box::into_raw(Box::new(LpvModelHandle { model }));
}

/// Loads a model JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lpv_model_load(path: *const c_char, out: *mut *mut LpvModelHandle) -> LpvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let model = LpvModel::read_json(Path::new(str_arg(path, "path")?))?;
        store_model(model, out);
        Ok(())
    })
}

/// Parses a model from a JSON string.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lpv_model_from_json(json: *const c_char, out: *mut *mut LpvModelHandle) -> LpvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let model = LpvModel::from_json(str_arg(json, "json")?)?;
        store_model(model, out);
        Ok(())
    })
}

/// Releases a model; NULL is ignored.
///
/// # Safety
/// `model` must come from a `lpv_model_*` constructor and not be used again.
#[no_mangle]
pub unsafe extern "C" fn lpv_model_free(model: *mut LpvModelHandle) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of anchor models.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lpv_model_anchor_count(model: *const LpvModelHandle, out: *mut usize) -> LpvStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        *out_arg(out, "out")? = m.model.anchors.len();
        Ok(())
    })
}

/// Largest real part of the eigenvalues of any anchor `A` matrix [1/s].
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lpv_model_stability_margin(model: *const LpvModelHandle, out: *mut f64) -> LpvStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        *out_arg(out, "out")? = m
            .model
            .anchors
            .iter()
            .map(|a| a.stability_margin())
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(())
    })
}

/// Row-major `A` matrix interpolated at scheduling wind speed `w`. `len`
/// must be at least `n_states²`; the required length is written to
/// `needed` when it is not NULL.
///
/// # Safety
/// `model` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lpv_model_state_matrix(
    model: *const LpvModelHandle,
    w: f64,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> LpvStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let a = m.model.interpolate(w).a;
        let n = a.nrows() * a.ncols();
        if let Some(needed) = needed.as_mut() {
            *needed = n;
        }
        if len < n {
            return Err(Failure(LpvStatus::BufferTooSmall, format!("need {n} values, got {len}")));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        let dst = std::slice::from_raw_parts_mut(buf, n);
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                dst[i * a.ncols() + j] = a[(i, j)];
            }
        }
        Ok(())
    })
}

unsafe fn simulate(
    model: Option<&LpvModelHandle>,
    case: *const LpvLoadCase,
    omega_pc: f64,
    zeta_pc: f64,
    out: *mut *mut LpvRecordHandle,
) -> LpvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let spec: LoadCaseSpec = (*case.as_ref().ok_or_else(|| null("case"))?).into();
        spec.validate()?;
        let plant = PlantParams::default();
        let ctrl = ControllerConfig::for_plant(&plant, [omega_pc, zeta_pc]);
        ctrl.validate()?;
        let env = environment(&spec)?;
        let candidate = match model {
            Some(m) => Candidate::Lpv(&m.model),
            None => Candidate::Truth(&plant),
        };
        let (record, wall_time) = candidate.simulate(&env, &spec, &ctrl, None)?;
        *out = Box::into_raw(Box::new(LpvRecordHandle { record, wall_time }));
        Ok(())
    })
}

/// Closed-loop surrogate simulation of one load case with controller
/// tuning `(omega_pc, zeta_pc)`.
///
/// # Safety
/// `model` must be a live handle; `case` and `out` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn lpv_simulate_surrogate(
    model: *const LpvModelHandle,
    case: *const LpvLoadCase,
    omega_pc: f64,
    zeta_pc: f64,
    out: *mut *mut LpvRecordHandle,
) -> LpvStatus {
    match model.as_ref() {
        Some(m) => simulate(Some(m), case, omega_pc, zeta_pc, out),
        None => guard(|| Err(null("model"))),
    }
}

/// Closed-loop simulation of the built-in reference plant.
///
/// # Safety
/// `case` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn lpv_simulate_truth(
    case: *const LpvLoadCase,
    omega_pc: f64,
    zeta_pc: f64,
    out: *mut *mut LpvRecordHandle,
) -> LpvStatus {
    simulate(None, case, omega_pc, zeta_pc, out)
}

/// Releases a record; NULL is ignored.
///
/// # Safety
/// `record` must come from a simulate call and not be used again.
#[no_mangle]
pub unsafe extern "C" fn lpv_record_free(record: *mut LpvRecordHandle) {
    if !record.is_null() {
        drop(Box::from_raw(record));
    }
}

/// Sample count, time step [s] and simulation wall time [s]; any out
/// pointer may be NULL.
///
/// # Safety
/// `record` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lpv_record_info(
    record: *const LpvRecordHandle,
    len: *mut usize,
    dt: *mut f64,
    wall_time: *mut f64,
) -> LpvStatus {
    guard(|| {
        let r = record.as_ref().ok_or_else(|| null("record"))?;
        if let Some(p) = len.as_mut() {
            *p = r.record.len();
        }
        if let Some(p) = dt.as_mut() {
            *p = r.record.dt();
        }
        if let Some(p) = wall_time.as_mut() {
            *p = r.wall_time;
        }
        Ok(())
    })
}

/// Copies channel `name` (e.g. "beta", "omega_g", "M_ty") into `buf`.
///
/// # Safety
/// `record` must be a live handle, `name` NUL-terminated and `buf` able to
/// hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lpv_record_channel(
    record: *const LpvRecordHandle,
    name: *const c_char,
    buf: *mut f64,
    len: usize,
) -> LpvStatus {
    guard(|| {
        let r = record.as_ref().ok_or_else(|| null("record"))?;
        let name = str_arg(name, "name")?;
        let values = r
            .record
            .find(name)
            .ok_or_else(|| Failure(LpvStatus::NotFound, format!("no channel `{name}`")))?;
        if len < values.len() {
            return Err(Failure(
                LpvStatus::BufferTooSmall,
                format!("need {} values, got {len}", values.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        std::slice::from_raw_parts_mut(buf, values.len()).copy_from_slice(values);
        Ok(())
    })
}

/// Damage-equivalent load of a signal of `duration` seconds with Wöhler
/// exponent `wohler_m`, referenced to `duration` cycles.
///
/// # Safety
/// `signal` must hold `n` doubles and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lpv_damage_equivalent_load(
    signal: *const f64,
    n: usize,
    duration: f64,
    wohler_m: f64,
    out: *mut f64,
) -> LpvStatus {
    guard(|| {
        if signal.is_null() {
            return Err(null("signal"));
        }
        let s = std::slice::from_raw_parts(signal, n);
        let cfg = DelConfig {
            wohler_m,
            n_ref: None,
        };
        *out_arg(out, "out")? = metrics::del(s, duration, &cfg)?;
        Ok(())
    })
}
