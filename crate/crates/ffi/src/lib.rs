//! C interface to `modfilter`: load a scenario, run it and read back the
//! time series and the JSON report.
//!
//! Every fallible call returns an [`MfStatus`]; on failure the message is
//! available from [`mf_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use modfilter::scenario::{self, RunResult, RunStatus, Scenario, ScenarioOverrides};
use modfilter::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MfStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Scenario file or output could not be read or written.
    Io = 3,
    /// Malformed or invalid scenario document.
    Parse = 4,
    /// Invalid parameter or model.
    Invalid = 5,
    /// The integrator became unstable.
    Numerical = 6,
    /// Index out of range or value not available for this result.
    OutOfRange = 7,
    /// Internal panic; the handle arguments should be considered unusable.
    Panic = 8,
}

/// Parsed and validated scenario.
pub struct MfScenario(Scenario);

/// Tables and report of one run.
pub struct MfRunResult(RunResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> MfStatus {
    match e {
        Error::Io(_) => MfStatus::Io,
        Error::Scenario { .. } | Error::Json(_) => MfStatus::Parse,
        Error::IntegratorInstability { .. } => MfStatus::Numerical,
        _ => MfStatus::Invalid,
    }
}

fn fail(status: MfStatus, msg: impl Into<String>) -> MfStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> MfStatus) -> MfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(MfStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, MfStatus> {
    if p.is_null() {
        return Err(fail(MfStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(MfStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

fn store<T>(out: *mut *mut T, value: T) {
    // SAFETY: callers check `out` for null before computing `value`.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

macro_rules! check_out {
    ($out:expr) => {
        if $out.is_null() {
            return fail(MfStatus::NullPointer, "output pointer is null");
        }
        // SAFETY: non-null, caller provides a writable slot.
        unsafe { *$out = ptr::null_mut() };
    };
}

macro_rules! handle {
    ($h:expr) => {
        match unsafe { $h.as_ref() } {
            Some(h) => h,
            None => return fail(MfStatus::NullPointer, "handle is null"),
        }
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Load and validate a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mf_scenario_load(path: *const c_char, out: *mut *mut MfScenario) -> MfStatus {
    guard(|| {
        check_out!(out);
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match scenario::load_scenario(Path::new(path)) {
            Ok(s) => {
                store(out, MfScenario(s));
                MfStatus::Ok
            }
            Err(e) => fail(status_of(&e), format!("{path}: {e}")),
        }
    })
}

/// Parse and validate a scenario document. Relative pulse paths resolve
/// against `base_dir`, or the working directory when it is null.
///
/// # Safety
/// `json` and a non-null `base_dir` must be NUL-terminated strings; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_scenario_parse(
    json: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut MfScenario,
) -> MfStatus {
    guard(|| {
        check_out!(out);
        let json = match str_arg(json, "json") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let base = if base_dir.is_null() {
            "."
        } else {
            match str_arg(base_dir, "base_dir") {
                Ok(p) => p,
                Err(s) => return s,
            }
        };
        match scenario::parse_scenario_in(json, Path::new(base)) {
            Ok(s) => {
                store(out, MfScenario(s));
                MfStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Override the time step, end time and replication tolerance in place.
/// Pass NaN to keep a value. The scenario is re-validated; on failure it
/// is left unchanged.
///
/// # Safety
/// `scenario` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn mf_scenario_override(
    scenario: *mut MfScenario,
    dt: f64,
    t_end: f64,
    tolerance: f64,
) -> MfStatus {
    guard(|| {
        let Some(s) = scenario.as_mut() else {
            return fail(MfStatus::NullPointer, "handle is null");
        };
        let keep = |x: f64| (!x.is_nan()).then_some(x);
        let o = ScenarioOverrides { dt: keep(dt), t_end: keep(t_end), tolerance: keep(tolerance) };
        match s.0.with_overrides(&o) {
            Ok(next) => {
                s.0 = next;
                MfStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Scenario document as JSON; free with [`mf_string_free`]. Null on a null handle.
///
/// # Safety
/// `scenario` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_scenario_to_json(scenario: *const MfScenario) -> *mut c_char {
    scenario.as_ref().map_or(ptr::null_mut(), |s| into_c_string(s.0.to_json()))
}

/// # Safety
/// `scenario` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mf_scenario_free(scenario: *mut MfScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Run a scenario. A run that completes returns `Ok` even when an invariant
/// or the replication check fails; query [`mf_result_exit_code`].
///
/// # Safety
/// `scenario` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mf_run(scenario: *const MfScenario, out: *mut *mut MfRunResult) -> MfStatus {
    guard(|| {
        check_out!(out);
        let s = handle!(scenario);
        match scenario::run(&s.0) {
            Ok(r) => {
                store(out, MfRunResult(r));
                MfStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// CLI exit code of the run: 0 pass, 3 invariant violation, 4 replication
/// failure; -1 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_result_exit_code(result: *const MfRunResult) -> i32 {
    result.as_ref().map_or(-1, |r| r.0.status().exit_code())
}

/// Number of stored time samples; 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_result_rows(result: *const MfRunResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.table.times.len())
}

/// Number of observables; 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_result_observables(result: *const MfRunResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.table.names.len())
}

/// Name of observable `k`; free with [`mf_string_free`]. Null when out of range.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_result_observable_name(result: *const MfRunResult, k: usize) -> *mut c_char {
    match result.as_ref().and_then(|r| r.0.table.names.get(k)) {
        Some(n) => into_c_string(n.clone()),
        None => ptr::null_mut(),
    }
}

/// Copy the sample times into `times[0..len]`; `len` must equal [`mf_result_rows`].
///
/// # Safety
/// `times` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mf_result_times(result: *const MfRunResult, times: *mut f64, len: usize) -> MfStatus {
    guard(|| {
        let r = handle!(result);
        if times.is_null() {
            return fail(MfStatus::NullPointer, "times buffer is null");
        }
        let src = &r.0.table.times;
        if len != src.len() {
            return fail(MfStatus::OutOfRange, format!("buffer holds {len} values, result has {}", src.len()));
        }
        std::slice::from_raw_parts_mut(times, len).copy_from_slice(src);
        MfStatus::Ok
    })
}

/// Copy observable `k` into `re[0..len]` and `im[0..len]`. With
/// `cascade` nonzero, read the cascade side of a replicate run.
///
/// # Safety
/// `re` and `im` must each point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mf_result_observable(
    result: *const MfRunResult,
    k: usize,
    cascade: bool,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> MfStatus {
    guard(|| {
        let r = handle!(result);
        if re.is_null() || im.is_null() {
            return fail(MfStatus::NullPointer, "value buffer is null");
        }
        let table = if cascade {
            match &r.0.cascade_table {
                Some(t) => t,
                None => return fail(MfStatus::OutOfRange, "no cascade table outside replicate mode"),
            }
        } else {
            &r.0.table
        };
        let Some(col) = table.values.get(k) else {
            return fail(MfStatus::OutOfRange, format!("observable {k} of {}", table.values.len()));
        };
        if len != col.len() {
            return fail(MfStatus::OutOfRange, format!("buffer holds {len} values, result has {}", col.len()));
        }
        let (re, im) = (std::slice::from_raw_parts_mut(re, len), std::slice::from_raw_parts_mut(im, len));
        for (i, v) in col.iter().enumerate() {
            re[i] = v.re;
            im[i] = v.im;
        }
        MfStatus::Ok
    })
}

/// Largest hierarchy/cascade deviation of a replicate run.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_result_max_deviation(result: *const MfRunResult, out: *mut f64) -> MfStatus {
    guard(|| {
        let r = handle!(result);
        if out.is_null() {
            return fail(MfStatus::NullPointer, "output pointer is null");
        }
        match &r.0.report.replication {
            Some(rep) => {
                *out = rep.max_deviation;
                MfStatus::Ok
            }
            None => fail(MfStatus::OutOfRange, "not a replicate run"),
        }
    })
}

/// JSON report; free with [`mf_string_free`].
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_result_report_json(result: *const MfRunResult) -> *mut c_char {
    result.as_ref().map_or(ptr::null_mut(), |r| into_c_string(r.0.report.to_json()))
}

/// CSV table (the hierarchy side in replicate mode); free with [`mf_string_free`].
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_result_csv(result: *const MfRunResult) -> *mut c_char {
    result.as_ref().map_or(ptr::null_mut(), |r| into_c_string(r.0.table.to_csv()))
}

/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mf_result_free(result: *mut MfRunResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Free a string returned by this library.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// `true` when a run passed all checks.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_result_passed(result: *const MfRunResult) -> bool {
    result.as_ref().is_some_and(|r| r.0.status() == RunStatus::Pass)
}
