//! C ABI over the `hetsim` engine.
//!
//! Every function returns an [`HsStatus`]. On failure a description is kept
//! per thread and can be read with [`hs_last_error_message`]. Strings handed
//! out by the library must be released with [`hs_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hetsim::engine::EngineError;
use hetsim::model::SimulationConfig;
use hetsim::scheduler::SchedulerError;
use hetsim::workload;
use hetsim::{EventClass, PolicyRegistry, Simulation, StopCondition};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    ParseError = 4,
    ValidationFailed = 5,
    /// No events left; returned by `hs_simulation_step`.
    Finished = 6,
    UnsupportedFormat = 7,
    Internal = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsEventKind {
    Completion = 0,
    DeadlineDrop = 1,
    Arrival = 2,
    SchedulerInvoke = 3,
}

impl From<EventClass> for HsEventKind {
    fn from(c: EventClass) -> Self {
        match c {
            EventClass::Completion => HsEventKind::Completion,
            EventClass::DeadlineDrop => HsEventKind::DeadlineDrop,
            EventClass::Arrival => HsEventKind::Arrival,
            EventClass::SchedulerInvoke => HsEventKind::SchedulerInvoke,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HsCounters {
    pub arrived: u64,
    pub completed: u64,
    pub missed: u64,
    pub cancelled: u64,
    pub in_system: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsStepInfo {
    pub event_no: u64,
    pub time: f64,
    pub kind: HsEventKind,
}

/// Opaque simulation handle.
pub struct HsSimulation {
    sim: Simulation,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: HsStatus, msg: impl Into<String>) -> HsStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> HsStatus) -> HsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(HsStatus::Panic, "panic inside hetsim"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, HsStatus> {
    if p.is_null() {
        return Err(fail(HsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(HsStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn engine_status(e: EngineError) -> HsStatus {
    let status = match &e {
        EngineError::ValidationFailed(_) => HsStatus::ValidationFailed,
        EngineError::Scheduler(SchedulerError::UnknownPolicy(_) | SchedulerError::MissingQueueSize(_)) => {
            HsStatus::InvalidConfig
        }
        _ => HsStatus::Internal,
    };
    let msg = match &e {
        EngineError::ValidationFailed(issues) => {
            let list: Vec<String> = issues.iter().map(|i| i.to_string()).collect();
            format!("validation failed: {}", list.join("; "))
        }
        other => other.to_string(),
    };
    fail(status, msg)
}

fn sim_mut<'a>(p: *mut HsSimulation) -> Result<&'a mut Simulation, HsStatus> {
    // SAFETY: caller passes a handle from hs_simulation_new that is not yet freed.
    unsafe { p.as_mut() }
        .map(|h| &mut h.sim)
        .ok_or_else(|| fail(HsStatus::NullPointer, "simulation handle is null"))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next hetsim call on the same thread.
#[no_mangle]
pub extern "C" fn hs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds a simulation from a JSON configuration and the two CSV inputs.
///
/// # Safety
/// All string arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_simulation_new(
    config_json: *const c_char,
    eet_csv: *const c_char,
    trace_csv: *const c_char,
    out: *mut *mut HsSimulation,
) -> HsStatus {
    guard(|| {
        if out.is_null() {
            return fail(HsStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let config = tri!(text(config_json, "config_json"));
        let eet = tri!(text(eet_csv, "eet_csv"));
        let trace = tri!(text(trace_csv, "trace_csv"));
        let config: SimulationConfig = match serde_json::from_str(config) {
            Ok(c) => c,
            Err(e) => return fail(HsStatus::InvalidConfig, format!("config: {e}")),
        };
        let eet = match workload::parse_eet_csv(eet.as_bytes()) {
            Ok(m) => m,
            Err(e) => return fail(HsStatus::ParseError, format!("eet: {e}")),
        };
        let trace = match workload::parse_trace_csv(trace.as_bytes()) {
            Ok(t) => t,
            Err(e) => return fail(HsStatus::ParseError, format!("trace: {e}")),
        };
        match Simulation::new(config, eet, trace, &PolicyRegistry::default()) {
            Ok(sim) => {
                *out = Box::into_raw(Box::new(HsSimulation { sim }));
                HsStatus::Ok
            }
            Err(e) => engine_status(e),
        }
    })
}

/// Processes one event. Returns `HS_STATUS_FINISHED` when none are left.
/// `info` may be NULL.
///
/// # Safety
/// `sim` must be a live handle; `info` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn hs_simulation_step(sim: *mut HsSimulation, info: *mut HsStepInfo) -> HsStatus {
    guard(|| {
        let sim = tri!(sim_mut(sim));
        if sim.is_finished() {
            return HsStatus::Finished;
        }
        match sim.step() {
            Ok(o) => {
                if !info.is_null() {
                    *info = HsStepInfo { event_no: o.event_no, time: o.time, kind: o.class.into() };
                }
                HsStatus::Ok
            }
            Err(e) => engine_status(e),
        }
    })
}

/// Runs to the stop condition in the configuration.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_simulation_run(sim: *mut HsSimulation) -> HsStatus {
    guard(|| {
        let sim = tri!(sim_mut(sim));
        sim.run_configured().map_or_else(engine_status, |_| HsStatus::Ok)
    })
}

/// Processes every event with time <= `horizon`.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_simulation_run_until(sim: *mut HsSimulation, horizon: f64) -> HsStatus {
    guard(|| {
        let sim = tri!(sim_mut(sim));
        if horizon.is_nan() {
            return fail(HsStatus::InvalidConfig, "horizon is NaN");
        }
        sim.run(StopCondition::Horizon(horizon)).map_or_else(engine_status, |_| HsStatus::Ok)
    })
}

/// Returns to the state right after construction.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_simulation_reset(sim: *mut HsSimulation) -> HsStatus {
    guard(|| {
        let sim = tri!(sim_mut(sim));
        sim.reset().map_or_else(engine_status, |_| HsStatus::Ok)
    })
}

/// # Safety
/// `sim` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_simulation_now(sim: *mut HsSimulation, out: *mut f64) -> HsStatus {
    guard(|| {
        let sim = tri!(sim_mut(sim));
        if out.is_null() {
            return fail(HsStatus::NullPointer, "out is null");
        }
        *out = sim.now();
        HsStatus::Ok
    })
}

/// # Safety
/// `sim` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_simulation_counters(sim: *mut HsSimulation, out: *mut HsCounters) -> HsStatus {
    guard(|| {
        let sim = tri!(sim_mut(sim));
        if out.is_null() {
            return fail(HsStatus::NullPointer, "out is null");
        }
        let c = sim.counters();
        *out = HsCounters {
            arrived: c.arrived as u64,
            completed: c.completed as u64,
            missed: c.missed as u64,
            cancelled: c.cancelled as u64,
            in_system: sim.in_system() as u64,
        };
        HsStatus::Ok
    })
}

/// Report for the state reached so far, as `"json"` or `"csv"`. The string
/// written to `out` must be freed with `hs_string_free`.
///
/// # Safety
/// `sim` must be a live handle; `format` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_simulation_report(
    sim: *mut HsSimulation,
    format: *const c_char,
    out: *mut *mut c_char,
) -> HsStatus {
    guard(|| {
        let sim = tri!(sim_mut(sim));
        let format = tri!(text(format, "format"));
        if out.is_null() {
            return fail(HsStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let bytes = match hetsim::metrics::export_as(&sim.report(), format) {
            Ok(b) => b,
            Err(e) => return fail(HsStatus::UnsupportedFormat, e.to_string()),
        };
        match CString::new(bytes) {
            Ok(s) => {
                *out = s.into_raw();
                HsStatus::Ok
            }
            Err(_) => fail(HsStatus::Internal, "report contains NUL"),
        }
    })
}

/// # Safety
/// `s` must come from this library, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn hs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `sim` must come from `hs_simulation_new`, or be NULL. It must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn hs_simulation_free(sim: *mut HsSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}
