//! C ABI over `sixsim`.
//!
//! Configurations and reports are opaque handles owned by the caller and
//! released with the matching `_free` function. Every fallible call returns a
//! [`SixsimStatus`]; on failure [`sixsim_last_error`] describes the cause for
//! the calling thread. Strings returned by the library are freed with
//! [`sixsim_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sixsim::{Error, RunConfig, RunReport};

/// Opaque run configuration.
pub struct SixsimConfig(RunConfig);

/// Opaque result of one run.
pub struct SixsimReport(RunReport);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SixsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Unknown key, unparsable value or violated invariant.
    Config = 3,
    Topology = 4,
    /// The requested metric has no value, e.g. on-time ratio with no deliveries.
    Undefined = 5,
    BufferTooSmall = 6,
    Internal = 7,
}

/// Packet counters of a report.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SixsimCounts {
    pub n_tx: u64,
    pub n_rx: u64,
    pub n_delayed: u64,
    pub duplicates: u64,
    pub queue_drops: u64,
    pub retry_drops: u64,
    pub no_parent_drops: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: SixsimStatus, msg: impl Into<String>) -> SixsimStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> SixsimStatus {
    let status = match e {
        Error::UnknownNode(_) | Error::SelfLink(_) | Error::TopologyMismatch(_) => SixsimStatus::Topology,
        _ => SixsimStatus::Config,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> SixsimStatus) -> SixsimStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(SixsimStatus::Internal, "panic inside sixsim"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, SixsimStatus> {
    if p.is_null() {
        return Err(fail(SixsimStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SixsimStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

macro_rules! deref {
    ($p:expr, $what:literal) => {
        match $p.as_ref() {
            Some(v) => v,
            None => return fail(SixsimStatus::NullPointer, concat!($what, " is null")),
        }
    };
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn sixsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sixsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// A configuration holding the benchmark defaults.
#[no_mangle]
pub extern "C" fn sixsim_config_new() -> *mut SixsimConfig {
    Box::into_raw(Box::new(SixsimConfig(RunConfig::default())))
}

/// Parses a TOML run configuration; missing keys take their defaults.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sixsim_config_from_toml(text: *const c_char, out: *mut *mut SixsimConfig) -> SixsimStatus {
    guard(|| {
        if out.is_null() {
            return fail(SixsimStatus::NullPointer, "out is null");
        }
        let text = match str_arg(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let cfg = match RunConfig::from_toml(text) {
            Ok(c) => c,
            Err(e) => return from_error(e),
        };
        *out = Box::into_raw(Box::new(SixsimConfig(cfg)));
        SixsimStatus::Ok
    })
}

/// # Safety
/// `cfg` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sixsim_config_free(cfg: *mut SixsimConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Sets one key, e.g. `("flooding", "leafCopy")` or `("pk_period_s", "10")`.
///
/// # Safety
/// `cfg` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn sixsim_config_set(
    cfg: *mut SixsimConfig,
    key: *const c_char,
    value: *const c_char,
) -> SixsimStatus {
    guard(|| {
        let cfg = match cfg.as_mut() {
            Some(c) => c,
            None => return fail(SixsimStatus::NullPointer, "cfg is null"),
        };
        let (key, value) = match (str_arg(key, "key"), str_arg(value, "value")) {
            (Ok(k), Ok(v)) => (k, v),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match cfg.0.set(key, value) {
            Ok(()) => SixsimStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sixsim_config_validate(cfg: *const SixsimConfig) -> SixsimStatus {
    guard(|| match deref!(cfg, "cfg").0.validate() {
        Ok(()) => SixsimStatus::Ok,
        Err(e) => from_error(e),
    })
}

/// Runs the configuration on its grouped topology to completion.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sixsim_run(cfg: *const SixsimConfig, out: *mut *mut SixsimReport) -> SixsimStatus {
    guard(|| {
        let cfg = &deref!(cfg, "cfg").0;
        if out.is_null() {
            return fail(SixsimStatus::NullPointer, "out is null");
        }
        let report = cfg.topology().and_then(|t| sixsim::run(cfg, &t));
        match report {
            Ok(r) => {
                *out = Box::into_raw(Box::new(SixsimReport(r)));
                SixsimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `report` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sixsim_report_free(report: *mut SixsimReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sixsim_report_counts(report: *const SixsimReport, out: *mut SixsimCounts) -> SixsimStatus {
    guard(|| {
        let r = &deref!(report, "report").0;
        let out = match out.as_mut() {
            Some(o) => o,
            None => return fail(SixsimStatus::NullPointer, "out is null"),
        };
        *out = SixsimCounts {
            n_tx: r.n_tx,
            n_rx: r.n_rx,
            n_delayed: r.n_delayed,
            duplicates: r.duplicates,
            queue_drops: r.queue_drops,
            retry_drops: r.retry_drops,
            no_parent_drops: r.no_parent_drops,
        };
        SixsimStatus::Ok
    })
}

unsafe fn metric(
    report: *const SixsimReport,
    out: *mut f64,
    name: &str,
    f: fn(&RunReport) -> Option<f64>,
) -> SixsimStatus {
    guard(|| {
        let r = &deref!(report, "report").0;
        if out.is_null() {
            return fail(SixsimStatus::NullPointer, "out is null");
        }
        match f(r) {
            Some(v) => {
                *out = v;
                SixsimStatus::Ok
            }
            None => fail(SixsimStatus::Undefined, format!("{name} is undefined for this run")),
        }
    })
}

/// Unique root deliveries over unique packets generated.
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sixsim_report_pdr(report: *const SixsimReport, out: *mut f64) -> SixsimStatus {
    metric(report, out, "pdr", RunReport::pdr_e2e)
}

/// Fraction of root deliveries within the deadline.
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sixsim_report_on_time(report: *const SixsimReport, out: *mut f64) -> SixsimStatus {
    metric(report, out, "on_time", RunReport::on_time)
}

/// Network lifetime in years (shortest-lived non-root node).
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sixsim_report_lifetime_years(report: *const SixsimReport, out: *mut f64) -> SixsimStatus {
    metric(report, out, "lifetime", |r| r.lifetime_years)
}

/// Copies delay samples (ms) into `buf`. `written` always receives the number
/// of samples; `BUFFER_TOO_SMALL` is returned when `len` is short, so a first
/// call with `buf = NULL, len = 0` sizes the buffer.
///
/// # Safety
/// `report` must be a live handle, `written` a valid pointer and `buf` valid
/// for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn sixsim_report_delays(
    report: *const SixsimReport,
    buf: *mut u64,
    len: usize,
    written: *mut usize,
) -> SixsimStatus {
    guard(|| {
        let r = &deref!(report, "report").0;
        let written = match written.as_mut() {
            Some(w) => w,
            None => return fail(SixsimStatus::NullPointer, "written is null"),
        };
        let samples = &r.delay_samples_ms;
        *written = samples.len();
        if len < samples.len() {
            return fail(SixsimStatus::BufferTooSmall, format!("need {} slots", samples.len()));
        }
        if !samples.is_empty() {
            if buf.is_null() {
                return fail(SixsimStatus::NullPointer, "buf is null");
            }
            ptr::copy_nonoverlapping(samples.as_ptr(), buf, samples.len());
        }
        SixsimStatus::Ok
    })
}

/// Full report as JSON; free with [`sixsim_string_free`]. Null on failure.
///
/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sixsim_report_to_json(report: *const SixsimReport) -> *mut c_char {
    let Some(r) = report.as_ref() else {
        set_error("report is null");
        return ptr::null_mut();
    };
    CString::new(r.0.to_json()).map_or(ptr::null_mut(), CString::into_raw)
}

/// # Safety
/// `s` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sixsim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
