//! C ABI over the suggestion engine.
//!
//! Every fallible call returns an [`EcStatus`]; on failure the message is
//! available from [`ec_last_error`] on the same thread until the next call.
//! Strings returned to the caller must be released with [`ec_string_free`].
//! Handles are not synchronized: do not use one handle from two threads at once.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use expcopilot::bench::{metric_at_t, Benchmark};
use expcopilot::config::AppConfig;
use expcopilot::retrieval::{cosine_similarity, EmbeddingVector};
use expcopilot::session::{parse_query, suggestion_records, Session};
use expcopilot::{Direction, Error, ParamValue, Solution};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EcStatus {
    Ok = 0,
    InvalidArgument = 1,
    Config = 2,
    Backend = 3,
    Parse = 4,
    Io = 5,
    Internal = 6,
}

/// A loaded experience pool plus its backend.
pub struct EcSession {
    inner: Session,
}

/// A lookup-table benchmark.
pub struct EcBenchmark {
    inner: Benchmark,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(EcStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_) => EcStatus::Config,
            Error::Backend(_) | Error::ReplayMiss(_) | Error::ElicitationFailed { .. } => {
                EcStatus::Backend
            }
            Error::Parse(_) => EcStatus::Parse,
            Error::Io { .. } | Error::Schema { .. } => EcStatus::Io,
            _ => EcStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(EcStatus::InvalidArgument, msg.into())
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EcStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            EcStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid(format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(invalid(format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn out_string(s: String, out: *mut *mut c_char) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| invalid("output contains a NUL byte"))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

fn check_out<T>(out: *mut T) -> Result<(), Failure> {
    if out.is_null() {
        Err(invalid("output pointer is null"))
    } else {
        Ok(())
    }
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ec_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ec_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Opens a session from a TOML configuration file. The pool must already be ingested.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ec_session_open(
    config_path: *const c_char,
    out: *mut *mut EcSession,
) -> EcStatus {
    guard(|| {
        check_out(out)?;
        *out = ptr::null_mut();
        let path = str_arg(config_path, "config_path")?;
        let session = Session::open(AppConfig::load(Path::new(path))?)?;
        *out = Box::into_raw(Box::new(EcSession { inner: session }));
        Ok(())
    })
}

/// Suggests configurations for a task given as JSON or as a plain description.
/// `n` overrides the configured number of suggestions when positive. The
/// result is a JSON array of ranked suggestions.
///
/// # Safety
/// `session` must be a live handle; `task` a NUL-terminated string; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn ec_session_suggest(
    session: *mut EcSession,
    task: *const c_char,
    n: usize,
    out_json: *mut *mut c_char,
) -> EcStatus {
    guard(|| {
        check_out(out_json)?;
        *out_json = ptr::null_mut();
        let s = session.as_mut().ok_or_else(|| invalid("session is null"))?;
        let query = parse_query(str_arg(task, "task")?, &s.inner.space)?;
        if n > 0 {
            s.inner.config.suggestion.n_suggestions = n;
        }
        let set = s.inner.suggest(&query)?;
        out_string(
            serde_json::Value::Array(suggestion_records(&set)).to_string(),
            out_json,
        )
    })
}

/// The prompt the model would see for `task`.
///
/// # Safety
/// As for [`ec_session_suggest`].
#[no_mangle]
pub unsafe extern "C" fn ec_session_prompt(
    session: *const EcSession,
    task: *const c_char,
    out_text: *mut *mut c_char,
) -> EcStatus {
    guard(|| {
        check_out(out_text)?;
        *out_text = ptr::null_mut();
        let s = session.as_ref().ok_or_else(|| invalid("session is null"))?;
        let query = parse_query(str_arg(task, "task")?, &s.inner.space)?;
        out_string(s.inner.prompt(&query)?.text, out_text)
    })
}

/// # Safety
/// `session` must come from [`ec_session_open`] and must not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ec_session_free(session: *mut EcSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Loads a benchmark directory (space.json, tasks.jsonl, table.jsonl).
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ec_benchmark_open(
    dir: *const c_char,
    out: *mut *mut EcBenchmark,
) -> EcStatus {
    guard(|| {
        check_out(out)?;
        *out = ptr::null_mut();
        let b = Benchmark::load(Path::new(str_arg(dir, "dir")?))?;
        *out = Box::into_raw(Box::new(EcBenchmark { inner: b }));
        Ok(())
    })
}

/// Table lookup of a solution given as a JSON object of parameter values.
///
/// # Safety
/// `bench` must be a live handle; strings NUL-terminated; `out_metric` writable.
#[no_mangle]
pub unsafe extern "C" fn ec_benchmark_evaluate(
    bench: *const EcBenchmark,
    task_id: *const c_char,
    solution_json: *const c_char,
    out_metric: *mut f64,
) -> EcStatus {
    guard(|| {
        check_out(out_metric)?;
        let b = bench.as_ref().ok_or_else(|| invalid("benchmark is null"))?;
        let task_id = str_arg(task_id, "task_id")?;
        let values: BTreeMap<String, ParamValue> =
            serde_json::from_str(str_arg(solution_json, "solution_json")?)
                .map_err(|e| invalid(format!("solution_json: {e}")))?;
        let solution = Solution::new(&b.inner.space, values)?;
        *out_metric = b.inner.evaluate_solution(task_id, &solution)?;
        Ok(())
    })
}

/// # Safety
/// `bench` must come from [`ec_benchmark_open`] and must not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ec_benchmark_free(bench: *mut EcBenchmark) {
    if !bench.is_null() {
        drop(Box::from_raw(bench));
    }
}

/// Best of the first `t` values (1-based).
///
/// # Safety
/// `values` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ec_metric_at_t(
    values: *const f64,
    len: usize,
    t: usize,
    lower_is_better: bool,
    out: *mut f64,
) -> EcStatus {
    guard(|| {
        check_out(out)?;
        let v = slice_arg(values, len, "values")?;
        let d = if lower_is_better {
            Direction::LowerBetter
        } else {
            Direction::HigherBetter
        };
        *out = metric_at_t(v, t, d)?;
        Ok(())
    })
}

/// Cosine similarity of two vectors of length `len`.
///
/// # Safety
/// `a` and `b` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ec_cosine(
    a: *const f64,
    b: *const f64,
    len: usize,
    out: *mut f64,
) -> EcStatus {
    guard(|| {
        check_out(out)?;
        let ev = |v: &[f64]| EmbeddingVector::new(v.to_vec(), "ffi");
        let a = ev(slice_arg(a, len, "a")?)?;
        let b = ev(slice_arg(b, len, "b")?)?;
        *out = cosine_similarity(&a, &b)?;
        Ok(())
    })
}
