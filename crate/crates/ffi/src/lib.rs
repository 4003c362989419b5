//! C interface to the engine.
//!
//! Every function returns an [`SgStatus`]. Strings handed out by the library
//! are owned by the caller and must be released with [`sg_string_free`].
//! On failure, [`sg_last_error`] describes the most recent error on the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use seagrounded::dispatch::emit_function_schemas;
use seagrounded::engine::Engine;
use seagrounded::orchestrator::Mode;
use seagrounded::service::turn_error_response;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The engine could not be built from its configuration.
    Config = 3,
    /// The question or its arguments were rejected; the output holds a JSON error body.
    Rejected = 4,
    /// A data provider failed; the output holds a JSON error body.
    Upstream = 5,
    /// Unexpected failure, including a caught panic.
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgMode {
    Deterministic = 0,
    ModelBacked = 1,
}

/// Opaque engine handle.
pub struct SgEngine {
    engine: Engine,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let msg = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn guard(f: impl FnOnce() -> SgStatus) -> SgStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            SgStatus::Internal
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, SgStatus> {
    if p.is_null() {
        set_error(format!("{name} is null"));
        return Err(SgStatus::NullArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{name} is not valid UTF-8"));
        SgStatus::InvalidUtf8
    })
}

unsafe fn write_string(out: *mut *mut c_char, s: String) {
    *out = CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw();
}

unsafe fn engine_ref<'a>(engine: *const SgEngine) -> Result<&'a Engine, SgStatus> {
    if engine.is_null() {
        set_error("engine is null");
        return Err(SgStatus::NullArgument);
    }
    Ok(&(*engine).engine)
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Builds an engine from a TOML configuration file.
///
/// # Safety
/// `config_path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_engine_open(config_path: *const c_char, out: *mut *mut SgEngine) -> SgStatus {
    guard(|| {
        if out.is_null() {
            set_error("out is null");
            return SgStatus::NullArgument;
        }
        *out = ptr::null_mut();
        let path = tri!(read_str(config_path, "config_path"));
        match Engine::load(Path::new(path)) {
            Ok(engine) => {
                *out = Box::into_raw(Box::new(SgEngine { engine }));
                SgStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                SgStatus::Config
            }
        }
    })
}

/// Releases an engine. Null is ignored.
///
/// # Safety
/// `engine` must come from [`sg_engine_open`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sg_engine_free(engine: *mut SgEngine) {
    if !engine.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(engine))));
    }
}

/// Answers one question. On `SG_STATUS_OK`, `*out_json` holds the answer;
/// on `SG_STATUS_REJECTED` or `SG_STATUS_UPSTREAM` it holds the error body.
///
/// # Safety
/// Pointers must be valid; `text` must be a C string.
#[no_mangle]
pub unsafe extern "C" fn sg_engine_query(
    engine: *const SgEngine,
    text: *const c_char,
    mode: SgMode,
    out_json: *mut *mut c_char,
) -> SgStatus {
    guard(|| {
        if out_json.is_null() {
            set_error("out_json is null");
            return SgStatus::NullArgument;
        }
        *out_json = ptr::null_mut();
        let engine = tri!(engine_ref(engine));
        let text = tri!(read_str(text, "text"));
        let mode = match mode {
            SgMode::Deterministic => Mode::Deterministic,
            SgMode::ModelBacked => Mode::ModelBacked,
        };
        match engine.query(text, mode) {
            Ok(answer) => match serde_json::to_string(&answer) {
                Ok(s) => {
                    write_string(out_json, s);
                    SgStatus::Ok
                }
                Err(e) => {
                    set_error(e.to_string());
                    SgStatus::Internal
                }
            },
            Err(e) => {
                let (status, body) = turn_error_response(&e);
                set_error(e.to_string());
                write_string(out_json, body.to_string());
                match status.as_u16() {
                    400..=499 => SgStatus::Rejected,
                    502 => SgStatus::Upstream,
                    _ => SgStatus::Internal,
                }
            }
        }
    })
}

/// Writes the function schemas offered to models as a JSON array.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sg_engine_functions(engine: *const SgEngine, out_json: *mut *mut c_char) -> SgStatus {
    guard(|| {
        if out_json.is_null() {
            set_error("out_json is null");
            return SgStatus::NullArgument;
        }
        let engine = tri!(engine_ref(engine));
        write_string(out_json, serde_json::Value::from(emit_function_schemas(engine.registry())).to_string());
        SgStatus::Ok
    })
}

/// Writes the health summary as a JSON object.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sg_engine_health(engine: *const SgEngine, out_json: *mut *mut c_char) -> SgStatus {
    guard(|| {
        if out_json.is_null() {
            set_error("out_json is null");
            return SgStatus::NullArgument;
        }
        let engine = tri!(engine_ref(engine));
        match serde_json::to_string(&engine.health()) {
            Ok(s) => {
                write_string(out_json, s);
                SgStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                SgStatus::Internal
            }
        }
    })
}

/// Message for the last failure on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn sg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
