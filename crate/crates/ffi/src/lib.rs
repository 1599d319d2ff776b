//! C ABI over `bundlegeom`.
//!
//! Every fallible call returns a `BgStatus`; on failure the message is
//! available from `bg_last_error` on the same thread until the next call.
//! Strings handed out by the library are released with `bg_string_free`,
//! scenes with `bg_scene_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bundlegeom::cli::{analyze_scene, Args};
use bundlegeom::dsl::{builtin, Scene};
use bundlegeom::vanishing::{symmetric_rank, vanishing_threshold};
use bundlegeom::Error;

/// Result of a library call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BgStatus {
    Ok = 0,
    /// Invalid input: bad scene, unknown analysis or option.
    Input = 1,
    /// The analysis ran and its property check failed; the report is still
    /// written.
    PropertyFailed = 2,
    Parse = 3,
    Domain = 4,
    Numerical = 5,
    Degenerate = 6,
    Unsupported = 7,
    NullArgument = 8,
    InvalidUtf8 = 9,
    Panic = 10,
}

/// Opaque scene handle.
pub struct BgScene {
    scene: Scene,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> BgStatus {
    match err {
        Error::Parse { .. } => BgStatus::Parse,
        Error::Input(_) => BgStatus::Input,
        Error::Domain { .. } => BgStatus::Domain,
        Error::Numerical { .. } => BgStatus::Numerical,
        Error::Degenerate(_) => BgStatus::Degenerate,
        Error::Capability(_) => BgStatus::Unsupported,
    }
}

fn fail(err: Error) -> BgStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

/// Runs `f` with the error slot cleared and panics converted to a status.
fn guarded(f: impl FnOnce() -> BgStatus) -> BgStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            BgStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or a NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char) -> std::result::Result<&'a str, BgStatus> {
    if p.is_null() {
        set_error("null string argument");
        return Err(BgStatus::NullArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        BgStatus::InvalidUtf8
    })
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn bg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next library call on the same thread.
#[no_mangle]
pub extern "C" fn bg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses a scene from TOML text.
///
/// # Safety
/// `toml` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn bg_scene_from_toml(toml: *const c_char, out: *mut *mut BgScene) -> BgStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null output pointer");
            return BgStatus::NullArgument;
        }
        *out = ptr::null_mut();
        let text = match read_str(toml) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match Scene::from_toml(text) {
            Ok(scene) => {
                *out = Box::into_raw(Box::new(BgScene { scene }));
                BgStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Builds a builtin scene. `r < 0` selects the builtin's default rank.
///
/// # Safety
/// `name` is a NUL-terminated string; `params` points to `n_params` doubles
/// (or is null when `n_params == 0`); `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn bg_scene_builtin(
    name: *const c_char,
    params: *const f64,
    n_params: usize,
    n: usize,
    r: i32,
    out: *mut *mut BgScene,
) -> BgStatus {
    guarded(|| {
        if out.is_null() || (params.is_null() && n_params > 0) {
            set_error("null pointer argument");
            return BgStatus::NullArgument;
        }
        *out = ptr::null_mut();
        let name = match read_str(name) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let params = if n_params == 0 { &[][..] } else { std::slice::from_raw_parts(params, n_params) };
        let r = usize::try_from(r).ok();
        match builtin(name, params, n, r) {
            Ok(scene) => {
                *out = Box::into_raw(Box::new(BgScene { scene }));
                BgStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a scene; null is ignored.
///
/// # Safety
/// `scene` came from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bg_scene_free(scene: *mut BgScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Base dimension and bundle rank of a scene.
///
/// # Safety
/// `scene` is a live handle; `n` and `rank` are writable.
#[no_mangle]
pub unsafe extern "C" fn bg_scene_dims(scene: *const BgScene, n: *mut usize, rank: *mut usize) -> BgStatus {
    guarded(|| {
        if scene.is_null() || n.is_null() || rank.is_null() {
            set_error("null pointer argument");
            return BgStatus::NullArgument;
        }
        let s = &(*scene).scene;
        *n = s.n;
        *rank = s.rank();
        BgStatus::Ok
    })
}

/// Runs a scene analysis and writes its JSON report to `out_json`.
/// `resolution == 0` keeps the default quadrature resolution. On
/// `BG_STATUS_PROPERTY_FAILED` the report is still written.
///
/// # Safety
/// `scene` is a live handle; `analysis` is a NUL-terminated string;
/// `out_json` is writable. Release the report with `bg_string_free`.
#[no_mangle]
pub unsafe extern "C" fn bg_run_analysis(
    scene: *const BgScene,
    analysis: *const c_char,
    resolution: usize,
    out_json: *mut *mut c_char,
) -> BgStatus {
    guarded(|| {
        if scene.is_null() || out_json.is_null() {
            set_error("null pointer argument");
            return BgStatus::NullArgument;
        }
        *out_json = ptr::null_mut();
        let analysis = match read_str(analysis) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let mut args = Args::for_analysis(analysis);
        if resolution != 0 {
            args.resolution = resolution;
        }
        match analyze_scene(&args, &(*scene).scene) {
            Ok(report) => {
                let passed = report.passed;
                *out_json = into_c_string(report.to_json());
                if passed {
                    BgStatus::Ok
                } else {
                    set_error(format!("{analysis}: property check failed"));
                    BgStatus::PropertyFailed
                }
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a string returned by the library; null is ignored.
///
/// # Safety
/// `s` came from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Rank of `S^{r+1}` of a rank `r+1` bundle.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn bg_symmetric_rank(r: usize, out: *mut u64) -> BgStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null output pointer");
            return BgStatus::NullArgument;
        }
        match symmetric_rank(r) {
            Ok(v) => {
                *out = v;
                BgStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Lelong threshold `2R / ((r+2)(r+3))`.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn bg_vanishing_threshold(r: usize, out: *mut f64) -> BgStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null output pointer");
            return BgStatus::NullArgument;
        }
        match vanishing_threshold(r) {
            Ok(t) => {
                *out = t.threshold;
                BgStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
