use std::ffi::{CStr, CString};
use std::ptr;

use bundlegeom_ffi::*;

fn last_error() -> String {
    let p = bg_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn builtin_scene_round_trip() {
    let name = CString::new("diagonal-exponential").unwrap();
    let params = [1.0, 2.0];
    let mut scene = ptr::null_mut();
    let st = unsafe { bg_scene_builtin(name.as_ptr(), params.as_ptr(), 2, 1, -1, &mut scene) };
    assert_eq!(st, BgStatus::Ok);
    let (mut n, mut rank) = (0usize, 0usize);
    assert_eq!(unsafe { bg_scene_dims(scene, &mut n, &mut rank) }, BgStatus::Ok);
    assert_eq!((n, rank), (1, 2));

    let analysis = CString::new("curvature").unwrap();
    let mut json = ptr::null_mut();
    let st = unsafe { bg_run_analysis(scene, analysis.as_ptr(), 0, &mut json) };
    assert_eq!(st, BgStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.contains("\"analysis\": \"curvature\""));
    unsafe {
        bg_string_free(json);
        bg_scene_free(scene);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let bad = CString::new("n = 1\nrank = 2\nmetric = \"[[1, 0], [0, \"").unwrap();
    let mut scene = ptr::null_mut();
    let st = unsafe { bg_scene_from_toml(bad.as_ptr(), &mut scene) };
    assert!(matches!(st, BgStatus::Parse | BgStatus::Input), "{st:?}");
    assert!(scene.is_null());
    assert!(!last_error().is_empty());

    let unknown = CString::new("no-such-builtin").unwrap();
    let st = unsafe { bg_scene_builtin(unknown.as_ptr(), ptr::null(), 0, 1, 1, &mut scene) };
    assert_eq!(st, BgStatus::Input);

    let st = unsafe { bg_scene_from_toml(ptr::null(), &mut scene) };
    assert_eq!(st, BgStatus::NullArgument);

    let mut out = 0u64;
    assert_eq!(unsafe { bg_symmetric_rank(0, &mut out) }, BgStatus::Input);
}

#[test]
fn toml_scene_and_unknown_analysis() {
    let text = CString::new("name = \"flat\"\nn = 1\nrank = 2\nmetric = \"[[1, 0], [0, 1]]\"\n").unwrap();
    let mut scene = ptr::null_mut();
    assert_eq!(unsafe { bg_scene_from_toml(text.as_ptr(), &mut scene) }, BgStatus::Ok);
    let analysis = CString::new("frobnicate").unwrap();
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { bg_run_analysis(scene, analysis.as_ptr(), 0, &mut json) }, BgStatus::Input);
    assert!(json.is_null());
    unsafe { bg_scene_free(scene) };
}

#[test]
fn threshold_values() {
    let mut rank = 0u64;
    let mut t = 0.0f64;
    unsafe {
        assert_eq!(bg_symmetric_rank(2, &mut rank), BgStatus::Ok);
        assert_eq!(bg_vanishing_threshold(2, &mut t), BgStatus::Ok);
    }
    assert_eq!(rank, 15);
    assert_eq!(t, 1.5);
    let v = unsafe { CStr::from_ptr(bg_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/bundlegeom.h")).unwrap();
    for sym in [
        "typedef struct BgScene BgScene",
        "bg_scene_from_toml",
        "bg_scene_builtin",
        "bg_scene_free",
        "bg_run_analysis",
        "bg_string_free",
        "bg_last_error",
        "BG_STATUS_PROPERTY_FAILED",
    ] {
        assert!(header.contains(sym), "missing {sym}");
    }
}

/// Compiles and runs a C program against the static library when a C
/// compiler is on PATH.
#[test]
fn c_program_links() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let target = dir.join("../../target");
    let lib = ["release", "debug"]
        .iter()
        .map(|p| target.join(p).join("libbundlegeom_ffi.a"))
        .filter(|p| p.exists())
        .max_by_key(|p| p.metadata().and_then(|m| m.modified()).ok());
    let (Some(lib), Ok(cc)) = (lib, which("cc")) else {
        eprintln!("skipping: no static library or C compiler");
        return;
    };
    let out = std::env::temp_dir().join(format!("bg_ffi_smoke_{}", std::process::id()));
    let status = std::process::Command::new(cc)
        .arg(dir.join("tests/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let run = std::process::Command::new(&out).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "R=15 threshold=1.5 status=0");
    let _ = std::fs::remove_file(out);
}

fn which(name: &str) -> Result<std::path::PathBuf, ()> {
    std::env::var_os("PATH")
        .and_then(|paths| std::env::split_paths(&paths).map(|p| p.join(name)).find(|p| p.is_file()))
        .ok_or(())
}
