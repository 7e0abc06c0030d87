use std::ffi::{CStr, CString};
use std::ptr;

use blgeo_ffi::*;

const YOUNG: &str = r#"{"n": 2, "maps": [[[1, 0]], [[0, 1]], [[1, 1]]],
  "p": [{"num": 2, "den": 3}, {"num": 2, "den": 3}, {"num": 2, "den": 3}]}"#;
const COLLAPSE: &str = r#"{"n": 2, "maps": [[[1, 0]], [[1, 0]]],
  "p": [{"num": 1, "den": 1}, {"num": 1, "den": 1}]}"#;

fn last_error() -> String {
    let p = blgeo_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn datum(json: &str) -> (BlgeoStatus, *mut BlgeoDatum) {
    let text = CString::new(json).unwrap();
    let mut out = ptr::null_mut();
    let s = unsafe { blgeo_datum_from_json(text.as_ptr(), &mut out) };
    (s, out)
}

fn solve(d: *const BlgeoDatum, m: BlgeoMethod, max_iter: usize) -> (BlgeoStatus, *mut BlgeoResult) {
    let mut out = ptr::null_mut();
    let s = unsafe { blgeo_solve(d, m, 0.0, max_iter, &mut out) };
    (s, out)
}

#[test]
fn three_methods_agree_through_the_c_api() {
    let (s, d) = datum(YOUNG);
    assert_eq!(s, BlgeoStatus::Ok);
    unsafe {
        assert_eq!(blgeo_datum_dim(d), 2);
        assert_eq!(blgeo_datum_map_count(d), 3);
    }
    let mut values = Vec::new();
    for m in [
        BlgeoMethod::FixedPoint,
        BlgeoMethod::Geodesic,
        BlgeoMethod::Capacity,
    ] {
        let (s, r) = solve(d, m, 0);
        assert_eq!(s, BlgeoStatus::Ok, "{m:?}");
        unsafe {
            assert!(blgeo_result_converged(r));
            assert!(blgeo_result_iterations(r) > 0);
            values.push(blgeo_result_log_bl(r));
            blgeo_result_free(r);
        }
    }
    assert!((values[0] - values[1]).abs() < 1e-9);
    assert!((values[0] - values[2]).abs() < 1e-6);
    unsafe { blgeo_datum_free(d) };
}

#[test]
fn optimizer_copy_checks_buffer_size() {
    let (_, d) = datum(YOUNG);
    let (_, r) = solve(d, BlgeoMethod::Geodesic, 0);
    let mut small = [0.0; 3];
    let mut buf = [0.0; 4];
    unsafe {
        assert_eq!(
            blgeo_result_optimizer(r, small.as_mut_ptr(), small.len()),
            BlgeoStatus::BufferTooSmall
        );
        assert_eq!(
            blgeo_result_optimizer(r, buf.as_mut_ptr(), buf.len()),
            BlgeoStatus::Ok
        );
        blgeo_result_free(r);
        blgeo_datum_free(d);
    }
    assert!((buf[1] - buf[2]).abs() < 1e-12, "symmetric");
    assert!(
        (buf[0] * buf[3] - buf[1] * buf[2] - 1.0).abs() < 1e-9,
        "unit determinant"
    );
}

#[test]
fn capacity_has_no_optimizer() {
    let (_, d) = datum(YOUNG);
    let (_, r) = solve(d, BlgeoMethod::Capacity, 0);
    let mut buf = [0.0; 4];
    unsafe {
        assert_eq!(
            blgeo_result_optimizer(r, buf.as_mut_ptr(), 4),
            BlgeoStatus::Unavailable
        );
        blgeo_result_free(r);
        blgeo_datum_free(d);
    }
}

#[test]
fn json_matches_cli_document() {
    let (_, d) = datum(YOUNG);
    let (_, r) = solve(d, BlgeoMethod::FixedPoint, 0);
    unsafe {
        let s = blgeo_result_to_json(r);
        let text = CStr::from_ptr(s).to_str().unwrap().to_owned();
        blgeo_string_free(s);
        blgeo_result_free(r);
        blgeo_datum_free(d);
        assert!(text.contains("\"status\": \"converged\""));
        assert!(text.contains("\"method\": \"fixed-point\""));
    }
}

#[test]
fn not_converged_still_returns_partial_result() {
    let (_, d) = datum(YOUNG);
    let (s, r) = solve(d, BlgeoMethod::FixedPoint, 1);
    assert_eq!(s, BlgeoStatus::NotConverged);
    assert!(!r.is_null());
    assert!(last_error().contains("not converged"));
    unsafe {
        assert!(!blgeo_result_converged(r));
        assert!(blgeo_result_log_bl(r).is_finite());
        blgeo_result_free(r);
        blgeo_datum_free(d);
    }
}

#[test]
fn collapse_diverges_for_every_method() {
    let (s, d) = datum(COLLAPSE);
    assert_eq!(s, BlgeoStatus::Ok);
    for m in [
        BlgeoMethod::FixedPoint,
        BlgeoMethod::Geodesic,
        BlgeoMethod::Capacity,
    ] {
        let (s, r) = solve(d, m, 0);
        assert_eq!(s, BlgeoStatus::Diverged, "{m:?}");
        unsafe { blgeo_result_free(r) };
    }
    unsafe { blgeo_datum_free(d) };
}

#[test]
fn input_errors_are_reported() {
    let (s, d) = datum(r#"{"n": 2, "maps": [[[1, 0]], [[0, 1]]], "p": [0.5, 0.5]}"#);
    assert_eq!(s, BlgeoStatus::InvalidInput);
    assert!(d.is_null());
    assert!(last_error().contains("decimal"));

    let (s, _) = datum(
        r#"{"n": 2, "maps": [[[1, 0]], [[0, 1]]], "p": [{"num": 1, "den": 2}, {"num": 1, "den": 2}]}"#,
    );
    assert_eq!(s, BlgeoStatus::Infeasible);
    assert!(last_error().contains("scaling"));

    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { blgeo_datum_from_json(ptr::null(), &mut out) },
        BlgeoStatus::NullArgument
    );
    assert_eq!(
        unsafe { blgeo_solve(ptr::null(), BlgeoMethod::Geodesic, 0.0, 0, ptr::null_mut()) },
        BlgeoStatus::NullArgument
    );

    let (_, d) = datum(YOUNG);
    let mut r = ptr::null_mut();
    assert_eq!(
        unsafe { blgeo_solve(d, BlgeoMethod::Geodesic, -1.0, 0, &mut r) },
        BlgeoStatus::InvalidInput
    );
    assert!(r.is_null());
    unsafe { blgeo_datum_free(d) };
}

#[test]
fn success_clears_last_error() {
    let _ = datum("not json");
    assert!(!blgeo_last_error().is_null());
    let (s, d) = datum(YOUNG);
    assert_eq!(s, BlgeoStatus::Ok);
    assert!(blgeo_last_error().is_null());
    unsafe { blgeo_datum_free(d) };
}

#[test]
fn null_handles_are_tolerated() {
    unsafe {
        blgeo_datum_free(ptr::null_mut());
        blgeo_result_free(ptr::null_mut());
        blgeo_string_free(ptr::null_mut());
        assert!(blgeo_result_log_bl(ptr::null()).is_nan());
        assert_eq!(blgeo_datum_dim(ptr::null()), 0);
        assert!(blgeo_result_to_json(ptr::null()).is_null());
    }
    let v = unsafe { CStr::from_ptr(blgeo_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/blgeo.h");
    let text = std::fs::read_to_string(header).expect("header generated by the build script");
    for symbol in [
        "blgeo_datum_from_json",
        "blgeo_solve",
        "blgeo_last_error",
        "BLGEO_STATUS_DIVERGED",
    ] {
        assert!(text.contains(symbol), "{symbol} missing from header");
    }
    // A C compiler is optional in the build environment.
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .status()
    else {
        return;
    };
    assert!(status.success(), "cc rejected the generated header");
}

#[test]
fn c_program_links_and_runs() {
    let Ok(out) = std::process::Command::new("cc").arg("--version").output() else {
        return;
    };
    assert!(out.status.success());
    // Integration test binaries live in `<target>/<profile>/deps`.
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().and_then(|p| p.parent()).unwrap();
    assert!(
        lib_dir.join("libblgeo_ffi.so").exists(),
        "cdylib not found in {}",
        lib_dir.display()
    );
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let manifest = env!("CARGO_MANIFEST_DIR");
    let status = std::process::Command::new("cc")
        .arg(format!("{manifest}/tests/c/smoke.c"))
        .arg(format!("-I{manifest}/include"))
        .arg(format!("-L{}", lib_dir.display()))
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .args(["-lblgeo_ffi", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "compiling the C smoke program failed");
    let run = std::process::Command::new(&bin).output().unwrap();
    assert!(
        run.status.success(),
        "smoke program failed: {}",
        String::from_utf8_lossy(&run.stderr)
    );
    let v: f64 = String::from_utf8(run.stdout)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(v.abs() < 1e-8);
}
