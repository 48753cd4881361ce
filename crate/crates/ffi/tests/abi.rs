use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use tdmech_ffi::*;

fn last_error() -> String {
    let p = tdm_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn harmonic_round_trip() {
    let expr = CString::new("0.5*y0^2 - 0.5*x0^2").unwrap();
    let mut l = ptr::null_mut();
    unsafe {
        assert_eq!(tdm_lagrangian_new(expr.as_ptr(), 1, &mut l), TdmStatus::Ok);
        assert_eq!(tdm_lagrangian_dim(l), 1);
        let (x, y) = ([0.5], [2.0]);
        let mut v = 0.0;
        assert_eq!(tdm_lagrangian_eval(l, 0.0, x.as_ptr(), y.as_ptr(), &mut v), TdmStatus::Ok);
        assert!((v - (2.0 - 0.125)).abs() < 1e-15);
        assert_eq!(tdm_lagrangian_energy(l, 0.0, x.as_ptr(), y.as_ptr(), &mut v), TdmStatus::Ok);
        assert!((v - (2.0 + 0.125)).abs() < 1e-15);
        let mut a = [0.0];
        assert_eq!(tdm_lagrangian_acceleration(l, 0.0, x.as_ptr(), y.as_ptr(), a.as_mut_ptr()), TdmStatus::Ok);
        assert!((a[0] + 0.5).abs() < 1e-15);

        let mut tr = ptr::null_mut();
        let half_pi = std::f64::consts::FRAC_PI_2;
        let status = tdm_lagrangian_integrate(l, 0.0, [1.0].as_ptr(), [0.0].as_ptr(), half_pi / 1000.0, 0.0, half_pi, &mut tr);
        assert_eq!(status, TdmStatus::Ok);
        let n = tdm_trajectory_len(tr);
        assert_eq!(n, 1001);
        let (mut s, mut xs) = (0.0, [0.0]);
        assert_eq!(tdm_trajectory_sample(tr, n - 1, &mut s, ptr::null_mut(), xs.as_mut_ptr(), ptr::null_mut()), TdmStatus::Ok);
        assert_eq!(s, half_pi);
        assert!(xs[0].abs() < 1e-10);
        assert_eq!(tdm_trajectory_sample(tr, n, &mut s, ptr::null_mut(), ptr::null_mut(), ptr::null_mut()), TdmStatus::Validation);

        let mut csv = ptr::null_mut();
        assert_eq!(tdm_trajectory_to_csv(tr, &mut csv), TdmStatus::Ok);
        assert!(CStr::from_ptr(csv).to_str().unwrap().starts_with("s,t,x0,y0\n"));
        tdm_string_free(csv);
        tdm_trajectory_free(tr);
        tdm_lagrangian_free(l);
    }
}

#[test]
fn errors_are_reported() {
    let mut l = ptr::null_mut();
    let bad = CString::new("0.5*y0^2 +").unwrap();
    unsafe {
        assert_eq!(tdm_lagrangian_new(bad.as_ptr(), 1, &mut l), TdmStatus::Parse);
        assert!(l.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(tdm_lagrangian_new(ptr::null(), 1, &mut l), TdmStatus::NullPointer);
        assert_eq!(tdm_lagrangian_eval(ptr::null(), 0.0, ptr::null(), ptr::null(), ptr::null_mut()), TdmStatus::NullPointer);
        // singular fiber Hessian
        let degenerate = CString::new("x0*y0").unwrap();
        assert_eq!(tdm_lagrangian_new(degenerate.as_ptr(), 1, &mut l), TdmStatus::Ok);
        let mut a = [0.0];
        let st = tdm_lagrangian_acceleration(l, 0.0, [1.0].as_ptr(), [1.0].as_ptr(), a.as_mut_ptr());
        assert_eq!(st, TdmStatus::Runtime);
        assert!(last_error().contains("singular"));
        tdm_lagrangian_free(l);
        tdm_lagrangian_free(ptr::null_mut());
        tdm_trajectory_free(ptr::null_mut());
        tdm_string_free(ptr::null_mut());
    }
}

#[test]
fn run_config_matches_catalog() {
    let cfg = CString::new(r#"{"version":1,"scenario":"caldirola"}"#).unwrap();
    let (mut tr, mut report) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(tdm_run_config(cfg.as_ptr(), &mut tr, &mut report), TdmStatus::Ok);
        let text = CStr::from_ptr(report).to_str().unwrap();
        assert!(text.contains("\"all_pass\": true"));
        let n = tdm_trajectory_len(tr);
        let mut x = [0.0];
        tdm_trajectory_sample(tr, n - 1, ptr::null_mut(), ptr::null_mut(), x.as_mut_ptr(), ptr::null_mut());
        assert!((x[0] - (1.0 - (-2.0f64).exp()) / 2.0).abs() < 1e-6);
        tdm_string_free(report);
        tdm_trajectory_free(tr);

        let strict = CString::new(r#"{"version":1,"scenario":"caldirola","typo":0}"#).unwrap();
        assert_eq!(tdm_run_config(strict.as_ptr(), &mut tr, ptr::null_mut()), TdmStatus::Parse);
        let unknown = CString::new(r#"{"version":1,"scenario":"nowhere"}"#).unwrap();
        assert_eq!(tdm_run_config(unknown.as_ptr(), &mut tr, ptr::null_mut()), TdmStatus::Validation);
    }
}

#[test]
fn header_is_current_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/tdmech.h");
    let text = std::fs::read_to_string(&header).expect("header generated by the build script");
    for sym in [
        "tdm_lagrangian_new",
        "tdm_lagrangian_integrate",
        "tdm_run_config",
        "tdm_trajectory_to_csv",
        "tdm_last_error_message",
        "TDM_STATUS_LAW_FAILED",
    ] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    // syntax check only when a C compiler is present
    if let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).output() {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
