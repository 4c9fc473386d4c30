use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use apkinetic_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(apk_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn bgk_step_through_handles() {
    unsafe {
        let name = CString::new("IMEX-BE(2,2,4)").unwrap();
        let mut pair = ptr::null_mut();
        assert_eq!(apk_pair_resolve(name.as_ptr(), &mut pair), ApkStatus::Ok);
        assert_eq!(apk_pair_stages(pair), 4);
        assert_eq!(apk_pair_is_gsa(pair), 1);

        let mut f0 = ptr::null_mut();
        assert_eq!(apk_grid_function_bkw(32, 3.0 * std::f64::consts::PI, 0.0, 1.0, &mut f0), ApkStatus::Ok);
        let mut stepper = ptr::null_mut();
        let st = apk_stepper_new(pair, 0.5, 1e-8, ApkBackend::Bgk, 1.0, 0, 0.0, &mut stepper);
        assert_eq!(st, ApkStatus::Ok, "{}", last_error());
        let mut f1 = ptr::null_mut();
        assert_eq!(apk_stepper_step(stepper, f0, &mut f1), ApkStatus::Ok);

        let mut m0 = [0.0; 4];
        let mut m1 = [0.0; 4];
        assert_eq!(apk_grid_function_moments(f0, m0.as_mut_ptr()), ApkStatus::Ok);
        assert_eq!(apk_grid_function_moments(f1, m1.as_mut_ptr()), ApkStatus::Ok);
        for (a, b) in m0.iter().zip(&m1) {
            assert!((a - b).abs() < 1e-12);
        }
        let len = apk_grid_function_len(f1);
        assert_eq!(len, 1024);
        let mut buf = vec![0.0; len];
        assert_eq!(apk_grid_function_values(f1, buf.as_mut_ptr(), len), ApkStatus::Ok);
        assert!(buf.iter().all(|x| *x >= 0.0));
        assert_eq!(apk_grid_function_values(f1, buf.as_mut_ptr(), len - 1), ApkStatus::InvalidArgument);

        let mut d = 0.0;
        assert_eq!(apk_l1_distance(f0, f1, &mut d), ApkStatus::Ok);
        assert!(d > 0.1);

        apk_grid_function_free(f1);
        apk_grid_function_free(f0);
        apk_stepper_free(stepper);
        apk_pair_free(pair);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let bad = CString::new("IMEX-NOPE(1,1,1)").unwrap();
        let mut pair = ptr::null_mut();
        assert_eq!(apk_pair_resolve(bad.as_ptr(), &mut pair), ApkStatus::UnknownScheme);
        assert!(pair.is_null());
        assert!(last_error().contains("IMEX-NOPE"));
        assert_eq!(apk_pair_resolve(ptr::null(), &mut pair), ApkStatus::NullPointer);
        let mut f = ptr::null_mut();
        assert_eq!(apk_grid_function_bkw(7, 1.0, 0.0, 1.0, &mut f), ApkStatus::InvalidArgument);
        let vals = [1.0; 4];
        assert_eq!(apk_grid_function_from_values(2, 1.0, vals.as_ptr(), 3, &mut f), ApkStatus::InvalidArgument);
        apk_pair_free(ptr::null_mut());
        apk_grid_function_free(ptr::null_mut());
        assert_eq!(apk_pair_stages(ptr::null()), 0);
    }
}

/// Compiles and runs a C program against the generated header and the
/// static library.
#[test]
fn header_compiles_and_links_from_c() {
    let manifest = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let target_dir = exe.parent().unwrap().parent().unwrap();
    let lib = target_dir.join("libapkinetic_ffi.a");
    assert!(lib.is_file(), "missing {}", lib.display());
    let out = tempfile::tempdir().unwrap();
    let bin = out.path().join("smoke");
    let cc = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .expect("cc runs");
    assert!(cc.status.success(), "{}", String::from_utf8_lossy(&cc.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "{}{}", String::from_utf8_lossy(&run.stdout), String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).contains("ok"));
}
