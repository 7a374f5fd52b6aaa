use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use dp_estim_ffi::*;

fn last_error() -> String {
    let p = dp_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn values(e: *const DpEstimate) -> Vec<f64> {
    let mut v = vec![0.0; dp_estimate_len(e)];
    assert_eq!(dp_estimate_values(e, v.as_mut_ptr(), v.len()), DpStatus::Ok);
    v
}

#[test]
fn mean_round_trip() {
    unsafe {
        let data = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut m = ptr::null_mut();
        assert_eq!(dp_matrix_new(data.as_ptr(), 3, 2, &mut m), DpStatus::Ok);
        let mut e = ptr::null_mut();
        assert_eq!(dp_private_mean(m, 1.0, 1e-5, 10.0, 42, &mut e), DpStatus::Ok);
        let a = values(e);
        assert_eq!(a.len(), 2);
        assert_eq!(dp_estimate_budget_balanced(e), 1);

        let mut again = ptr::null_mut();
        assert_eq!(dp_private_mean(m, 1.0, 1e-5, 10.0, 42, &mut again), DpStatus::Ok);
        assert_eq!(a, values(again));

        let mut json = ptr::null_mut();
        assert_eq!(dp_estimate_ledger_json(e, &mut json), DpStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        assert!(text.contains("\"epsilon\":1.0"), "{text}");
        dp_string_free(json);

        let mut sparse = ptr::null_mut();
        assert_eq!(dp_private_sparse_mean(m, 1.0, 1e-5, 10.0, 1, 3, &mut sparse), DpStatus::Ok);
        assert_eq!(values(sparse).iter().filter(|v| **v != 0.0).count(), 1);

        dp_estimate_free(e);
        dp_estimate_free(again);
        dp_estimate_free(sparse);
        dp_matrix_free(m);
    }
}

#[test]
fn regression_entry_points() {
    let (n, d) = (60, 4);
    let x: Vec<f64> = (0..n * d).map(|i| ((i * 37 % 101) as f64 / 101.0 - 0.5) / 2.0).collect();
    let y: Vec<f64> = (0..n).map(|i| x[i * d] - x[i * d + 1]).collect();
    unsafe {
        let mut r = ptr::null_mut();
        assert_eq!(dp_regression_data_new(x.as_ptr(), y.as_ptr(), n, d, &mut r), DpStatus::Ok);
        let mut e = ptr::null_mut();
        assert_eq!(dp_private_linear_regression(r, 1.0, 1e-4, 5, &mut e), DpStatus::Ok);
        assert_eq!(dp_estimate_len(e), d);
        assert_eq!(dp_estimate_budget_balanced(e), 1);
        dp_estimate_free(e);

        assert_eq!(dp_private_sparse_regression(r, 1.0, 1e-4, 2, 5, &mut e), DpStatus::Ok);
        assert!(values(e).iter().filter(|v| **v != 0.0).count() <= 2);
        dp_estimate_free(e);

        let cfg = CString::new(
            r#"{"eta0":0.5,"iterations":3,"truncation":{"lo":-2.0,"hi":2.0},"radius":1.0,"b":1.0,
                "budget":{"epsilon":1.0,"delta":1e-4},"seed":9,"noise_multiplier":0.0}"#,
        )
        .unwrap();
        assert_eq!(dp_private_regression_json(r, cfg.as_ptr(), &mut e), DpStatus::Ok);
        assert_eq!(dp_estimate_len(e), d);
        dp_estimate_free(e);

        let bad = CString::new(r#"{"eta0":0.5}"#).unwrap();
        assert_eq!(dp_private_regression_json(r, bad.as_ptr(), &mut e), DpStatus::InvalidArgument);
        assert!(e.is_null());
        dp_regression_data_free(r);
    }
}

#[test]
fn errors_map_to_codes() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(dp_matrix_new(ptr::null(), 2, 2, &mut m), DpStatus::NullPointer);
        assert!(m.is_null());
        assert!(last_error().contains("values"));

        let data = [0.0; 4];
        assert_eq!(dp_matrix_new(data.as_ptr(), 2, 2, &mut m), DpStatus::Ok);
        assert!(dp_last_error().is_null());
        let mut e = ptr::null_mut();
        assert_eq!(dp_private_mean(m, 1.0, 0.0, 1.0, 1, &mut e), DpStatus::Unsupported);
        assert_eq!(dp_private_mean(m, -1.0, 0.1, 1.0, 1, &mut e), DpStatus::InvalidArgument);
        assert!(last_error().contains("epsilon"));
        assert_eq!(dp_private_sparse_mean(m, 1.0, 0.1, 1.0, 3, 1, &mut e), DpStatus::InvalidArgument);
        assert_eq!(dp_private_mean(ptr::null(), 1.0, 0.1, 1.0, 1, &mut e), DpStatus::NullPointer);
        assert_eq!(dp_private_mean(m, 1.0, 0.1, 1.0, 1, ptr::null_mut()), DpStatus::NullPointer);

        assert_eq!(dp_private_mean(m, 1.0, 0.1, 1.0, 1, &mut e), DpStatus::Ok);
        let mut small = [0.0; 1];
        assert_eq!(dp_estimate_values(e, small.as_mut_ptr(), 1), DpStatus::InvalidArgument);
        dp_estimate_free(e);
        dp_matrix_free(m);

        dp_matrix_free(ptr::null_mut());
        dp_estimate_free(ptr::null_mut());
        dp_string_free(ptr::null_mut());
        assert_eq!(dp_estimate_len(ptr::null()), 0);
    }
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(dp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include").join("dp_estim.h");
    let text = std::fs::read_to_string(&header).expect("header generated by the build script");
    for name in [
        "dp_matrix_new",
        "dp_private_mean",
        "dp_private_sparse_regression",
        "dp_estimate_ledger_json",
        "dp_string_free",
        "DP_STATUS_NULL_POINTER",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let src = tempfile_path("smoke.c");
    std::fs::write(
        &src,
        "#include \"dp_estim.h\"\nint main(void) { DpMatrix *m = 0; return dp_matrix_new(0, 0, 0, &m) == DP_STATUS_OK; }\n",
    )
    .unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(&src)
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success());
}

fn tempfile_path(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("dp-estim-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}
