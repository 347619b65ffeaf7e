use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use ddboot_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ddboot_last_error()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn law_handle_lifecycle() {
    let atoms = [3.0, 1.0, 2.0, 4.0];
    let mut law = ptr::null_mut();
    unsafe {
        assert_eq!(
            ddboot_law_new(atoms.as_ptr(), ptr::null(), 4, &mut law),
            DdbootStatus::Ok
        );
        let mut len = 0usize;
        assert_eq!(ddboot_law_len(law, &mut len), DdbootStatus::Ok);
        assert_eq!(len, 4);
        let mut q = 0.0;
        assert_eq!(ddboot_law_quantile(law, 0.5, &mut q), DdbootStatus::Ok);
        assert_eq!(q, 2.0);
        let mut f = 0.0;
        assert_eq!(ddboot_law_cdf(law, 2.5, &mut f), DdbootStatus::Ok);
        assert_eq!(f, 0.5);
        assert_eq!(ddboot_law_quantile(law, 1.5, &mut q), DdbootStatus::InvalidArgument);
        assert!(last_error().contains("level"), "{}", last_error());
        ddboot_law_free(law);
        ddboot_law_free(ptr::null_mut());
    }
}

#[test]
fn point_mass_distances() {
    let mut a = ptr::null_mut();
    let mut b = ptr::null_mut();
    unsafe {
        ddboot_law_new([0.0].as_ptr(), ptr::null(), 1, &mut a);
        ddboot_law_new([0.5].as_ptr(), ptr::null(), 1, &mut b);
        let mut d = 0.0;
        assert_eq!(
            ddboot_law_distance(a, b, DdbootMetric::BoundedLipschitz, &mut d),
            DdbootStatus::Ok
        );
        assert!((d - 0.5).abs() < 1e-9);
        assert_eq!(
            ddboot_law_distance(a, b, DdbootMetric::KolmogorovSmirnov, &mut d),
            DdbootStatus::Ok
        );
        assert_eq!(d, 1.0);
        ddboot_law_free(a);
        ddboot_law_free(b);
    }
}

#[test]
fn null_pointers_are_reported() {
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(
            ddboot_law_new(ptr::null(), ptr::null(), 3, &mut out),
            DdbootStatus::NullPointer
        );
        assert!(last_error().contains("atoms"));
        assert_eq!(
            ddboot_law_new([1.0].as_ptr(), ptr::null(), 1, ptr::null_mut()),
            DdbootStatus::NullPointer
        );
        assert_eq!(
            ddboot_report_view(ptr::null(), ptr::null_mut()),
            DdbootStatus::NullPointer
        );
    }
}

#[test]
fn isotonic_pools_violators() {
    let y = [1.0, 3.0, 2.0, 4.0];
    let mut out = [0.0; 4];
    unsafe {
        assert_eq!(
            ddboot_isotonic(y.as_ptr(), ptr::null(), 4, out.as_mut_ptr()),
            DdbootStatus::Ok
        );
    }
    assert_eq!(out, [1.0, 2.5, 2.5, 4.0]);
    let w = [1.0, -1.0, 1.0, 1.0];
    unsafe {
        assert_eq!(
            ddboot_isotonic(y.as_ptr(), w.as_ptr(), 4, out.as_mut_ptr()),
            DdbootStatus::InvalidArgument
        );
    }
}

#[test]
fn median_regression_and_rank_failure() {
    let y = [1.0, 2.0, 3.0];
    let x = [1.0, 1.0, 1.0];
    let mut beta = [0.0];
    let mut obj = 0.0;
    unsafe {
        assert_eq!(
            ddboot_quantile_regression(y.as_ptr(), x.as_ptr(), 3, 1, 0.5, beta.as_mut_ptr(), &mut obj),
            DdbootStatus::Ok
        );
    }
    assert!((beta[0] - 2.0).abs() < 1e-12);
    assert!((obj - 1.0).abs() < 1e-12);
    let x2 = [1.0, 2.0, 1.0, 2.0, 1.0, 2.0];
    let mut beta2 = [0.0; 2];
    unsafe {
        let s = ddboot_quantile_regression(y.as_ptr(), x2.as_ptr(), 3, 2, 0.5, beta2.as_mut_ptr(), ptr::null_mut());
        assert_eq!(s, DdbootStatus::Numerical);
    }
    assert!(last_error().contains("rank"));
}

#[test]
fn moment_test_deep_in_null() {
    let data: Vec<f64> = (0..200)
        .flat_map(|i| [-5.0 + 0.01 * (i % 7) as f64, -5.0 - 0.01 * (i % 3) as f64])
        .collect();
    let mut report = ptr::null_mut();
    let mut view = DdbootReportView {
        statistic: 0.0,
        critical_value: 0.0,
        p_value: 0.0,
        alpha: 0.0,
        reject: true,
        degenerate: false,
    };
    unsafe {
        assert_eq!(
            ddboot_test_moments(data.as_ptr(), 200, 2, 0.05, 200, 1, &mut report),
            DdbootStatus::Ok
        );
        assert_eq!(ddboot_report_view(report, &mut view), DdbootStatus::Ok);
        ddboot_report_free(report);
    }
    assert!(!view.reject);
    assert!(view.statistic < 0.0);
    assert_eq!(view.alpha, 0.05);
}

#[test]
fn monotone_test_runs_on_simulated_data() {
    let data = ddboot::quantile::simulate_dgp(200, 0.0, 0, 11).unwrap();
    let n = data.n();
    let x: Vec<f64> = (0..n).flat_map(|i| data.row(i).to_vec()).collect();
    let mut report = ptr::null_mut();
    unsafe {
        let s = ddboot_test_monotone(data.y().as_ptr(), x.as_ptr(), n, 4, 0.05, 50, 1.0, 0.25, 3, &mut report);
        assert_eq!(s, DdbootStatus::Ok, "{}", last_error());
        let mut view = std::mem::zeroed::<DdbootReportView>();
        ddboot_report_view(report, &mut view);
        assert!(view.statistic >= 0.0 && view.critical_value >= 0.0);
        ddboot_report_free(report);
        let s = ddboot_test_monotone(data.y().as_ptr(), x.as_ptr(), n, 4, 0.05, 50, 1.0, 0.5, 3, &mut report);
        assert_eq!(s, DdbootStatus::InvalidArgument);
        assert!(last_error().contains("kappa"));
    }
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(ddboot_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/ddboot.h")
}

#[test]
fn header_declares_every_entry_point() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "ddboot_last_error",
        "ddboot_version",
        "ddboot_law_new",
        "ddboot_law_free",
        "ddboot_law_len",
        "ddboot_law_quantile",
        "ddboot_law_cdf",
        "ddboot_law_distance",
        "ddboot_isotonic",
        "ddboot_quantile_regression",
        "ddboot_test_moments",
        "ddboot_test_monotone",
        "ddboot_report_free",
        "ddboot_report_view",
        "typedef struct DdbootLaw DdbootLaw",
        "DDBOOT_STATUS_NUMERICAL = 4",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipped");
        return;
    };
    assert!(cc.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"ddboot.h\"\nint main(void) { DdbootLaw *l = 0; double a[2] = {0, 1};\n\
         return ddboot_law_new(a, 0, 2, &l) == DDBOOT_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header().parent().unwrap())
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
