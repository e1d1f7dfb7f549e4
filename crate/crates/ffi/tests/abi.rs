use std::ffi::{CStr, CString};
use std::ptr;

use distcache_ffi::*;

fn last_error() -> String {
    let p = dc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn catalog(sizes: &[f64], budget: f64) -> *mut DcCatalog {
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { dc_catalog_new(sizes.as_ptr(), sizes.len(), budget, &mut c) }, DcStatus::Ok);
    c
}

#[test]
fn catalog_lifecycle_and_errors() {
    let c = catalog(&[1.0, 2.0, 3.0], 2.5);
    unsafe {
        assert_eq!(dc_catalog_n_files(c), 3);
        assert_eq!(dc_catalog_budget(c), 2.5);
        dc_catalog_free(c);
        dc_catalog_free(ptr::null_mut());
        assert_eq!(dc_catalog_n_files(ptr::null()), 0);
    }

    let mut c = ptr::null_mut();
    let bad = [1.0, -2.0];
    assert_eq!(unsafe { dc_catalog_new(bad.as_ptr(), 2, 1.0, &mut c) }, DcStatus::InvalidArgument);
    assert!(c.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { dc_catalog_new(ptr::null(), 2, 1.0, &mut c) }, DcStatus::NullPointer);
    assert!(last_error().contains("sizes"));
    assert_eq!(unsafe { dc_catalog_new(bad.as_ptr(), 2, 1.0, ptr::null_mut()) }, DcStatus::NullPointer);

    let ok = catalog(&[1.0], 1.0);
    assert!(dc_last_error().is_null());
    unsafe { dc_catalog_free(ok) };
}

#[test]
fn per_slot_optimal_by_hand() {
    // hit per unit of budget is the demand itself: file 0 fills (size 1),
    // then 1.5 of file 1's size 2 fits
    let c = catalog(&[1.0, 2.0, 3.0], 2.5);
    let demand = [4.0, 3.0, 2.0];
    let mut out = [0.0; 3];
    unsafe {
        assert_eq!(dc_per_slot_optimal(c, demand.as_ptr(), 3, out.as_mut_ptr()), DcStatus::Ok);
        dc_catalog_free(c);
    }
    assert_eq!(out, [1.0, 0.75, 0.0]);
}

#[test]
fn synthetic_simulation_round_trip() {
    let sizes: Vec<f64> = (0..20).map(|i| 1.0 + i as f64).collect();
    let c = catalog(&sizes, 40.0);
    let topo = CString::new("ring:3").unwrap();
    let mut tr = ptr::null_mut();
    unsafe {
        assert_eq!(dc_trace_synthetic(c, topo.as_ptr(), 30, 0.8, 2, 5, 0.5, 200, 7, &mut tr), DcStatus::Ok);
        assert_eq!(dc_trace_n_slots(tr), 30);
        assert_eq!(dc_trace_n_sbs(tr), 3);
        let mut d = vec![0.0; 20];
        assert_eq!(dc_trace_demand(tr, 4, 1, d.as_mut_ptr(), 20), DcStatus::Ok);
        assert_eq!(d.iter().sum::<f64>(), 200.0);
        assert_eq!(dc_trace_demand(tr, 30, 1, d.as_mut_ptr(), 20), DcStatus::Index);

        let policy = CString::new("lrfu").unwrap();
        let mut res = ptr::null_mut();
        assert_eq!(dc_simulate(tr, c, policy.as_ptr(), ptr::null(), &mut res), DcStatus::Ok);
        let n = dc_results_n_rows(res);
        assert_eq!(n, 90);
        let mut hits = vec![0.0; n];
        assert_eq!(dc_results_hits(res, hits.as_mut_ptr(), n), DcStatus::Ok);
        let mut total = 0.0;
        assert_eq!(dc_results_total_hit(res, 1, &mut total), DcStatus::Ok);
        let by_rows: f64 = hits.iter().skip(1).step_by(3).sum();
        assert!((total - by_rows).abs() <= 1e-9 * total);
        assert_eq!(dc_results_total_hit(res, 3, &mut total), DcStatus::Index);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("m.csv").to_str().unwrap()).unwrap();
        assert_eq!(dc_results_write_csv(res, path.as_ptr()), DcStatus::Ok);
        assert!(std::fs::read_to_string(dir.path().join("m.csv")).unwrap().starts_with("slot,sbs,policy"));
        dc_results_free(res);

        let cfg = CString::new("refresh_every = 2\n[optimizer]\nmax_iters = 20\n").unwrap();
        let proposed = CString::new("proposed").unwrap();
        assert_eq!(dc_simulate(tr, c, proposed.as_ptr(), cfg.as_ptr(), &mut res), DcStatus::Ok);
        dc_results_free(res);

        let unknown = CString::new("best").unwrap();
        assert_eq!(dc_simulate(tr, c, unknown.as_ptr(), ptr::null(), &mut res), DcStatus::InvalidArgument);
        let bad_cfg = CString::new("refresh_every = \"x\"").unwrap();
        assert_eq!(dc_simulate(tr, c, policy.as_ptr(), bad_cfg.as_ptr(), &mut res), DcStatus::InvalidArgument);
        assert!(last_error().contains("config_toml"));

        dc_trace_free(tr);
        dc_catalog_free(c);
    }
}

#[test]
fn load_reports_io_errors_with_path() {
    let missing = CString::new("/nonexistent/catalog.csv").unwrap();
    let topo = CString::new("five-ring").unwrap();
    let (mut c, mut t) = (ptr::null_mut(), ptr::null_mut());
    let st = unsafe { dc_trace_load(missing.as_ptr(), missing.as_ptr(), topo.as_ptr(), 0, 0.1, &mut c, &mut t) };
    assert_eq!(st, DcStatus::Io);
    assert!(last_error().contains("/nonexistent/catalog.csv"));
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(dc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

/// The generated header must be valid C and C++.
#[test]
fn header_compiles() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/distcache.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in ["dc_catalog_new", "dc_simulate", "dc_results_free", "DC_STATUS_NULL_POINTER"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(&src, format!("#include \"{header}\"\nint main(void) {{ return dc_version() == 0; }}\n")).unwrap();
    for compiler in ["cc", "c++"] {
        match std::process::Command::new(compiler).arg("-fsyntax-only").arg(&src).output() {
            Ok(o) => assert!(o.status.success(), "{compiler}: {}", String::from_utf8_lossy(&o.stderr)),
            Err(_) => eprintln!("{compiler} not found; skipping"),
        }
    }
}
