use bosebox_ffi::*;
use std::ptr;

fn last_error() -> String {
    let mut buf = vec![0 as std::os::raw::c_char; 256];
    let n = unsafe { bb_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn geometry(alphas: [f64; 3], v: f64) -> *mut BbGeometry {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { bb_geometry_new(alphas.as_ptr(), v, &mut g) }, BbStatus::Ok);
    g
}

#[test]
fn geometry_roundtrip() {
    let g = geometry([0.4, 0.35, 0.25], 1000.0);
    let mut e1 = 0.0;
    let mut e = 0.0;
    unsafe {
        assert_eq!(bb_geometry_ground_energy(g, &mut e1), BbStatus::Ok);
        assert_eq!(bb_eigenvalue(g, 1, 1, 1, &mut e), BbStatus::Ok);
    }
    assert_eq!(e, e1);
    assert_eq!(unsafe { bb_eigenvalue(g, 0, 1, 1, &mut e) }, BbStatus::Domain);
    unsafe { bb_geometry_free(g) };
}

#[test]
fn bad_geometry_reports_message() {
    let mut g = ptr::null_mut();
    let s = unsafe { bb_geometry_new([0.5, 0.5, 0.5].as_ptr(), 10.0, &mut g) };
    assert_eq!(s, BbStatus::InvalidGeometry);
    assert!(g.is_null());
    assert!(last_error().contains("sum to 1"));
    assert!(bb_last_error_length() > 0);
}

#[test]
fn null_pointers_are_refused() {
    let mut out = 0.0;
    assert_eq!(unsafe { bb_geometry_ground_energy(ptr::null(), &mut out) }, BbStatus::NullPointer);
    assert_eq!(unsafe { bb_critical_density(1.0, ptr::null_mut()) }, BbStatus::NullPointer);
    unsafe {
        bb_geometry_free(ptr::null_mut());
        bb_spectrum_free(ptr::null_mut());
        bb_canonical_free(ptr::null_mut());
    }
}

#[test]
fn gc_and_canonical_pipeline() {
    let g = geometry([0.4, 0.35, 0.25], 1000.0);
    let mut s = ptr::null_mut();
    let mut c = ptr::null_mut();
    let (mut rc, mut mu, mut rho, mut occ, mut lap, mut len) = (0.0, 0.0, 0.0, 0.0, 0.0, 0usize);
    unsafe {
        assert_eq!(bb_spectrum_for_tolerance(g, 1.0, 1e-12, &mut s), BbStatus::Ok);
        assert_eq!(bb_spectrum_len(s, &mut len), BbStatus::Ok);
        assert!(len > 100);
        assert_eq!(bb_critical_density(1.0, &mut rc), BbStatus::Ok);
        assert!((rc - 0.16586920931301563).abs() < 1e-12);
        assert_eq!(bb_solve_mu(s, 2.0 * rc, 1.0, 1e-12, 200, &mut mu), BbStatus::Ok);
        assert!(mu < 0.0);
        assert_eq!(bb_gc_density(s, mu, 1.0, &mut rho), BbStatus::Ok);
        assert!((rho / (2.0 * rc) - 1.0).abs() < 1e-11);
        assert_eq!(bb_canonical_new(s, 1.0, 400, &mut c), BbStatus::Ok);
        bb_spectrum_free(s);
        assert_eq!(bb_canonical_mean_occupation(c, 0, 332, &mut occ), BbStatus::Ok);
        assert!(occ > 0.0 && occ < 332.0);
        assert_eq!(bb_canonical_laplace(c, 0, 332, 0.0, &mut lap), BbStatus::Ok);
        assert!((lap - 1.0).abs() < 1e-12);
        assert_eq!(bb_canonical_mean_occupation(c, 0, 401, &mut occ), BbStatus::OutOfRange);
        bb_canonical_free(c);
        bb_geometry_free(g);
    }
}

#[test]
fn limit_entry_points() {
    let (mut rc, mut v, mut t, mut g) = (0.0, 0.0, 0.0, 0.0);
    unsafe {
        bb_critical_density(1.0, &mut rc);
        assert_eq!(bb_typeii_ladder_occupation(1, 2.0 * rc, 1.0, 1000, &mut v, &mut t), BbStatus::Ok);
        assert!((v - 0.054882).abs() < 1e-5);
        assert!(t >= 0.0);
        assert_eq!(bb_g_function(1, 0.0, 1.0, &mut g), BbStatus::Ok);
        assert_eq!(g, 0.0);
        assert_eq!(bb_fluctuation_law(0, 0.0, 1.0, &mut g), BbStatus::Ok);
        assert!((g - 1.0).abs() < 1e-15);
        assert_eq!(bb_fluctuation_law(7, 0.0, 1.0, &mut g), BbStatus::Domain);
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/bosebox.h");
    let text = std::fs::read_to_string(header).unwrap();
    assert!(text.contains("bb_solve_mu"));
    let Ok(st) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .status()
    else {
        eprintln!("no C compiler; skipped syntax check");
        return;
    };
    assert!(st.success());
}
