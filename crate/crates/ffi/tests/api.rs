use std::ffi::{c_char, CStr, CString};
use std::ptr;

use eikonal_lab_ffi::*;

fn last_error() -> String {
    let n = unsafe { eik_last_error(ptr::null_mut(), 0) };
    let mut buf = vec![0 as c_char; n];
    unsafe { eik_last_error(buf.as_mut_ptr(), n) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn field_lifecycle_and_values() {
    let mut f: *mut EikField = ptr::null_mut();
    assert_eq!(eik_field_vortex(33, 1.0, 0.0, 0.0, &mut f), EikStatus::EIK_OK);
    let (mut nx, mut ny) = (0usize, 0usize);
    unsafe {
        assert_eq!(eik_field_shape(f, &mut nx, &mut ny), EikStatus::EIK_OK);
        assert_eq!((nx, ny), (33, 33));
        let mut xy = vec![0.0; 2 * nx * ny];
        let mut mask = vec![0u8; nx * ny];
        assert_eq!(eik_field_values(f, xy.as_mut_ptr(), mask.as_mut_ptr(), nx * ny), EikStatus::EIK_OK);
        // the center node is masked out, every other value has unit length
        assert_eq!(mask.iter().filter(|&&m| m == 0).count(), 1);
        for k in 0..nx * ny {
            if mask[k] == 1 {
                assert!(((xy[2 * k].powi(2) + xy[2 * k + 1].powi(2)).sqrt() - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(eik_field_values(f, xy.as_mut_ptr(), ptr::null_mut(), 7), EikStatus::EIK_INVALID_ARGUMENT);
        eik_field_free(f);
        eik_field_free(ptr::null_mut());
    }
}

#[test]
fn jump_difference_norm_matches_the_jump_size() {
    let mut f: *mut EikField = ptr::null_mut();
    assert_eq!(eik_field_jump(65, 1.0, 0, &mut f), EikStatus::EIK_OK);
    let dx = 2.0 / 64.0;
    let mut out = 0.0;
    unsafe {
        assert_eq!(eik_difference_norm(f, dx, 0.0, 2.0, &mut out), EikStatus::EIK_OK);
        // |D^h m| = √3 on one column of nodes; squared L² mass ≈ 3·2·dx
        assert!((out * out / (3.0 * 2.0 * dx) - 1.0).abs() < 0.05, "{out}");
        assert_eq!(eik_difference_norm(f, 0.0, dx, 2.0, &mut out), EikStatus::EIK_OK);
        assert_eq!(out, 0.0);
        let mut nu = 0.0;
        assert_eq!(eik_kinetic_norm(f, 0.2, 32, 1.0, &mut nu), EikStatus::EIK_OK);
        assert!(nu > 0.0);
        eik_field_free(f);
    }
}

#[test]
fn errors_are_reported() {
    let mut f: *mut EikField = ptr::null_mut();
    assert_eq!(eik_field_constant(16, 1.0, 1.0, 1.0, &mut f), EikStatus::EIK_INVALID_ARGUMENT);
    assert!(f.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(eik_field_vortex(16, 1.0, 0.0, 0.0, ptr::null_mut()), EikStatus::EIK_NULL_ARGUMENT);
    assert_eq!(last_error(), "out is null");
    let mut out = 0.0;
    assert_eq!(unsafe { eik_difference_norm(ptr::null(), 0.1, 0.0, 2.0, &mut out) }, EikStatus::EIK_NULL_ARGUMENT);
    let name = CString::new("warp").unwrap();
    let dir = CString::new("/nonexistent").unwrap();
    assert_eq!(unsafe { eik_run(name.as_ptr(), ptr::null(), dir.as_ptr()) }, EikStatus::EIK_INVALID_ARGUMENT);
    assert!(last_error().contains("warp"));
}

#[test]
fn run_writes_outputs_and_reads_fields_back() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("field.cfg");
    std::fs::write(&cfg, "field = jump\nn = 17\n").unwrap();
    let out = dir.path().join("out");
    let (name, cfg_c, out_c) = (
        CString::new("field").unwrap(),
        CString::new(cfg.to_str().unwrap()).unwrap(),
        CString::new(out.to_str().unwrap()).unwrap(),
    );
    assert_eq!(unsafe { eik_run(name.as_ptr(), cfg_c.as_ptr(), out_c.as_ptr()) }, EikStatus::EIK_OK, "{}", last_error());
    let path = CString::new(out.join("field.eikf").to_str().unwrap()).unwrap();
    let mut f: *mut EikField = ptr::null_mut();
    unsafe {
        assert_eq!(eik_field_read(path.as_ptr(), &mut f), EikStatus::EIK_OK, "{}", last_error());
        let (mut nx, mut ny) = (0, 0);
        eik_field_shape(f, &mut nx, &mut ny);
        assert_eq!((nx, ny), (17, 17));
        eik_field_free(f);
    }
    let v = unsafe { CStr::from_ptr(eik_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

/// The generated header must compile as C when a compiler is available.
#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/eikonal_lab.h");
    let Ok(o) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .output()
    else {
        eprintln!("no C compiler; skipped");
        return;
    };
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
