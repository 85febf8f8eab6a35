use std::ffi::{c_char, CStr, CString};
use std::ptr;

use jmflow_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    unsafe {
        jm_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn pair() -> *mut JmMassSystem {
    let m = [1.0, 1.0];
    let mut ms = ptr::null_mut();
    assert_eq!(unsafe { jm_mass_system_new(m.as_ptr(), 2, 2, &mut ms) }, JmStatus::Ok);
    ms
}

#[test]
fn mass_system_lifecycle_and_errors() {
    let ms = pair();
    unsafe {
        assert_eq!(jm_mass_system_ndof(ms), 4);
        let (q, v) = ([-1.0, 0.0, 1.0, 0.0], [-1.0, 0.0, 1.0, 0.0]);
        let mut e = 0.0;
        assert_eq!(jm_energy(ms, q.as_ptr(), v.as_ptr(), 4, &mut e), JmStatus::Ok);
        assert!((e - 0.5).abs() < 1e-15);
        assert_eq!(jm_energy(ms, q.as_ptr(), v.as_ptr(), 3, &mut e), JmStatus::ShapeMismatch);
        assert!(last_error().contains("expected 4"));
        assert_eq!(jm_energy(ms, ptr::null(), v.as_ptr(), 4, &mut e), JmStatus::NullPointer);
        jm_mass_system_free(ms);
        jm_mass_system_free(ptr::null_mut());

        let bad = [1.0, -1.0];
        let mut out = ptr::null_mut();
        assert_eq!(jm_mass_system_new(bad.as_ptr(), 2, 2, &mut out), JmStatus::InvalidArgument);
        assert!(out.is_null());
        assert_eq!(jm_mass_system_ndof(ptr::null()), 0);
        assert!(!CStr::from_ptr(jm_version()).to_bytes().is_empty());
    }
}

#[test]
fn flow_and_potential() {
    let ms = pair();
    unsafe {
        let (q, v) = ([-0.5, 0.0, 0.5, 0.0], [0.0, -0.5f64.sqrt(), 0.0, 0.5f64.sqrt()]);
        let (mut q1, mut v1) = ([0.0; 4], [0.0; 4]);
        let period = std::f64::consts::PI * 2f64.sqrt();
        let st = jm_flow_map(ms, q.as_ptr(), v.as_ptr(), 4, period, q1.as_mut_ptr(), v1.as_mut_ptr());
        assert_eq!(st, JmStatus::Ok);
        for k in 0..4 {
            assert!((q1[k] - q[k]).abs() < 1e-6);
        }
        // head-on collapse is reported
        let vh = [1.0, 0.0, -1.0, 0.0];
        let q0 = [-1.0, 0.0, 1.0, 0.0];
        let st = jm_flow_map(ms, q0.as_ptr(), vh.as_ptr(), 4, 5.0, q1.as_mut_ptr(), v1.as_mut_ptr());
        assert_eq!(st, JmStatus::CollisionApproach);

        let (x, y) = ([-1.0, 0.0, 1.0, 0.0], [-1.0, 0.5, 1.0, -0.5]);
        let (mut a, mut b, mut t) = (0.0, 0.0, 0.0);
        assert_eq!(jm_phi(ms, 0.5, x.as_ptr(), y.as_ptr(), 4, &mut a, &mut t), JmStatus::Ok);
        assert_eq!(jm_phi(ms, 0.5, y.as_ptr(), x.as_ptr(), 4, &mut b, ptr::null_mut()), JmStatus::Ok);
        assert!(t > 0.0 && (a - b).abs() < 1e-6 * a);
        assert_eq!(jm_phi(ms, -1.0, x.as_ptr(), y.as_ptr(), 4, &mut a, &mut t), JmStatus::Precondition);
        jm_mass_system_free(ms);
    }
}

#[test]
fn shape_and_busemann() {
    let ms = pair();
    unsafe {
        let a = [-0.5, 0.0, 0.5, 0.0];
        let x = [-2.0, 0.0, 2.0, 0.0];
        let (mut v, mut res) = ([0.0; 4], 1.0);
        let st = jm_solve_velocity(ms, a.as_ptr(), 0.9, 1.0, x.as_ptr(), 4, v.as_mut_ptr(), &mut res);
        assert_eq!(st, JmStatus::Ok);
        assert!(res <= 1e-6 && v[1].abs() < 1e-8 && v[0] < 0.0);
        let (mut a2, mut p) = ([0.0; 4], 0.0);
        let st = jm_limit_shape(ms, x.as_ptr(), v.as_ptr(), 4, 200.0, a2.as_mut_ptr(), &mut p);
        assert_eq!(st, JmStatus::Ok);
        assert!((a2[0] - a[0]).abs() < 1e-5);

        let mut b = ptr::null_mut();
        let target = [-50.0, 0.0, 50.0, 0.0];
        assert_eq!(jm_busemann_new(ms, 0.5, target.as_ptr(), 4, &mut b), JmStatus::Ok);
        let (mut u0, mut u1) = (1.0, 0.0);
        let zero = [0.0; 4];
        assert_eq!(jm_busemann_eval(b, zero.as_ptr(), 4, &mut u0), JmStatus::Ok);
        assert_eq!(u0, 0.0);
        assert_eq!(jm_busemann_eval(b, x.as_ptr(), 4, &mut u1), JmStatus::Ok);
        // moving toward the target increases u
        assert!(u1 > 0.0);
        jm_busemann_free(b);
        jm_mass_system_free(ms);
    }
}

#[test]
fn scenarios() {
    unsafe {
        let name = CString::new("kepler-hyperbolic").unwrap();
        let mut sc = ptr::null_mut();
        assert_eq!(jm_scenario_load(name.as_ptr(), &mut sc), JmStatus::Ok);
        let mut ms = ptr::null_mut();
        assert_eq!(jm_scenario_mass_system(sc, &mut ms), JmStatus::Ok);
        assert_eq!(jm_mass_system_ndof(ms), 4);
        let (mut q, mut v) = ([0.0; 4], [0.0; 4]);
        let state = CString::new("escape").unwrap();
        assert_eq!(jm_scenario_state(sc, state.as_ptr(), q.as_mut_ptr(), v.as_mut_ptr(), 4), JmStatus::Ok);
        assert_eq!(q, [-1.0, 0.0, 1.0, 0.0]);
        let missing = CString::new("nope").unwrap();
        assert_eq!(
            jm_scenario_state(sc, missing.as_ptr(), q.as_mut_ptr(), v.as_mut_ptr(), 4),
            JmStatus::Schema
        );
        assert!(last_error().contains("nope"));
        jm_mass_system_free(ms);
        jm_scenario_free(sc);

        let bad = CString::new("/nonexistent/scenario.toml").unwrap();
        assert_eq!(jm_scenario_load(bad.as_ptr(), &mut sc), JmStatus::Io);
    }
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/jmflow.h")).unwrap();
    for f in [
        "jm_mass_system_new",
        "jm_flow_map",
        "jm_phi",
        "jm_busemann_eval",
        "jm_last_error_message",
        "JM_STATUS_COLLISION_APPROACH",
        "typedef struct JmMassSystem JmMassSystem",
    ] {
        assert!(h.contains(f), "{f}");
    }
}
