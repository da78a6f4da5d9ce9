use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use watermark_ffi::*;

fn last_error() -> String {
    let p = wm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn scalar_model() -> *mut WmModel {
    let (a, b, c, q, r) = ([0.5], [1.0], [1.0], [1.0], [1.0]);
    let mut model = ptr::null_mut();
    let status = unsafe {
        wm_model_new(1, 1, 1, a.as_ptr(), b.as_ptr(), c.as_ptr(), q.as_ptr(), r.as_ptr(), &mut model)
    };
    assert_eq!(status, WmStatus::Ok);
    model
}

#[test]
fn scalar_design_through_c_abi() {
    let model = scalar_model();
    let mut design = ptr::null_mut();
    assert_eq!(unsafe { wm_design_new(model, 1.0, 0, &mut design) }, WmStatus::Ok);
    let mut u = [0.0];
    assert_eq!(unsafe { wm_design_u_star(design, u.as_mut_ptr(), 1) }, WmStatus::Ok);
    assert!((u[0] - 3.0 / 7.0).abs() < 1e-12);
    let mut info = WmDesignInfo::default();
    assert_eq!(unsafe { wm_design_info(design, &mut info) }, WmStatus::Ok);
    assert!((info.j0 - 7.0 / 3.0).abs() < 1e-12);
    assert_eq!(unsafe { wm_design_u_star(design, u.as_mut_ptr(), 4) }, WmStatus::DimensionMismatch);
    unsafe {
        wm_design_free(design);
        wm_model_free(model);
    }
}

#[test]
fn errors_are_reported() {
    let a = [1.5];
    let one = [1.0];
    let mut model = ptr::null_mut();
    let status = unsafe {
        wm_model_new(1, 1, 1, a.as_ptr(), one.as_ptr(), one.as_ptr(), one.as_ptr(), one.as_ptr(), &mut model)
    };
    assert_eq!(status, WmStatus::Unstable);
    assert!(model.is_null());
    assert!(last_error().contains("1.5"));

    let status = unsafe { wm_model_dims(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(status, WmStatus::NullPointer);

    let bad = CString::new("{not json").unwrap();
    assert_eq!(unsafe { wm_model_from_json(bad.as_ptr(), &mut model) }, WmStatus::Parse);

    let mut learner = ptr::null_mut();
    assert_eq!(unsafe { wm_learner_new(1, 1, 1, 1.5, 1.0, 1, &mut learner) }, WmStatus::InvalidArgument);
}

#[test]
fn random_model_dims() {
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { wm_model_random(4, 5, 3, 2, 0.9, &mut model) }, WmStatus::Ok);
    let (mut n, mut m, mut p) = (0, 0, 0);
    assert_eq!(unsafe { wm_model_dims(model, &mut n, &mut m, &mut p) }, WmStatus::Ok);
    assert_eq!((n, m, p), (5, 3, 2));
    unsafe { wm_model_free(model) };
}

#[test]
fn learner_checkpoint_round_trip() {
    let mut learner = ptr::null_mut();
    assert_eq!(unsafe { wm_learner_new(1, 1, 1, 0.5, 1.0, 1, &mut learner) }, WmStatus::Ok);
    let mut x = 0.0;
    let step = |l: *mut WmLearner, x: &mut f64, i: usize| -> (f64, f64) {
        let zeta = [((i as f64) * 0.37).sin()];
        let mut phi = [0.0];
        assert_eq!(unsafe { wm_learner_next_watermark(l, zeta.as_ptr(), phi.as_mut_ptr(), 1) }, WmStatus::Ok);
        *x = 0.5 * *x + phi[0] + 0.3 * ((i as f64) * 1.3).cos();
        let y = [*x + 0.2 * ((i as f64) * 2.1).sin()];
        let mut g = f64::NAN;
        let mut gate = -1;
        assert_eq!(unsafe { wm_learner_observe(l, y.as_ptr(), 1, &mut g, &mut gate) }, WmStatus::Ok);
        assert!(gate == 0 || gate == 1);
        (phi[0], g)
    };
    for i in 0..50 {
        step(learner, &mut x, i);
    }
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { wm_learner_checkpoint(learner, &mut json) }, WmStatus::Ok);
    let mut restored = ptr::null_mut();
    assert_eq!(unsafe { wm_learner_restore(json, &mut restored) }, WmStatus::Ok);
    let mut x2 = x;
    for i in 50..80 {
        let a = step(learner, &mut x, i);
        let b = step(restored, &mut x2, i);
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.to_bits(), b.1.to_bits());
    }
    unsafe {
        wm_string_free(json);
        wm_learner_free(learner);
        wm_learner_free(restored);
    }
}

#[test]
fn observe_before_watermark_fails() {
    let mut learner = ptr::null_mut();
    assert_eq!(unsafe { wm_learner_new(1, 1, 1, 0.5, 1.0, 1, &mut learner) }, WmStatus::Ok);
    let y = [0.0];
    let status = unsafe { wm_learner_observe(learner, y.as_ptr(), 1, ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(status, WmStatus::InvalidArgument);
    unsafe { wm_learner_free(learner) };
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/watermark.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["wm_model_new", "wm_design_u_star", "wm_learner_observe", "wm_last_error", "typedef struct WmModel WmModel"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-x", "c", "-std=c99"])
        .arg(&header)
        .output()
    else {
        eprintln!("no C compiler, skipping syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
