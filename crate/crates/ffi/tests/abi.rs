use std::ffi::CStr;
use std::ptr;

use nbsc_ffi::*;

struct Handle(*mut NbscEnsemble);

impl Handle {
    fn new(dv: usize, dc: usize, m: usize) -> Self {
        let mut raw = ptr::null_mut();
        let st = unsafe { nbsc_ensemble_new(dv, dc, m, &mut raw) };
        assert_eq!(st, NbscStatus::Ok);
        Handle(raw)
    }
}

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { nbsc_ensemble_free(self.0) }
    }
}

fn last_error() -> String {
    let mut buf = [0 as std::ffi::c_char; 256];
    unsafe {
        nbsc_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn thresholds_through_the_abi() {
    let h = Handle::new(3, 6, 1);
    let cfg = nbsc_config_default();
    let mut bp = 0.0;
    assert_eq!(unsafe { nbsc_bp_threshold(h.0, &cfg, &mut bp) }, NbscStatus::Ok);
    assert!((bp - 0.42944).abs() < 1e-4, "{bp}");

    let (mut star, mut bp2) = (0.0, 0.0);
    assert_eq!(unsafe { nbsc_potential_threshold(h.0, &cfg, &mut star, &mut bp2) }, NbscStatus::Ok);
    assert!((star - 0.48815).abs() < 1e-3, "{star}");
    assert!(star >= bp2);

    let coarse = NbscConfig {
        bisect_tol: 1e-3,
        ..cfg
    };
    let mut coupled = 0.0;
    let st = unsafe { nbsc_bp_threshold_coupled(h.0, 30, 3, &coarse, 0.0, &mut coupled) };
    assert_eq!(st, NbscStatus::Ok);
    assert!(coupled > bp && coupled < star + 0.01, "{coupled}");
}

#[test]
fn potential_matches_scalar_closed_form() {
    let h = Handle::new(3, 6, 1);
    let mut u = 0.0;
    let x = [0.1];
    assert_eq!(unsafe { nbsc_potential(h.0, x.as_ptr(), 1, 0.45, &mut u) }, NbscStatus::Ok);
    let g: f64 = 1.0 - 0.9f64.powi(5);
    let big_g = 0.1 - (1.0 - 0.9f64.powi(6)) / 6.0;
    let expected = g * 0.1 - big_g - 0.45 * g.powi(3) / 3.0;
    assert!((u - expected).abs() < 1e-10, "{u} vs {expected}");

    let st = unsafe { nbsc_potential(h.0, x.as_ptr(), 2, 0.45, &mut u) };
    assert_eq!(st, NbscStatus::InvalidArgument);
}

#[test]
fn errors_are_reported_not_raised() {
    let h = Handle::new(3, 6, 2);
    let mut out = 0.0;
    let cfg = NbscConfig {
        bisect_tol: -1.0,
        ..nbsc_config_default()
    };
    let st = unsafe { nbsc_bp_threshold(h.0, &cfg, &mut out) };
    assert_eq!(st, NbscStatus::InvalidArgument);
    assert!(!last_error().is_empty());

    let st = unsafe { nbsc_bp_threshold_coupled(h.0, 0, 3, ptr::null(), 0.0, &mut out) };
    assert_eq!(st, NbscStatus::InvalidArgument);

    let st = unsafe { nbsc_bp_threshold_coupled(h.0, 200, 3, ptr::null(), 1e-6, &mut out) };
    assert_eq!(st, NbscStatus::Timeout);

    let mut small = [0.0; 3];
    let st = unsafe { nbsc_potential_d(h.0, small.as_mut_ptr(), 3) };
    assert_eq!(st, NbscStatus::BufferTooSmall);

    assert_eq!(unsafe { nbsc_potential_threshold(h.0, ptr::null(), ptr::null_mut(), &mut out) }, NbscStatus::NullPointer);

    let mut tiny = [0 as std::ffi::c_char; 4];
    let full = unsafe { nbsc_last_error(tiny.as_mut_ptr(), tiny.len()) };
    assert!(full > 3);
    assert_eq!(unsafe { CStr::from_ptr(tiny.as_ptr()) }.to_bytes().len(), 3);
}
