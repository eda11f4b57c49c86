use std::ffi::{c_char, CString};
use std::ptr;

use lipsmooth_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0u8; 256];
    let n = unsafe { ls_last_error(buf.as_mut_ptr() as *mut c_char, buf.len()) };
    buf.truncate(n.min(255));
    String::from_utf8(buf).unwrap()
}

fn disk() -> *mut LsAtlas {
    let s = CString::new("disk:radius=4,lipschitz=0.2").unwrap();
    let mut a = ptr::null_mut();
    assert_eq!(unsafe { ls_atlas_from_shape(s.as_ptr(), &mut a) }, LsStatus::Ok);
    a
}

#[test]
fn disk_roundtrip() {
    let a = disk();
    unsafe {
        assert_eq!(ls_atlas_dim(a), 2);
        assert!(ls_atlas_chart_count(a) > 0);
        let (mut l, mut r) = (0.0, 0.0);
        assert_eq!(ls_atlas_characteristic(a, &mut l, &mut r), LsStatus::Ok);
        assert_eq!(l, 0.2);
        assert!(r > 0.0);

        let x = [3.0, 0.0];
        let mut d = 0.0;
        assert_eq!(ls_atlas_depth(a, x.as_ptr(), 2, &mut d), LsStatus::Ok);
        assert!((d - 1.0).abs() < 1e-9);

        let mut ap = ptr::null_mut();
        assert_eq!(ls_approximation_new(a, 32.0, &mut ap), LsStatus::Ok);
        // the handle keeps the atlas alive
        ls_atlas_free(a);

        let on = [4.0, 0.0];
        let mut t = LsTriple::default();
        assert_eq!(ls_approximation_eval(ap, on.as_ptr(), 2, &mut t), LsStatus::Ok);
        assert!(t.outer < t.exact && t.exact < t.inner, "{t:?}");

        let mut region = LsRegion::Outside;
        let mut band = false;
        assert_eq!(ls_approximation_classify(ap, on.as_ptr(), 2, &mut region, &mut band), LsStatus::Ok);
        assert!(band);

        let xs = [3.9, 0.0, 0.0, 3.95, -2.0, 3.0];
        let mut out = [LsTriple::default(); 3];
        assert_eq!(ls_approximation_eval_many(ap, xs.as_ptr(), 3, out.as_mut_ptr(), ptr::null_mut()), LsStatus::Ok);
        for (k, o) in out.iter().enumerate() {
            let mut single = LsTriple::default();
            ls_approximation_eval(ap, xs[2 * k..].as_ptr(), 2, &mut single);
            assert_eq!(*o, single);
        }
        ls_approximation_free(ap);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut a = ptr::null_mut();
        let bad = CString::new("dodecahedron").unwrap();
        assert_eq!(ls_atlas_from_shape(bad.as_ptr(), &mut a), LsStatus::InvalidArgument);
        assert!(a.is_null());
        assert!(last_error().contains("dodecahedron"));

        assert_eq!(ls_atlas_from_shape(ptr::null(), &mut a), LsStatus::NullPointer);

        let spec = CString::new("dim 2\nlipschitz 1\nradius 0.9\nchart\n  base 0 0 $\nend\n").unwrap();
        assert_eq!(ls_atlas_from_spec(spec.as_ptr(), &mut a), LsStatus::Parse);

        let a = disk();
        let x = [1.0, 2.0, 3.0];
        let mut d = 0.0;
        assert_eq!(ls_atlas_depth(a, x.as_ptr(), 3, &mut d), LsStatus::InvalidArgument);
        let mut ap = ptr::null_mut();
        assert_eq!(ls_approximation_new(a, -1.0, &mut ap), LsStatus::InvalidArgument);
        assert!(ap.is_null());
        ls_atlas_free(a);
        ls_atlas_free(ptr::null_mut());
    }
}

#[test]
fn last_error_truncates() {
    unsafe {
        let mut a = ptr::null_mut();
        let bad = CString::new("nosuchshape").unwrap();
        ls_atlas_from_shape(bad.as_ptr(), &mut a);
        let mut buf = [0x7fu8; 4];
        let n = ls_last_error(buf.as_mut_ptr() as *mut c_char, 4);
        assert!(n > 3);
        assert_eq!(buf[3], 0);
        assert_eq!(ls_last_error(ptr::null_mut(), 0), n);
    }
}

#[test]
fn header_declares_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/lipsmooth.h")).unwrap();
    for f in ["ls_atlas_from_shape", "ls_approximation_eval_many", "ls_last_error", "LS_STATUS_OK", "LsTriple"] {
        assert!(h.contains(f), "{f} missing from header");
    }
}
