//! C ABI over `lipsmooth`.
//!
//! Every function returns an [`LsStatus`]. On failure the message is kept
//! per thread and can be copied out with [`ls_last_error`]. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use lipsmooth::defining::{Approximation, Region};
use lipsmooth::geometry::{load_spec, make_shape, parse_shape_arg, DomainAtlas, Point};
use lipsmooth::partition::BumpFamily;
use lipsmooth::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Geometry = 4,
    BelowM0 = 5,
    OutsideDomain = 6,
    NoConvergence = 7,
    Io = 8,
    Unsupported = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LsRegion {
    Inner = 0,
    OmegaMinusInner = 1,
    OuterMinusOmega = 2,
    Outside = 3,
    OnBoundary = 4,
}

/// Values of the inner, exact and outer defining functions at one point.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LsTriple {
    pub inner: f64,
    pub exact: f64,
    pub outer: f64,
}

/// Domain atlas with its partition of unity.
pub struct LsAtlas {
    atlas: Arc<DomainAtlas>,
    bumps: Arc<BumpFamily>,
}

/// Regularized defining functions for one m.
pub struct LsApproximation {
    inner: Approximation,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> LsStatus {
    match e {
        Error::UnknownShape(_) | Error::InvalidParameter(_) | Error::RadiusTooLarge { .. } => LsStatus::InvalidArgument,
        Error::Parse { .. } => LsStatus::Parse,
        Error::NotGraphical(_) | Error::Covering(_) | Error::Geometry { .. } | Error::Margin { .. } => LsStatus::Geometry,
        Error::BelowM0(_) => LsStatus::BelowM0,
        Error::OutsideDomain(_) | Error::OutsideW => LsStatus::OutsideDomain,
        Error::NoConvergence(_) => LsStatus::NoConvergence,
        Error::Io(_) | Error::Json(_) => LsStatus::Io,
        Error::Unsupported(_) => LsStatus::Unsupported,
    }
}

fn fail(status: LsStatus, msg: impl Into<String>) -> LsStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, records its error and turns panics into `Panic`.
fn guard(f: impl FnOnce() -> Result<(), LsStatus>) -> LsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LsStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(LsStatus::Panic, msg)
        }
    }
}

fn lib(e: Error) -> LsStatus {
    let s = status_of(&e);
    fail(s, e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, LsStatus> {
    if p.is_null() {
        return Err(fail(LsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(LsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn point_arg(x: *const f64, n: usize, dim: usize) -> Result<Point, LsStatus> {
    if x.is_null() {
        return Err(fail(LsStatus::NullPointer, "point is null"));
    }
    if n != dim {
        return Err(fail(LsStatus::InvalidArgument, format!("point has {n} coordinates, the domain is {dim}-dimensional")));
    }
    let mut p = Point::zeros();
    for (i, v) in std::slice::from_raw_parts(x, n).iter().enumerate() {
        p[i] = *v;
    }
    Ok(p)
}

fn finish_atlas(atlas: DomainAtlas, out: *mut *mut LsAtlas) -> Result<(), LsStatus> {
    let bumps = BumpFamily::build(&atlas).map_err(lib)?;
    let h = Box::new(LsAtlas { atlas: Arc::new(atlas), bumps: Arc::new(bumps) });
    unsafe { *out = Box::into_raw(h) };
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ls_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            ptr::copy_nonoverlapping(e.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ls_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Builds a library shape such as `disk:radius=4,lipschitz=0.2`.
///
/// # Safety
/// `shape` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_atlas_from_shape(shape: *const c_char, out: *mut *mut LsAtlas) -> LsStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(LsStatus::NullPointer, "out is null"));
        }
        *out = ptr::null_mut();
        let s = str_arg(shape, "shape")?;
        let (name, params) = parse_shape_arg(s).map_err(lib)?;
        finish_atlas(make_shape(&name, &params).map_err(lib)?, out)
    })
}

/// Builds an atlas from the text of a domain spec file.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_atlas_from_spec(text: *const c_char, out: *mut *mut LsAtlas) -> LsStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(LsStatus::NullPointer, "out is null"));
        }
        *out = ptr::null_mut();
        let s = str_arg(text, "text")?;
        finish_atlas(load_spec(s).map_err(lib)?, out)
    })
}

/// # Safety
/// `atlas` must be null or a handle from `ls_atlas_from_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ls_atlas_free(atlas: *mut LsAtlas) {
    if !atlas.is_null() {
        drop(Box::from_raw(atlas));
    }
}

/// Dimension (2 or 3); 0 for a null handle.
///
/// # Safety
/// `atlas` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ls_atlas_dim(atlas: *const LsAtlas) -> usize {
    atlas.as_ref().map_or(0, |a| a.atlas.dim)
}

/// Number of charts; 0 for a null handle.
///
/// # Safety
/// `atlas` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ls_atlas_chart_count(atlas: *const LsAtlas) -> usize {
    atlas.as_ref().map_or(0, |a| a.atlas.len())
}

/// Lipschitz constant and chart radius of the atlas.
///
/// # Safety
/// `atlas` must be a live handle; the out pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn ls_atlas_characteristic(
    atlas: *const LsAtlas,
    lipschitz: *mut f64,
    radius: *mut f64,
) -> LsStatus {
    guard(|| {
        let a = atlas.as_ref().ok_or_else(|| fail(LsStatus::NullPointer, "atlas is null"))?;
        if let Some(l) = lipschitz.as_mut() {
            *l = a.atlas.lipschitz();
        }
        if let Some(r) = radius.as_mut() {
            *r = a.atlas.radius();
        }
        Ok(())
    })
}

/// Depth of `x` below the boundary (positive inside).
///
/// # Safety
/// `atlas` must be a live handle, `x` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ls_atlas_depth(atlas: *const LsAtlas, x: *const f64, n: usize, out: *mut f64) -> LsStatus {
    guard(|| {
        let a = atlas.as_ref().ok_or_else(|| fail(LsStatus::NullPointer, "atlas is null"))?;
        let out = out.as_mut().ok_or_else(|| fail(LsStatus::NullPointer, "out is null"))?;
        let p = point_arg(x, n, a.atlas.dim)?;
        *out = a.atlas.model.depth(&p);
        Ok(())
    })
}

/// Regularizes the atlas at parameter `m`. The handle keeps the atlas alive.
///
/// # Safety
/// `atlas` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_approximation_new(atlas: *const LsAtlas, m: f64, out: *mut *mut LsApproximation) -> LsStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(LsStatus::NullPointer, "out is null"));
        }
        *out = ptr::null_mut();
        let a = atlas.as_ref().ok_or_else(|| fail(LsStatus::NullPointer, "atlas is null"))?;
        if !(m > 0.0) || !m.is_finite() {
            return Err(fail(LsStatus::InvalidArgument, format!("m must be positive, got {m}")));
        }
        let ap = Approximation::new(a.atlas.clone(), a.bumps.clone(), m).map_err(lib)?;
        *out = Box::into_raw(Box::new(LsApproximation { inner: ap }));
        Ok(())
    })
}

/// # Safety
/// `ap` must be null or a handle from `ls_approximation_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ls_approximation_free(ap: *mut LsApproximation) {
    if !ap.is_null() {
        drop(Box::from_raw(ap));
    }
}

/// Evaluates the three defining functions at `x`.
///
/// # Safety
/// `ap` must be a live handle, `x` must point to `n` doubles, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ls_approximation_eval(
    ap: *const LsApproximation,
    x: *const f64,
    n: usize,
    out: *mut LsTriple,
) -> LsStatus {
    guard(|| {
        let ap = &ap.as_ref().ok_or_else(|| fail(LsStatus::NullPointer, "approximation is null"))?.inner;
        let out = out.as_mut().ok_or_else(|| fail(LsStatus::NullPointer, "out is null"))?;
        let p = point_arg(x, n, ap.atlas.dim)?;
        let t = ap.triple(&p).map_err(lib)?;
        *out = LsTriple { inner: t.inner, exact: t.exact, outer: t.outer };
        Ok(())
    })
}

/// Evaluates `count` points stored row-major (`count * dim` doubles).
/// Stops at the first failing point and reports its index in `failed_at`.
///
/// # Safety
/// `xs` must point to `count * dim` doubles and `out` to `count` triples.
/// `failed_at` may be null.
#[no_mangle]
pub unsafe extern "C" fn ls_approximation_eval_many(
    ap: *const LsApproximation,
    xs: *const f64,
    count: usize,
    out: *mut LsTriple,
    failed_at: *mut usize,
) -> LsStatus {
    guard(|| {
        let ap = &ap.as_ref().ok_or_else(|| fail(LsStatus::NullPointer, "approximation is null"))?.inner;
        if count == 0 {
            return Ok(());
        }
        if xs.is_null() || out.is_null() {
            return Err(fail(LsStatus::NullPointer, "points or output is null"));
        }
        let dim = ap.atlas.dim;
        let out = std::slice::from_raw_parts_mut(out, count);
        for (k, o) in out.iter_mut().enumerate() {
            let p = point_arg(xs.add(k * dim), dim, dim)?;
            match ap.triple(&p) {
                Ok(t) => *o = LsTriple { inner: t.inner, exact: t.exact, outer: t.outer },
                Err(e) => {
                    if let Some(f) = failed_at.as_mut() {
                        *f = k;
                    }
                    return Err(lib(e));
                }
            }
        }
        Ok(())
    })
}

/// Region of `x` relative to the inner, exact and outer domains, and whether
/// it lies in the band between the approximating boundaries.
///
/// # Safety
/// `ap` must be a live handle, `x` must point to `n` doubles; `band` may be null.
#[no_mangle]
pub unsafe extern "C" fn ls_approximation_classify(
    ap: *const LsApproximation,
    x: *const f64,
    n: usize,
    region: *mut LsRegion,
    band: *mut bool,
) -> LsStatus {
    guard(|| {
        let ap = &ap.as_ref().ok_or_else(|| fail(LsStatus::NullPointer, "approximation is null"))?.inner;
        let region = region.as_mut().ok_or_else(|| fail(LsStatus::NullPointer, "region is null"))?;
        let p = point_arg(x, n, ap.atlas.dim)?;
        let c = ap.classify(&p);
        *region = match c.region {
            Region::Inner => LsRegion::Inner,
            Region::OmegaMinusInner => LsRegion::OmegaMinusInner,
            Region::OuterMinusOmega => LsRegion::OuterMinusOmega,
            Region::Outside => LsRegion::Outside,
            Region::OnBoundary => LsRegion::OnBoundary,
        };
        if let Some(b) = band.as_mut() {
            *b = c.band;
        }
        Ok(())
    })
}
