//! C interface to the recognition library.
//!
//! Objects cross the boundary as opaque handles created by `tp_*_new` or
//! `tp_*_load` and released with the matching `tp_*_free`. Every fallible
//! call returns a [`TpStatus`]; on failure, [`tp_last_error`] describes the
//! most recent error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use tpsearch::geometry::unit;
use tpsearch::index::GeomHashIndex;
use tpsearch::likelihood::LikelihoodParams;
use tpsearch::relation::{delta_map, phi_score, DensityModel};
use tpsearch::search::{recognize_sequential, Outcome, SearchConfig};
use tpsearch::{solve_rigid_from_triple, Error, ObjectModel, Point3, RangeScan};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Degenerate = 5,
    UnknownClass = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

pub struct TpScan(RangeScan);
pub struct TpModel(ObjectModel);
pub struct TpDensity(DensityModel);
pub struct TpIndex(GeomHashIndex);

/// Search and likelihood parameters. Start from
/// [`tp_search_params_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct TpSearchParams {
    /// Acceptance threshold on L.
    pub theta: f64,
    /// Candidate threshold on Φ; NaN keeps every feature value.
    pub xi: f64,
    /// Cap on likelihood evaluations per object; 0 means no cap.
    pub max_hypotheses: usize,
    pub max_objects: usize,
    pub a: f64,
    pub b: f64,
    pub delta_s: f64,
    pub volume_unit: f64,
    pub seed: u64,
}

/// One recognised object.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct TpObject {
    pub class_id: u32,
    /// Rotation as a unit quaternion `w, x, y, z`.
    pub rotation: [f64; 4],
    /// Translation (mm).
    pub translation: [f64; 3],
    pub log_likelihood: f64,
    pub tp: f64,
    pub evaluations: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> TpStatus {
    match e {
        Error::Io { .. } => TpStatus::Io,
        Error::Parse { .. } => TpStatus::Parse,
        Error::DegenerateTriple(_) | Error::DegenerateFit | Error::InsufficientSupport { .. } => {
            TpStatus::Degenerate
        }
        Error::UnknownClass(_) | Error::UnknownObject(_) => TpStatus::UnknownClass,
        _ => TpStatus::InvalidArgument,
    }
}

fn fail(status: TpStatus, msg: &str) -> TpStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (TpStatus, String)>) -> TpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TpStatus::Ok,
        Ok(Err((s, m))) => fail(s, &m),
        Err(_) => fail(TpStatus::Panic, "internal panic"),
    }
}

fn lib(e: Error) -> (TpStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (TpStatus, String) {
    (TpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn point(p: *const f64) -> Point3 {
    let s = std::slice::from_raw_parts(p, 3);
    Point3::new(s[0], s[1], s[2])
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, (TpStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| (TpStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a scan from `n` points stored as `x y z` triples.
///
/// # Safety
/// `points` must hold `3 * n` doubles, `gaze` three doubles, and `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn tp_scan_new(
    points: *const f64,
    n: usize,
    gaze: *const f64,
    out: *mut *mut TpScan,
) -> TpStatus {
    guard(|| {
        if out.is_null() || gaze.is_null() || (points.is_null() && n > 0) {
            return Err(null("argument"));
        }
        let pts: Vec<Point3> = (0..n).map(|i| point(points.add(3 * i))).collect();
        let g = point(gaze);
        let g = unit(g.x, g.y, g.z).map_err(lib)?;
        let scan = RangeScan::new(pts, g).map_err(lib)?;
        emit(out, TpScan(scan));
        Ok(())
    })
}

/// Reads a scan file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tp_scan_load(path: *const c_char, out: *mut *mut TpScan) -> TpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let scan = RangeScan::load(path_arg(path)?).map_err(lib)?;
        emit(out, TpScan(scan));
        Ok(())
    })
}

/// Number of points in a scan, 0 for a null handle.
///
/// # Safety
/// `scan` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tp_scan_len(scan: *const TpScan) -> usize {
    scan.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `scan` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tp_scan_free(scan: *mut TpScan) {
    if !scan.is_null() {
        drop(Box::from_raw(scan));
    }
}

/// Reads an object model file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tp_model_load(path: *const c_char, out: *mut *mut TpModel) -> TpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = ObjectModel::load(path_arg(path)?).map_err(lib)?;
        emit(out, TpModel(m));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tp_model_free(model: *mut TpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Reads a density file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tp_density_load(
    path: *const c_char,
    out: *mut *mut TpDensity,
) -> TpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let d = DensityModel::load(path_arg(path)?).map_err(lib)?;
        emit(out, TpDensity(d));
        Ok(())
    })
}

/// # Safety
/// `density` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tp_density_free(density: *mut TpDensity) {
    if !density.is_null() {
        drop(Box::from_raw(density));
    }
}

/// Reads an index file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tp_index_load(path: *const c_char, out: *mut *mut TpIndex) -> TpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let i = GeomHashIndex::load(path_arg(path)?).map_err(lib)?;
        emit(out, TpIndex(i));
        Ok(())
    })
}

/// # Safety
/// `index` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tp_index_free(index: *mut TpIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Δ coordinates `(r, d, a)` of the triangle `x1 x2 x3` about `c`.
///
/// # Safety
/// `c`, `x1`, `x2`, `x3` and `gaze` must each hold three doubles and `out`
/// must have room for three.
#[no_mangle]
pub unsafe extern "C" fn tp_delta_map(
    c: *const f64,
    x1: *const f64,
    x2: *const f64,
    x3: *const f64,
    radius: f64,
    gaze: *const f64,
    out: *mut f64,
) -> TpStatus {
    guard(|| {
        if [c, x1, x2, x3, gaze].iter().any(|p| p.is_null()) || out.is_null() {
            return Err(null("argument"));
        }
        let g = point(gaze);
        let g = unit(g.x, g.y, g.z).map_err(lib)?;
        let d =
            delta_map(&point(c), &point(x1), &point(x2), &point(x3), radius, &g).map_err(lib)?;
        std::slice::from_raw_parts_mut(out, 3).copy_from_slice(&d.as_array());
        Ok(())
    })
}

/// Φ of shape class `shape` at location `f`.
///
/// # Safety
/// `scan` and `density` must be live handles, `f` must hold three doubles
/// and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tp_phi_score(
    scan: *const TpScan,
    density: *const TpDensity,
    shape: u32,
    f: *const f64,
    seed: u64,
    out: *mut f64,
) -> TpStatus {
    guard(|| {
        let (Some(s), Some(d)) = (scan.as_ref(), density.as_ref()) else {
            return Err(null("handle"));
        };
        if f.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        *out = phi_score(&s.0, shape, &point(f), &d.0, seed).map_err(lib)?;
        Ok(())
    })
}

/// Rigid pose taking the three `src` points onto `dst`, as a quaternion
/// `w x y z` and a translation.
///
/// # Safety
/// `src` and `dst` must hold nine doubles each, `rotation` room for four and
/// `translation` room for three.
#[no_mangle]
pub unsafe extern "C" fn tp_solve_rigid(
    src: *const f64,
    dst: *const f64,
    rotation: *mut f64,
    translation: *mut f64,
) -> TpStatus {
    guard(|| {
        if src.is_null() || dst.is_null() || rotation.is_null() || translation.is_null() {
            return Err(null("argument"));
        }
        let s = [point(src), point(src.add(3)), point(src.add(6))];
        let d = [point(dst), point(dst.add(3)), point(dst.add(6))];
        let pose = solve_rigid_from_triple(&s, &d).map_err(lib)?;
        let q = pose.quaternion();
        std::slice::from_raw_parts_mut(rotation, 4).copy_from_slice(&[q.w, q.i, q.j, q.k]);
        std::slice::from_raw_parts_mut(translation, 3).copy_from_slice(pose.translation.as_slice());
        Ok(())
    })
}

/// Library defaults for [`TpSearchParams`].
#[no_mangle]
pub extern "C" fn tp_search_params_default() -> TpSearchParams {
    let s = SearchConfig::default();
    let l = LikelihoodParams::default();
    TpSearchParams {
        theta: s.theta,
        xi: s.xi.unwrap_or(f64::NAN),
        max_hypotheses: s.max_hypotheses.unwrap_or(0),
        max_objects: 1,
        a: l.a,
        b: l.b,
        delta_s: l.delta_s,
        volume_unit: l.volume_unit,
        seed: 0,
    }
}

/// Sequential recognition. Writes up to `capacity` objects to `out` and
/// their number to `found`; a scan with no accepted object gives
/// `found = 0` and `TP_STATUS_OK`.
///
/// # Safety
/// All handles must be live, `models` must hold `n_models` handles, `out`
/// must have room for `capacity` objects and `found` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn tp_recognize(
    scan: *const TpScan,
    models: *const *const TpModel,
    n_models: usize,
    density: *const TpDensity,
    index: *const TpIndex,
    params: *const TpSearchParams,
    out: *mut TpObject,
    capacity: usize,
    found: *mut usize,
) -> TpStatus {
    guard(|| {
        let (Some(s), Some(d), Some(i), Some(p)) = (
            scan.as_ref(),
            density.as_ref(),
            index.as_ref(),
            params.as_ref(),
        ) else {
            return Err(null("handle"));
        };
        if found.is_null() || (out.is_null() && capacity > 0) || (models.is_null() && n_models > 0)
        {
            return Err(null("argument"));
        }
        let mut ms = Vec::with_capacity(n_models);
        for k in 0..n_models {
            let m = (*models.add(k))
                .as_ref()
                .ok_or_else(|| null("model handle"))?;
            ms.push(m.0.clone());
        }
        let cfg = SearchConfig {
            theta: p.theta,
            xi: (!p.xi.is_nan()).then_some(p.xi),
            max_hypotheses: (p.max_hypotheses > 0).then_some(p.max_hypotheses),
            ..SearchConfig::default()
        };
        let lp = LikelihoodParams {
            a: p.a,
            b: p.b,
            delta_s: p.delta_s,
            volume_unit: p.volume_unit,
            ..LikelihoodParams::default()
        };
        let results = recognize_sequential(&s.0, &ms, &d.0, &i.0, &lp, &cfg, p.seed, p.max_objects)
            .map_err(lib)?;
        let objects: Vec<TpObject> = results
            .iter()
            .filter_map(|r| match &r.outcome {
                Outcome::Accepted {
                    class_id,
                    pose,
                    l,
                    tp,
                } => {
                    let q = pose.quaternion();
                    let t = pose.translation;
                    Some(TpObject {
                        class_id: *class_id,
                        rotation: [q.w, q.i, q.j, q.k],
                        translation: [t.x, t.y, t.z],
                        log_likelihood: *l,
                        tp: *tp,
                        evaluations: r.evaluations,
                    })
                }
                _ => None,
            })
            .collect();
        *found = objects.len();
        if objects.len() > capacity {
            return Err((
                TpStatus::BufferTooSmall,
                format!("{} objects found, room for {capacity}", objects.len()),
            ));
        }
        if !objects.is_empty() {
            ptr::copy_nonoverlapping(objects.as_ptr(), out, objects.len());
        }
        Ok(())
    })
}
