//! C ABI over the `apkinetic` solver.
//!
//! Objects are opaque heap handles created by `apk_*_new`/`apk_*_builtin`
//! style functions and released with the matching `apk_*_free`. Every
//! fallible call returns an [`ApkStatus`]; the message of the most recent
//! failure on the calling thread is available from
//! [`apk_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use apkinetic::collision::{kernel_from_env, CollisionBackend, CALIBRATED_B0};
use apkinetic::integrator::{imex_step_homogeneous, StepperConfig};
use apkinetic::limits::{bkw, BkwParams};
use apkinetic::tableaux::{resolve_pair, ImexPair};
use apkinetic::velocity::{l1_distance, moments, GridFunction, VelocityGrid2D};
use apkinetic::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownScheme = 3,
    BlowUp = 4,
    Numerical = 5,
    Io = 6,
    Panic = 7,
}

/// Collision model selector for [`apk_stepper_new`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApkBackend {
    Boltzmann = 0,
    Bgk = 1,
    Disabled = 2,
}

/// Opaque IMEX pair.
pub struct ApkPair(ImexPair);

/// Opaque distribution on a 2D velocity grid.
pub struct ApkGridFunction(GridFunction);

/// Opaque homogeneous stepper.
pub struct ApkStepper(StepperConfig);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> ApkStatus {
    match e {
        Error::UnknownScheme { .. } => ApkStatus::UnknownScheme,
        Error::BlowUp { .. } => ApkStatus::BlowUp,
        Error::Io { .. } => ApkStatus::Io,
        e if e.is_config() => ApkStatus::InvalidArgument,
        Error::UnsupportedOrder(_) | Error::GridMismatch(_) => ApkStatus::InvalidArgument,
        _ => ApkStatus::Numerical,
    }
}

/// Runs `body`, converting errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), (ApkStatus, String)>) -> ApkStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            ApkStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            ApkStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (ApkStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (ApkStatus, String) {
    (ApkStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (ApkStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (ApkStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut *mut T, what: &str) -> Result<&'a mut *mut T, (ApkStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (ApkStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn apk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn apk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Resolves a builtin scheme name or a tableau file path.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn apk_pair_resolve(name: *const c_char, out: *mut *mut ApkPair) -> ApkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let pair = resolve_pair(str_arg(name, "name")?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(ApkPair(pair)));
        Ok(())
    })
}

/// # Safety
/// `pair` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn apk_pair_free(pair: *mut ApkPair) {
    if !pair.is_null() {
        drop(Box::from_raw(pair));
    }
}

/// Number of stages, or 0 for a null handle.
///
/// # Safety
/// `pair` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn apk_pair_stages(pair: *const ApkPair) -> usize {
    pair.as_ref().map_or(0, |p| p.0.stages())
}

/// 1 when the pair is globally stiffly accurate, 0 otherwise.
///
/// # Safety
/// `pair` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn apk_pair_is_gsa(pair: *const ApkPair) -> i32 {
    pair.as_ref().map_or(0, |p| i32::from(p.0.is_gsa()))
}

/// BKW solution at time `t` on the `n × n` grid over `[-v_max, v_max)²`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn apk_grid_function_bkw(
    n: usize,
    v_max: f64,
    t: f64,
    sigma: f64,
    out: *mut *mut ApkGridFunction,
) -> ApkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let grid = VelocityGrid2D::new(n, v_max).map_err(lib_err)?;
        let params = BkwParams::new(sigma).map_err(lib_err)?;
        if !(t >= 0.0) {
            return Err((ApkStatus::InvalidArgument, format!("t must be nonnegative, got {t}")));
        }
        *out = Box::into_raw(Box::new(ApkGridFunction(bkw(&grid, t, &params))));
        Ok(())
    })
}

/// Copies `len = n*n` row-major values (x index outer) into a new handle.
///
/// # Safety
/// `values` must point to `len` doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn apk_grid_function_from_values(
    n: usize,
    v_max: f64,
    values: *const f64,
    len: usize,
    out: *mut *mut ApkGridFunction,
) -> ApkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if values.is_null() {
            return Err(null("values"));
        }
        let grid = VelocityGrid2D::new(n, v_max).map_err(lib_err)?;
        let data = std::slice::from_raw_parts(values, len).to_vec();
        let f = GridFunction::from_values(grid, data).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(ApkGridFunction(f)));
        Ok(())
    })
}

/// # Safety
/// `f` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn apk_grid_function_free(f: *mut ApkGridFunction) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Number of nodes, or 0 for a null handle.
///
/// # Safety
/// `f` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn apk_grid_function_len(f: *const ApkGridFunction) -> usize {
    f.as_ref().map_or(0, |f| f.0.values().len())
}

/// Copies the node values into `buf`, which must hold exactly
/// `apk_grid_function_len(f)` doubles.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn apk_grid_function_values(f: *const ApkGridFunction, buf: *mut f64, len: usize) -> ApkStatus {
    guard(|| {
        let f = handle(f, "f")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let v = f.0.values();
        if len != v.len() {
            return Err((ApkStatus::InvalidArgument, format!("buffer holds {len}, need {}", v.len())));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(v);
        Ok(())
    })
}

/// Writes `(ρ, w_x, w_y, T)` into `out[0..4]`.
///
/// # Safety
/// `out` must point to 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn apk_grid_function_moments(f: *const ApkGridFunction, out: *mut f64) -> ApkStatus {
    guard(|| {
        let f = handle(f, "f")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let m = moments(&f.0).map_err(lib_err)?;
        std::slice::from_raw_parts_mut(out, 4).copy_from_slice(&[m.rho, m.w[0], m.w[1], m.temperature]);
        Ok(())
    })
}

/// L1 distance between two functions on the same grid.
///
/// # Safety
/// Handles must be live; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn apk_l1_distance(
    f: *const ApkGridFunction,
    g: *const ApkGridFunction,
    out: *mut f64,
) -> ApkStatus {
    guard(|| {
        let (f, g) = (handle(f, "f")?, handle(g, "g")?);
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = l1_distance(&f.0, &g.0).map_err(lib_err)?;
        Ok(())
    })
}

/// Homogeneous stepper. The Boltzmann backend builds (or loads from
/// `APKINETIC_CACHE_DIR`) the kernel table for the `n × n` grid with the
/// calibrated kernel constant; `n` and `v_max` are ignored otherwise.
///
/// # Safety
/// `pair` must be a live handle; `out` a valid pointer. The pair is copied.
#[no_mangle]
pub unsafe extern "C" fn apk_stepper_new(
    pair: *const ApkPair,
    dt: f64,
    eps: f64,
    backend: ApkBackend,
    kappa: f64,
    n: usize,
    v_max: f64,
    out: *mut *mut ApkStepper,
) -> ApkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let pair = handle(pair, "pair")?;
        let backend = match backend {
            ApkBackend::Boltzmann => {
                let grid = VelocityGrid2D::new(n, v_max).map_err(lib_err)?;
                CollisionBackend::boltzmann(Arc::new(kernel_from_env(&grid, CALIBRATED_B0).map_err(lib_err)?))
            }
            ApkBackend::Bgk => CollisionBackend::bgk(),
            ApkBackend::Disabled => CollisionBackend::Disabled,
        };
        let backend = if matches!(backend, CollisionBackend::Disabled) {
            backend
        } else {
            backend.with_kappa(kappa).map_err(lib_err)?
        };
        let cfg = StepperConfig::new(pair.0.clone(), dt, eps, backend).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(ApkStepper(cfg)));
        Ok(())
    })
}

/// # Safety
/// `stepper` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn apk_stepper_free(stepper: *mut ApkStepper) {
    if !stepper.is_null() {
        drop(Box::from_raw(stepper));
    }
}

/// One step from `f`; the result is a new handle in `out`.
///
/// # Safety
/// Handles must be live; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn apk_stepper_step(
    stepper: *const ApkStepper,
    f: *const ApkGridFunction,
    out: *mut *mut ApkGridFunction,
) -> ApkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let (s, f) = (handle(stepper, "stepper")?, handle(f, "f")?);
        let next = imex_step_homogeneous(&f.0, &s.0).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(ApkGridFunction(next)));
        Ok(())
    })
}

/// Writes a grid function as CSV (`vx,vy,f`).
///
/// # Safety
/// `f` must be live; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn apk_grid_function_write(f: *const ApkGridFunction, path: *const c_char) -> ApkStatus {
    guard(|| {
        let f = handle(f, "f")?;
        let path = str_arg(path, "path")?;
        apkinetic::velocity::write_snapshot(&f.0, Path::new(path)).map_err(lib_err)
    })
}
