//! C ABI for the tdmech engine.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free` function. Every fallible call returns a
//! [`TdmStatus`]; on failure a message is available from
//! [`tdm_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use tdmech::cli::{resolve_config_str, run, CliError};
use tdmech::diffkernel::ScalarField;
use tdmech::dynamics::{integrate_lagrangian, InitialState, IntegratorConfig, Trajectory};
use tdmech::expr::ExprLagrangian;
use tdmech::lagrangian::{energy, TimeLagrangian};
use tdmech::semispray::lagrangian_vector_field;
use tdmech::{Error, TangentSample};

/// Result codes. `1` to `4` match the exit codes of the command-line tool.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdmStatus {
    Ok = 0,
    /// The run completed but at least one audit exceeded its tolerance.
    LawFailed = 1,
    /// Malformed configuration or expression text.
    Parse = 2,
    /// Well-formed input that is inconsistent or out of range.
    Validation = 3,
    /// Numerical failure while evaluating or integrating.
    Runtime = 4,
    NullPointer = 5,
    InvalidUtf8 = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

/// A time-dependent Lagrangian `L(t, x, y)` given by an expression.
pub struct TdmLagrangian {
    inner: TimeLagrangian<ExprLagrangian>,
}

/// An integrated trajectory.
pub struct TdmTrajectory {
    inner: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (TdmStatus, String);

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TdmStatus {
    match e {
        Error::Expr(_) => TdmStatus::Parse,
        Error::Dimension { .. }
        | Error::Integrator(_)
        | Error::InvalidTransition(_)
        | Error::OffConstraint { .. }
        | Error::NotTangent { .. } => TdmStatus::Validation,
        _ => TdmStatus::Runtime,
    }
}

fn lib_err(e: Error) -> Failure {
    (status_of(&e), e.to_string())
}

fn cli_err(e: CliError) -> Failure {
    let status = match e.code {
        2 => TdmStatus::Parse,
        3 => TdmStatus::Validation,
        _ => TdmStatus::Runtime,
    };
    (status, e.message)
}

fn guard<F: FnOnce() -> Result<TdmStatus, Failure>>(f: F) -> TdmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic in tdmech");
            TdmStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    (TdmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (TdmStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn vec_arg(p: *const f64, n: usize, what: &str) -> Result<Vec<f64>, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, n).to_vec())
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| (TdmStatus::Runtime, "string contains an interior NUL".into()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tdm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tdm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a pointer returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tdm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses `expr` as `L(t, x0..x{dim-1}, y0..y{dim-1})`.
///
/// # Safety
/// `expr` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tdm_lagrangian_new(expr: *const c_char, dim: usize, out: *mut *mut TdmLagrangian) -> TdmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let src = str_arg(expr, "expr")?;
        let field = ExprLagrangian::parse(src, dim).map_err(lib_err)?;
        let l = Box::new(TdmLagrangian {
            inner: TimeLagrangian::new(field, "ffi"),
        });
        *out = Box::into_raw(l);
        Ok(TdmStatus::Ok)
    })
}

/// # Safety
/// `l` must be NULL or a handle from [`tdm_lagrangian_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tdm_lagrangian_free(l: *mut TdmLagrangian) {
    if !l.is_null() {
        drop(Box::from_raw(l));
    }
}

/// Configuration dimension, or 0 for a NULL handle.
///
/// # Safety
/// `l` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tdm_lagrangian_dim(l: *const TdmLagrangian) -> usize {
    l.as_ref().map_or(0, |l| l.inner.dim())
}

unsafe fn sample_arg(l: &TdmLagrangian, t: f64, x: *const f64, y: *const f64) -> Result<TangentSample, Failure> {
    let n = l.inner.dim();
    Ok(TangentSample::new(t, vec_arg(x, n, "x")?, vec_arg(y, n, "y")?))
}

/// Evaluates `L(t, x, y)`; `x` and `y` hold `dim` values each.
///
/// # Safety
/// `l` must be a live handle, `x` and `y` must point to `dim` doubles and
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tdm_lagrangian_eval(
    l: *const TdmLagrangian,
    t: f64,
    x: *const f64,
    y: *const f64,
    out: *mut f64,
) -> TdmStatus {
    guard(|| {
        let l = handle(l, "lagrangian")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let v = sample_arg(l, t, x, y)?;
        l.inner.field().domain().check(&v.coords()).map_err(lib_err)?;
        *out = l.inner.field().eval(v.t, &v.x, &v.y);
        Ok(TdmStatus::Ok)
    })
}

/// Energy `E = ∂L/∂y·y − L` at `(t, x, y)`.
///
/// # Safety
/// As for [`tdm_lagrangian_eval`].
#[no_mangle]
pub unsafe extern "C" fn tdm_lagrangian_energy(
    l: *const TdmLagrangian,
    t: f64,
    x: *const f64,
    y: *const f64,
    out: *mut f64,
) -> TdmStatus {
    guard(|| {
        let l = handle(l, "lagrangian")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let v = sample_arg(l, t, x, y)?;
        *out = energy(&l.inner, &v).map_err(lib_err)?;
        Ok(TdmStatus::Ok)
    })
}

/// Writes the acceleration `x″` of the Euler–Lagrange equations at
/// `(t, x, y)` into `out` (`dim` doubles).
///
/// # Safety
/// As for [`tdm_lagrangian_eval`], with `out` valid for `dim` writes.
#[no_mangle]
pub unsafe extern "C" fn tdm_lagrangian_acceleration(
    l: *const TdmLagrangian,
    t: f64,
    x: *const f64,
    y: *const f64,
    out: *mut f64,
) -> TdmStatus {
    guard(|| {
        let l = handle(l, "lagrangian")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let v = sample_arg(l, t, x, y)?;
        let a = lagrangian_vector_field(&l.inner, &v).map_err(lib_err)?;
        slice::from_raw_parts_mut(out, a.len()).copy_from_slice(&a);
        Ok(TdmStatus::Ok)
    })
}

/// Integrates the Euler–Lagrange equations with fixed-step RK4 from
/// `(t0, x0, y0)` over `[s0, s1]`.
///
/// # Safety
/// `l` must be a live handle, `x0` and `y0` must point to `dim` doubles and
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tdm_lagrangian_integrate(
    l: *const TdmLagrangian,
    t0: f64,
    x0: *const f64,
    y0: *const f64,
    h: f64,
    s0: f64,
    s1: f64,
    out: *mut *mut TdmTrajectory,
) -> TdmStatus {
    guard(|| {
        let l = handle(l, "lagrangian")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let n = l.inner.dim();
        let init = InitialState::new(t0, vec_arg(x0, n, "x0")?, vec_arg(y0, n, "y0")?);
        let cfg = IntegratorConfig::rk4(h, s0, s1);
        cfg.validate().map_err(lib_err)?;
        let traj = integrate_lagrangian(&l.inner, &init, &cfg).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(TdmTrajectory { inner: traj }));
        Ok(TdmStatus::Ok)
    })
}

/// Runs a scenario given as JSON configuration text. On success or
/// [`TdmStatus::LawFailed`] the trajectory is stored in `out` and, when
/// `report_json` is not NULL, the invariant report is stored there as a
/// string to be released with [`tdm_string_free`]. Nothing is written to
/// disk.
///
/// # Safety
/// `config_json` must be a NUL-terminated string, `out` valid for writes and
/// `report_json` NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tdm_run_config(
    config_json: *const c_char,
    out: *mut *mut TdmTrajectory,
    report_json: *mut *mut c_char,
) -> TdmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let src = str_arg(config_json, "config_json")?;
        let res = resolve_config_str(src, false).map_err(cli_err)?;
        let outcome = run(&res).map_err(cli_err)?;
        if !report_json.is_null() {
            *report_json = into_c_string(outcome.report.to_json())?;
        }
        let status = if outcome.report.all_pass {
            TdmStatus::Ok
        } else {
            TdmStatus::LawFailed
        };
        *out = Box::into_raw(Box::new(TdmTrajectory {
            inner: outcome.trajectory,
        }));
        Ok(status)
    })
}

/// # Safety
/// `tr` must be NULL or a trajectory handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tdm_trajectory_free(tr: *mut TdmTrajectory) {
    if !tr.is_null() {
        drop(Box::from_raw(tr));
    }
}

/// Number of samples, or 0 for a NULL handle.
///
/// # Safety
/// `tr` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tdm_trajectory_len(tr: *const TdmTrajectory) -> usize {
    tr.as_ref().map_or(0, |t| t.inner.len())
}

/// Configuration dimension, or 0 for a NULL handle.
///
/// # Safety
/// `tr` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tdm_trajectory_dim(tr: *const TdmTrajectory) -> usize {
    tr.as_ref().map_or(0, |t| t.inner.dim())
}

/// Copies sample `index`: curve parameter, time, position and velocity.
/// Any output pointer may be NULL to skip it; `x` and `y` take `dim` doubles.
///
/// # Safety
/// `tr` must be a live handle and non-NULL outputs valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tdm_trajectory_sample(
    tr: *const TdmTrajectory,
    index: usize,
    s: *mut f64,
    t: *mut f64,
    x: *mut f64,
    y: *mut f64,
) -> TdmStatus {
    guard(|| {
        let tr = handle(tr, "trajectory")?;
        let p = tr.inner.samples.get(index).ok_or_else(|| {
            (
                TdmStatus::Validation,
                format!("index {index} out of range for {} samples", tr.inner.len()),
            )
        })?;
        if !s.is_null() {
            *s = p.s;
        }
        if !t.is_null() {
            *t = p.t;
        }
        if !x.is_null() {
            slice::from_raw_parts_mut(x, p.x.len()).copy_from_slice(&p.x);
        }
        if !y.is_null() {
            slice::from_raw_parts_mut(y, p.y.len()).copy_from_slice(&p.y);
        }
        Ok(TdmStatus::Ok)
    })
}

/// The trajectory as CSV text (`s,t,x0..,y0..`), released with
/// [`tdm_string_free`].
///
/// # Safety
/// `tr` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tdm_trajectory_to_csv(tr: *const TdmTrajectory, out: *mut *mut c_char) -> TdmStatus {
    guard(|| {
        let tr = handle(tr, "trajectory")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = into_c_string(tr.inner.to_csv_string())?;
        Ok(TdmStatus::Ok)
    })
}
