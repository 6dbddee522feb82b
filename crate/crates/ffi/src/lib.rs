//! C ABI over `hartree-control`.
//!
//! Every call returns an [`HcStatus`]. On anything but `HC_STATUS_OK` the
//! thread-local message is available through [`hc_last_error_message`].
//! Handles are opaque and released with the matching `*_free`.

use hartree_control::config::RunConfig;
use hartree_control::hum::{solve_control_with, ControlSolution};
use hartree_control::nonlinear::fixed_point_solve;
use hartree_control::{airy, verify, Error};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HcStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    /// the CG solve stopped early; the handle still holds the best iterate
    NotConverged = 3,
    NotContracting = 4,
    Numerical = 5,
    Io = 6,
    Panic = 7,
}

/// Which trajectory of a control solution to copy out.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HcTrack {
    State = 0,
    Control = 1,
}

pub struct HcConfig {
    inner: RunConfig,
}

pub struct HcControl {
    solution: ControlSolution,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HcControlSummary {
    pub cost: f64,
    pub residual: f64,
    pub target_error: f64,
    pub relative_target_error: f64,
    pub unresolved_tail: f64,
    pub cg_iterations: usize,
    pub converged: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HcNonlinearSummary {
    pub converged: bool,
    pub iterations: usize,
    /// NaN when fewer than two iterates were taken
    pub contraction_factor: f64,
    pub target_error: f64,
    pub cost: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(HcStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidInput(_)
            | Error::Config(_)
            | Error::BasisMismatch { .. }
            | Error::OrderMismatch(_)
            | Error::SupportOverflow { .. } => HcStatus::InvalidArgument,
            Error::ControlNotConverged(_) | Error::NotConverged { .. } => HcStatus::NotConverged,
            Error::NotContracting { .. } => HcStatus::NotContracting,
            Error::Io(_) | Error::Json(_) => HcStatus::Io,
            Error::Eigensolver(_) | Error::AiryZero { .. } => HcStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(HcStatus::NullPointer, format!("{what} is null"))
}

fn guard(body: impl FnOnce() -> Result<HcStatus, Failure>) -> HcStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(s)) => s,
        Ok(Err(Failure(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("panic inside hartree-control");
            HcStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    // SAFETY: the caller guarantees `p` is null or came from this library
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the buffer size the full message needs,
/// or 0 when there is no message.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn hc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len);
            // SAFETY: `buf` holds `len >= n` bytes by contract
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n - 1) = 0;
            }
        }
        bytes.len()
    })
}

/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn hc_config_default(out: *mut *mut HcConfig) -> HcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let h = Box::new(HcConfig {
            inner: RunConfig::default(),
        });
        // SAFETY: checked non-null above
        unsafe { *out = Box::into_raw(h) };
        Ok(HcStatus::Ok)
    })
}

/// Parse and validate a TOML run configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn hc_config_from_toml(toml: *const c_char, out: *mut *mut HcConfig) -> HcStatus {
    guard(|| {
        if toml.is_null() {
            return Err(null("toml"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: NUL-terminated by contract
        let text = unsafe { CStr::from_ptr(toml) }
            .to_str()
            .map_err(|e| Failure(HcStatus::InvalidArgument, format!("config is not UTF-8: {e}")))?;
        let inner = RunConfig::from_toml(text)?;
        // SAFETY: checked non-null above
        unsafe { *out = Box::into_raw(Box::new(HcConfig { inner })) };
        Ok(HcStatus::Ok)
    })
}

/// # Safety
/// `cfg` must be null or a handle from `hc_config_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hc_config_free(cfg: *mut HcConfig) {
    if !cfg.is_null() {
        // SAFETY: allocated by Box::into_raw in this crate
        drop(unsafe { Box::from_raw(cfg) });
    }
}

/// Write the first `n` eigenvalues of the configured `basis.operator`.
///
/// # Safety
/// `cfg` must be a live handle and `out` valid for `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn hc_basis_eigenvalues(cfg: *const HcConfig, n: usize, out: *mut f64) -> HcStatus {
    guard(|| {
        let cfg = unsafe { deref(cfg, "cfg") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let grid = cfg.inner.grid_spec()?;
        let (_, basis) = hartree_control::spectral::metric_basis(&grid, cfg.inner.basis.operator, n)?;
        // SAFETY: `out` holds `n` doubles by contract
        let dst = unsafe { std::slice::from_raw_parts_mut(out, n) };
        dst.copy_from_slice(&basis.eigenvalues[..n]);
        Ok(HcStatus::Ok)
    })
}

/// Eigenvalue `index` of `-∂² + |x|` on the line, from the Airy zeros.
///
/// # Safety
/// `out` must be valid for one double.
#[no_mangle]
pub unsafe extern "C" fn hc_airy_eigenvalue(index: usize, out: *mut f64) -> HcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let v = airy::eigenvalue(index)?;
        // SAFETY: checked non-null above
        unsafe { *out = v };
        Ok(HcStatus::Ok)
    })
}

/// Solve the linear control problem of `cfg`. On `HC_STATUS_NOT_CONVERGED`
/// `*out` is still set and holds the best iterate.
///
/// # Safety
/// `cfg` must be a live handle; `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn hc_control_solve(cfg: *const HcConfig, out: *mut *mut HcControl) -> HcStatus {
    guard(|| {
        let cfg = unsafe { deref(cfg, "cfg") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = &cfg.inner;
        let problem = cfg.linear_problem(cfg.metric_basis()?)?;
        let op = cfg.s_operator(&problem)?;
        let (solution, status) = match solve_control_with(&op) {
            Ok(s) => (s, HcStatus::Ok),
            Err(Error::ControlNotConverged(best)) => {
                set_error(format!(
                    "control solve did not converge after {} iterations (residual {:.3e})",
                    best.cg_iterations, best.residual
                ));
                (*best, HcStatus::NotConverged)
            }
            Err(e) => return Err(e.into()),
        };
        // SAFETY: checked non-null above
        unsafe { *out = Box::into_raw(Box::new(HcControl { solution })) };
        Ok(status)
    })
}

/// # Safety
/// `h` must be a live control handle; `out` valid for one summary.
#[no_mangle]
pub unsafe extern "C" fn hc_control_summary(h: *const HcControl, out: *mut HcControlSummary) -> HcStatus {
    guard(|| {
        let s = &unsafe { deref(h, "control") }?.solution;
        if out.is_null() {
            return Err(null("out"));
        }
        let summary = HcControlSummary {
            cost: s.cost,
            residual: s.residual,
            target_error: s.target_error,
            relative_target_error: s.relative_target_error,
            unresolved_tail: s.unresolved_tail,
            cg_iterations: s.cg_iterations,
            converged: s.converged,
        };
        // SAFETY: checked non-null above
        unsafe { *out = summary };
        Ok(HcStatus::Ok)
    })
}

/// Number of time nodes (steps + 1) and grid points of the trajectories.
///
/// # Safety
/// `h` must be a live control handle; the outputs valid for one size_t each.
#[no_mangle]
pub unsafe extern "C" fn hc_control_dims(h: *const HcControl, nodes: *mut usize, points: *mut usize) -> HcStatus {
    guard(|| {
        let s = &unsafe { deref(h, "control") }?.solution;
        if nodes.is_null() || points.is_null() {
            return Err(null("nodes/points"));
        }
        // SAFETY: checked non-null above
        unsafe {
            *nodes = s.u.fields.len();
            *points = s.u.first().len();
        }
        Ok(HcStatus::Ok)
    })
}

/// Copy the real and imaginary parts of one time node of `track`.
///
/// # Safety
/// `h` must be a live control handle; `re` and `im` valid for `len`
/// doubles, where `len` equals the point count from `hc_control_dims`.
#[no_mangle]
pub unsafe extern "C" fn hc_control_copy(
    h: *const HcControl,
    track: HcTrack,
    node: usize,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> HcStatus {
    guard(|| {
        let s = &unsafe { deref(h, "control") }?.solution;
        if re.is_null() || im.is_null() {
            return Err(null("re/im"));
        }
        let traj = match track {
            HcTrack::State => &s.u,
            HcTrack::Control => &s.h,
        };
        let field = traj.fields.get(node).ok_or_else(|| {
            Failure(
                HcStatus::InvalidArgument,
                format!("node {node} out of range 0..{}", traj.fields.len()),
            )
        })?;
        if field.len() != len {
            return Err(Failure(
                HcStatus::InvalidArgument,
                format!("buffer length {len}, field has {} points", field.len()),
            ));
        }
        // SAFETY: both buffers hold `len` doubles by contract
        let (re, im) = unsafe { (std::slice::from_raw_parts_mut(re, len), std::slice::from_raw_parts_mut(im, len)) };
        for ((r, i), z) in re.iter_mut().zip(im.iter_mut()).zip(&field.values) {
            *r = z.re;
            *i = z.im;
        }
        Ok(HcStatus::Ok)
    })
}

/// # Safety
/// `h` must be null or a handle from `hc_control_solve` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hc_control_free(h: *mut HcControl) {
    if !h.is_null() {
        // SAFETY: allocated by Box::into_raw in this crate
        drop(unsafe { Box::from_raw(h) });
    }
}

/// Fixed-point control of the Hartree equation with both data scaled by
/// `factor`.
///
/// # Safety
/// `cfg` must be a live handle; `out` valid for one summary.
#[no_mangle]
pub unsafe extern "C" fn hc_nonlinear_solve(
    cfg: *const HcConfig,
    factor: f64,
    out: *mut HcNonlinearSummary,
) -> HcStatus {
    guard(|| {
        let cfg = &unsafe { deref(cfg, "cfg") }?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        if !factor.is_finite() {
            return Err(Failure(HcStatus::InvalidArgument, "factor must be finite".into()));
        }
        let setup = cfg.nonlinear_setup(cfg.metric_basis()?, factor)?;
        let run = fixed_point_solve(&setup)?;
        let summary = HcNonlinearSummary {
            converged: run.converged,
            iterations: run.iterations,
            contraction_factor: run.contraction_factor().unwrap_or(f64::NAN),
            target_error: run.target_error,
            cost: run.control.cost,
        };
        // SAFETY: checked non-null above
        unsafe { *out = summary };
        if run.converged {
            Ok(HcStatus::Ok)
        } else {
            set_error(format!("no convergence within {} iterations", run.iterations));
            Ok(HcStatus::NotConverged)
        }
    })
}

/// Run every verification suite with `samples` random cases each.
/// Returns `HC_STATUS_NUMERICAL` when any check fails.
///
/// # Safety
/// The outputs must be valid for one size_t each.
#[no_mangle]
pub unsafe extern "C" fn hc_verify(samples: usize, seed: u64, checks: *mut usize, failures: *mut usize) -> HcStatus {
    guard(|| {
        if checks.is_null() || failures.is_null() {
            return Err(null("checks/failures"));
        }
        let report = verify::run_all(samples, seed)?;
        let failed = report.failures();
        // SAFETY: checked non-null above
        unsafe {
            *checks = report.checks.len();
            *failures = failed;
        }
        if failed == 0 {
            Ok(HcStatus::Ok)
        } else {
            let names: Vec<String> = report
                .checks
                .iter()
                .filter(|c| !c.pass)
                .map(|c| format!("{}/{}", c.suite, c.check))
                .collect();
            set_error(format!("failed checks: {}", names.join(", ")));
            Ok(HcStatus::Numerical)
        }
    })
}
