//! C ABI over the `trustspa` solvers.
//!
//! Every entry point returns a [`TsStatus`] code and writes results through
//! out-pointers. Problems and results are opaque heap handles that must be
//! released with [`ts_problem_free`] and [`ts_result_free`]. When a call
//! fails, [`ts_last_error`] returns a message for the calling thread.
//!
//! Matrices cross the boundary in row-major order.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{DMatrix, DVector};
use trustspa::experiment::{count_nonzeros, mse};
use trustspa::{gpsr_bb_solve, solve, Error, GpsrConfig, SolveStatus, SolverConfig, SparseProblem, TransformedPoint};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsStatus {
    Ok = 0,
    NullPointer = 1,
    DimensionMismatch = 2,
    InvalidArgument = 3,
    InvalidConfig = 4,
    Numerical = 5,
    Panic = 6,
}

/// Why a solver stopped.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsSolveStatus {
    ConvergedGradient = 0,
    ConvergedObjective = 1,
    MaxIters = 2,
    Stalled = 3,
    NonFinite = 4,
}

impl From<SolveStatus> for TsSolveStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::ConvergedGradient => TsSolveStatus::ConvergedGradient,
            SolveStatus::ConvergedObjective => TsSolveStatus::ConvergedObjective,
            SolveStatus::MaxIters => TsSolveStatus::MaxIters,
            SolveStatus::Stalled => TsSolveStatus::Stalled,
            SolveStatus::NonFinite => TsSolveStatus::NonFinite,
        }
    }
}

/// Trust-region solver settings. Obtain defaults from
/// [`ts_solver_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TsSolverConfig {
    pub memory: usize,
    pub tau1: f64,
    pub grad_tol: f64,
    pub rel_obj_tol: f64,
    /// Initial radius; zero or negative selects `max(1, ||g0||)`.
    pub delta0: f64,
    pub delta_max: f64,
    pub delta_min: f64,
    pub shrink: f64,
    pub expand: f64,
    pub expand_rho: f64,
    pub boundary_frac: f64,
    pub max_iters: usize,
    pub update_on_reject: bool,
    pub check_certificates: bool,
}

impl From<&SolverConfig> for TsSolverConfig {
    fn from(c: &SolverConfig) -> Self {
        Self {
            memory: c.memory,
            tau1: c.tau1,
            grad_tol: c.grad_tol,
            rel_obj_tol: c.rel_obj_tol,
            delta0: c.delta0.unwrap_or(0.0),
            delta_max: c.delta_max,
            delta_min: c.delta_min,
            shrink: c.shrink,
            expand: c.expand,
            expand_rho: c.expand_rho,
            boundary_frac: c.boundary_frac,
            max_iters: c.max_iters,
            update_on_reject: c.update_on_reject,
            check_certificates: c.check_certificates,
        }
    }
}

impl From<&TsSolverConfig> for SolverConfig {
    fn from(c: &TsSolverConfig) -> Self {
        Self {
            memory: c.memory,
            tau1: c.tau1,
            grad_tol: c.grad_tol,
            rel_obj_tol: c.rel_obj_tol,
            delta0: (c.delta0 > 0.0).then_some(c.delta0),
            delta_max: c.delta_max,
            delta_min: c.delta_min,
            shrink: c.shrink,
            expand: c.expand,
            expand_rho: c.expand_rho,
            boundary_frac: c.boundary_frac,
            max_iters: c.max_iters,
            update_on_reject: c.update_on_reject,
            check_certificates: c.check_certificates,
        }
    }
}

/// GPSR-BB settings.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TsGpsrConfig {
    pub tol: f64,
    pub max_iters: usize,
}

/// Measurement matrix, observations and regularization weight.
pub struct TsProblem {
    inner: SparseProblem,
}

/// Outcome of one solver run.
pub struct TsResult {
    signal: Vec<f64>,
    /// Transformed iterate for the trust-region solver, `[u; v]` for GPSR.
    point: Vec<f64>,
    objective: f64,
    status: SolveStatus,
    iterations: usize,
    a_products: u64,
    elapsed_s: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn code_of(e: &Error) -> TsStatus {
    match e {
        Error::DimensionMismatch { .. } => TsStatus::DimensionMismatch,
        Error::InvalidConfig(_) => TsStatus::InvalidConfig,
        Error::InvalidProblem(_) | Error::InvalidSpec(_) => TsStatus::InvalidArgument,
        _ => TsStatus::Numerical,
    }
}

fn fail(code: TsStatus, msg: &str) -> TsStatus {
    set_last_error(msg);
    code
}

/// Runs `f`, mapping library errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), TsStatus>) -> TsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            TsStatus::Ok
        }
        Ok(Err(code)) => code,
        Err(_) => fail(TsStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: trustspa::Result<T>) -> Result<T, TsStatus> {
    r.map_err(|e| fail(code_of(&e), &e.to_string()))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], TsStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(TsStatus::NullPointer, &format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, TsStatus> {
    p.as_ref().ok_or_else(|| fail(TsStatus::NullPointer, &format!("{what} is null")))
}

fn out_ptr<T>(p: *mut T, what: &str) -> Result<*mut T, TsStatus> {
    if p.is_null() {
        Err(fail(TsStatus::NullPointer, &format!("{what} is null")))
    } else {
        Ok(p)
    }
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn ts_status_message(status: TsStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        TsStatus::Ok => b"ok\0",
        TsStatus::NullPointer => b"null pointer argument\0",
        TsStatus::DimensionMismatch => b"dimension mismatch\0",
        TsStatus::InvalidArgument => b"invalid argument\0",
        TsStatus::InvalidConfig => b"invalid solver configuration\0",
        TsStatus::Numerical => b"numerical failure\0",
        TsStatus::Panic => b"internal panic\0",
    };
    s.as_ptr().cast()
}

/// Message of the most recent failed call on this thread, or an empty
/// string. Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ts_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn ts_solver_config_default() -> TsSolverConfig {
    TsSolverConfig::from(&SolverConfig::default())
}

#[no_mangle]
pub extern "C" fn ts_gpsr_config_default() -> TsGpsrConfig {
    let d = GpsrConfig::default();
    TsGpsrConfig {
        tol: d.tol,
        max_iters: d.max_iters,
    }
}

/// Builds a problem from a row-major `m x n` matrix and `m` observations.
///
/// # Safety
/// `a` must point to `m * n` doubles and `y` to `m` doubles. `out` must be
/// a valid pointer; on success it receives a handle owned by the caller.
#[no_mangle]
pub unsafe extern "C" fn ts_problem_new(
    a: *const f64,
    m: usize,
    n: usize,
    y: *const f64,
    tau: f64,
    out: *mut *mut TsProblem,
) -> TsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let len = m
            .checked_mul(n)
            .ok_or_else(|| fail(TsStatus::InvalidArgument, "matrix size overflows"))?;
        let a = slice(a, len, "a")?;
        let y = slice(y, m, "y")?;
        let a = DMatrix::from_row_slice(m, n, a);
        let inner = lift(SparseProblem::dense(a, DVector::from_column_slice(y), tau))?;
        *out = Box::into_raw(Box::new(TsProblem { inner }));
        Ok(())
    })
}

/// # Safety
/// `problem` must be null or a handle from [`ts_problem_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ts_problem_free(problem: *mut TsProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Replaces the regularization weight.
///
/// # Safety
/// `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ts_problem_set_tau(problem: *mut TsProblem, tau: f64) -> TsStatus {
    guard(|| {
        let p = problem
            .as_mut()
            .ok_or_else(|| fail(TsStatus::NullPointer, "problem is null"))?;
        p.inner = lift(p.inner.with_tau(tau))?;
        Ok(())
    })
}

/// `||A^T y||_inf`, the weight at and above which zero is optimal.
///
/// # Safety
/// `problem` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ts_problem_tau_max(problem: *const TsProblem, out: *mut f64) -> TsStatus {
    guard(|| {
        let p = handle(problem, "problem")?;
        *out_ptr(out, "out")? = p.inner.tau_max();
        Ok(())
    })
}

/// Objective and, when `grad` is non-null, its gradient at a transformed
/// point `x` of length `2n`.
///
/// # Safety
/// `x` must point to `len` doubles, `value` must be valid for one write and
/// `grad`, if non-null, must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ts_problem_objective(
    problem: *const TsProblem,
    x: *const f64,
    len: usize,
    value: *mut f64,
    grad: *mut f64,
) -> TsStatus {
    guard(|| {
        let p = handle(problem, "problem")?;
        let value = out_ptr(value, "value")?;
        let x = slice(x, len, "x")?;
        let point = lift(TransformedPoint::new(DVector::from_column_slice(x)))?;
        if grad.is_null() {
            *value = lift(p.inner.phi(&point))?;
        } else {
            let (phi, g) = lift(p.inner.phi_and_grad(&point))?;
            *value = phi;
            std::slice::from_raw_parts_mut(grad, len).copy_from_slice(g.as_slice());
        }
        Ok(())
    })
}

/// Runs the trust-region solver from the origin. `config` may be null for
/// defaults.
///
/// # Safety
/// `problem` must be a live handle, `config` null or valid, and `out` valid
/// for one write; on success it receives a result handle.
#[no_mangle]
pub unsafe extern "C" fn ts_solve(
    problem: *const TsProblem,
    config: *const TsSolverConfig,
    out: *mut *mut TsResult,
) -> TsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let p = handle(problem, "problem")?;
        let cfg = config.as_ref().map_or_else(SolverConfig::default, SolverConfig::from);
        let x0 = TransformedPoint::zeros(p.inner.signal_len());
        let run = lift(solve(&p.inner, &cfg, &x0))?;
        *out = Box::into_raw(Box::new(TsResult {
            iterations: run.iterations(),
            signal: run.signal.as_slice().to_vec(),
            point: run.x.as_vector().as_slice().to_vec(),
            objective: run.phi,
            status: run.status,
            a_products: run.a_products,
            elapsed_s: run.elapsed_s,
        }));
        Ok(())
    })
}

/// Runs monotone GPSR-BB from the origin. `config` may be null for
/// defaults.
///
/// # Safety
/// Same contract as [`ts_solve`].
#[no_mangle]
pub unsafe extern "C" fn ts_gpsr_solve(
    problem: *const TsProblem,
    config: *const TsGpsrConfig,
    out: *mut *mut TsResult,
) -> TsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let p = handle(problem, "problem")?;
        let cfg = config.as_ref().map_or_else(GpsrConfig::default, |c| GpsrConfig {
            tol: c.tol,
            max_iters: c.max_iters,
        });
        let run = lift(gpsr_bb_solve(&p.inner, &cfg))?;
        *out = Box::into_raw(Box::new(TsResult {
            iterations: run.iterations(),
            signal: run.signal.as_slice().to_vec(),
            point: run.z.as_slice().to_vec(),
            objective: run.objective,
            status: run.status,
            a_products: run.a_products,
            elapsed_s: run.elapsed_s,
        }));
        Ok(())
    })
}

/// # Safety
/// `result` must be null or a handle from a solve call not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ts_result_free(result: *mut TsResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Length of the recovered signal, or 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ts_result_signal_len(result: *const TsResult) -> usize {
    result.as_ref().map_or(0, |r| r.signal.len())
}

/// Copies the recovered signal into `buf`, which must hold exactly
/// [`ts_result_signal_len`] doubles.
///
/// # Safety
/// `result` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ts_result_copy_signal(result: *const TsResult, buf: *mut f64, len: usize) -> TsStatus {
    guard(|| copy_out(handle(result, "result")?.signal.as_slice(), buf, len))
}

/// Length of the final iterate: `2n` for both solvers.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ts_result_point_len(result: *const TsResult) -> usize {
    result.as_ref().map_or(0, |r| r.point.len())
}

/// Copies the final iterate: the transformed point for the trust-region
/// solver, the nonnegative split `[u; v]` for GPSR.
///
/// # Safety
/// `result` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ts_result_copy_point(result: *const TsResult, buf: *mut f64, len: usize) -> TsStatus {
    guard(|| copy_out(handle(result, "result")?.point.as_slice(), buf, len))
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), TsStatus> {
    if len != src.len() {
        return Err(fail(
            TsStatus::DimensionMismatch,
            &format!("buffer holds {len} values, result has {}", src.len()),
        ));
    }
    if len > 0 {
        let buf = out_ptr(buf, "buf")?;
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(src);
    }
    Ok(())
}

/// Summary fields of a result.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TsResultInfo {
    pub objective: f64,
    pub status: TsSolveStatus,
    pub iterations: usize,
    pub a_products: u64,
    pub elapsed_s: f64,
    /// Entries of the signal with magnitude above `1e-6`.
    pub nonzeros: usize,
}

/// # Safety
/// `result` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ts_result_info(result: *const TsResult, out: *mut TsResultInfo) -> TsStatus {
    guard(|| {
        let r = handle(result, "result")?;
        *out_ptr(out, "out")? = TsResultInfo {
            objective: r.objective,
            status: r.status.into(),
            iterations: r.iterations,
            a_products: r.a_products,
            elapsed_s: r.elapsed_s,
            nonzeros: count_nonzeros(&DVector::from_column_slice(&r.signal), trustspa::experiment::NONZERO_THRESHOLD),
        };
        Ok(())
    })
}

/// Mean squared error `||a - b||^2 / len`.
///
/// # Safety
/// `a` and `b` must point to `len` doubles; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ts_mse(a: *const f64, b: *const f64, len: usize, out: *mut f64) -> TsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let a = DVector::from_column_slice(slice(a, len, "a")?);
        let b = DVector::from_column_slice(slice(b, len, "b")?);
        *out = lift(mse(&a, &b))?;
        Ok(())
    })
}
