//! C ABI over the `sei` integrators.
//!
//! Every function returns a [`SeiStatus`]; outputs go through caller-provided
//! pointers. Methods, problems and steppers are opaque handles released with
//! their `*_free` function. After a failure, [`sei_last_error`] copies the
//! message for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use sei::problems::{duffing, wind_oscillation, DuffingParams, WindParams};
use sei::stepper::{integrate, SemilinearProblem, SolverSettings, StepMap};
use sei::tableau::{
    check_ei_symmetry, check_ei_symplecticity, check_order_conditions, check_rk_symmetry,
    check_rk_symplecticity, find_method, MethodKind, TableauFile,
};
use sei::{expm, Error, SquareMatrix};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NonFinite = 4,
    Singular = 5,
    NonConvergence = 6,
    UnknownMethod = 7,
    UnknownProblem = 8,
    InvalidTableau = 9,
    Panic = 10,
}

/// A Butcher tableau with its certified order.
pub struct SeiMethodHandle(sei::SeiMethod);

/// A semilinear benchmark problem.
pub struct SeiProblemHandle(SemilinearProblem);

/// A method bound to a problem's linear part and a step size.
pub struct SeiStepperHandle {
    map: StepMap,
    settings: SolverSettings,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> SeiStatus {
    match err {
        Error::DimensionMismatch { .. } | Error::EmptyMatrix => SeiStatus::DimensionMismatch,
        Error::NonFinite(_) => SeiStatus::NonFinite,
        Error::Singular => SeiStatus::Singular,
        Error::NonConvergence { .. } => SeiStatus::NonConvergence,
        Error::StepFailed { source, .. } => status_of(source),
        Error::UnknownMethod(_) => SeiStatus::UnknownMethod,
        Error::UnknownProblem(_) => SeiStatus::UnknownProblem,
        Error::InvalidTableau(_) => SeiStatus::InvalidTableau,
        _ => SeiStatus::InvalidArgument,
    }
}

enum Failure {
    Status(SeiStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn null() -> Failure {
    Failure::Status(SeiStatus::NullPointer, "null pointer argument".into())
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> SeiStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SeiStatus::Ok,
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Failure::Lib(e))) => {
            let mut msg = e.to_string();
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                msg.push_str(": ");
                msg.push_str(&s.to_string());
                src = s.source();
            }
            set_error(msg);
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            SeiStatus::Panic
        }
    }
}

unsafe fn read<'a, T>(p: *const T, len: usize) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return Err(null());
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn write<'a, T>(p: *mut T, len: usize) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(null());
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(null)
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null());
    }
    out.write(value);
    Ok(())
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `len` bytes. Returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sei_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// `out = exp(a)` for row-major `dim x dim` matrices.
///
/// # Safety
/// `a` and `out` must each hold `dim * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn sei_expm(dim: usize, a: *const f64, out: *mut f64) -> SeiStatus {
    guard(|| {
        let m = SquareMatrix::new(dim, read(a, dim * dim)?.to_vec())?;
        write(out, dim * dim)?.copy_from_slice(expm(&m)?.as_slice());
        Ok(())
    })
}

/// Looks up a built-in method by name (case-insensitive).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sei_method_builtin(name: *const c_char, out: *mut *mut SeiMethodHandle) -> SeiStatus {
    guard(|| {
        if name.is_null() {
            return Err(null());
        }
        let name = CStr::from_ptr(name)
            .to_str()
            .map_err(|_| Failure::Status(SeiStatus::InvalidArgument, "name is not UTF-8".into()))?;
        let method = find_method(name)?;
        put(out, boxed(SeiMethodHandle(method)))
    })
}

/// Builds an exponential method from an `s`-stage tableau; `a` is row-major.
/// Its order is whatever the order-condition checker certifies.
///
/// # Safety
/// `c` and `b` must hold `s` doubles, `a` must hold `s * s`, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sei_method_from_tableau(
    s: usize,
    c: *const f64,
    b: *const f64,
    a: *const f64,
    out: *mut *mut SeiMethodHandle,
) -> SeiStatus {
    guard(|| {
        let a = read(a, s * s)?;
        let file = TableauFile {
            name: "custom".into(),
            s,
            c: read(c, s)?.to_vec(),
            b: read(b, s)?.to_vec(),
            a: a.chunks(s.max(1)).map(<[f64]>::to_vec).collect(),
        };
        let method = file.to_method(MethodKind::Exponential)?;
        put(out, boxed(SeiMethodHandle(method)))
    })
}

/// # Safety
/// `method` must come from a `sei_method_*` constructor, or be null.
#[no_mangle]
pub unsafe extern "C" fn sei_method_free(method: *mut SeiMethodHandle) {
    if !method.is_null() {
        drop(Box::from_raw(method));
    }
}

/// # Safety
/// `method` must be a live handle; `stages` and `order` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sei_method_info(
    method: *const SeiMethodHandle,
    stages: *mut usize,
    order: *mut u32,
) -> SeiStatus {
    guard(|| {
        let m = &handle(method)?.0;
        put(stages, m.stages())?;
        put(order, m.order)
    })
}

/// Largest defect of the RK symmetry conditions.
///
/// # Safety
/// `method` must be a live handle and `residual` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sei_check_rk_symmetry(method: *const SeiMethodHandle, residual: *mut f64) -> SeiStatus {
    guard(|| put(residual, check_rk_symmetry(&handle(method)?.0.tableau).residual))
}

/// Largest defect of `b_i a_ij + b_j a_ji - b_i b_j = 0`.
///
/// # Safety
/// `method` must be a live handle and `residual` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sei_check_rk_symplecticity(
    method: *const SeiMethodHandle,
    residual: *mut f64,
) -> SeiStatus {
    guard(|| put(residual, check_rk_symplecticity(&handle(method)?.0.tableau).residual))
}

/// Largest defect of the order conditions up to `p` (1 to 4).
///
/// # Safety
/// `method` must be a live handle and `residual` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sei_check_order(method: *const SeiMethodHandle, p: u32, residual: *mut f64) -> SeiStatus {
    guard(|| put(residual, check_order_conditions(&handle(method)?.0.tableau, p)?.residual))
}

/// Symmetry defect of the exponential coefficients at the row-major matrix `z`.
///
/// # Safety
/// `z` must hold `dim * dim` doubles; `method` and `residual` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sei_check_ei_symmetry(
    method: *const SeiMethodHandle,
    dim: usize,
    z: *const f64,
    residual: *mut f64,
) -> SeiStatus {
    guard(|| {
        let z = SquareMatrix::new(dim, read(z, dim * dim)?.to_vec())?;
        put(residual, check_ei_symmetry(&handle(method)?.0, &z)?.residual)
    })
}

/// Symplecticity defect at `z` with the canonical structure of size `dim` (even).
///
/// # Safety
/// `z` must hold `dim * dim` doubles; `method` and `residual` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sei_check_ei_symplecticity(
    method: *const SeiMethodHandle,
    dim: usize,
    z: *const f64,
    residual: *mut f64,
) -> SeiStatus {
    guard(|| {
        if dim == 0 || dim % 2 != 0 {
            return Err(Failure::Status(SeiStatus::DimensionMismatch, format!("dimension {dim} is not even")));
        }
        let z = SquareMatrix::new(dim, read(z, dim * dim)?.to_vec())?;
        let j = SquareMatrix::canonical_symplectic(dim / 2);
        put(residual, check_ei_symplecticity(&handle(method)?.0, &z, &j)?.residual)
    })
}

/// The Duffing oscillator with stiffness `omega² + k²`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sei_problem_duffing(k: f64, omega: f64, out: *mut *mut SeiProblemHandle) -> SeiStatus {
    guard(|| put(out, boxed(SeiProblemHandle(duffing(DuffingParams { k, omega })?))))
}

/// The averaged wind-induced oscillation system.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sei_problem_wind(r: f64, theta: f64, out: *mut *mut SeiProblemHandle) -> SeiStatus {
    guard(|| put(out, boxed(SeiProblemHandle(wind_oscillation(WindParams { r, theta })?))))
}

/// # Safety
/// `problem` must come from a `sei_problem_*` constructor, or be null.
#[no_mangle]
pub unsafe extern "C" fn sei_problem_free(problem: *mut SeiProblemHandle) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// State dimension.
///
/// # Safety
/// `problem` must be a live handle and `dim` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sei_problem_dim(problem: *const SeiProblemHandle, dim: *mut usize) -> SeiStatus {
    guard(|| put(dim, handle(problem)?.0.dim()))
}

/// Copies the initial value into `y` (length `dim`).
///
/// # Safety
/// `y` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn sei_problem_initial_value(
    problem: *const SeiProblemHandle,
    y: *mut f64,
    dim: usize,
) -> SeiStatus {
    guard(|| {
        let p = &handle(problem)?.0;
        if dim != p.dim() {
            return Err(Error::DimensionMismatch { left: dim, right: p.dim() }.into());
        }
        write(y, dim)?.copy_from_slice(&p.y0);
        Ok(())
    })
}

/// Energy or first integral at `y`.
///
/// # Safety
/// `y` must hold the problem's dimension of doubles; `value` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sei_problem_invariant(
    problem: *const SeiProblemHandle,
    y: *const f64,
    value: *mut f64,
) -> SeiStatus {
    guard(|| {
        let p = &handle(problem)?.0;
        let h = p
            .invariant(read(y, p.dim())?)
            .ok_or_else(|| Failure::Status(SeiStatus::InvalidArgument, "problem has no invariant".into()))?;
        put(value, h)
    })
}

/// Closed-form solution at time `t`, where the problem has one.
///
/// # Safety
/// `y` must hold the problem's dimension of doubles.
#[no_mangle]
pub unsafe extern "C" fn sei_problem_exact(problem: *const SeiProblemHandle, t: f64, y: *mut f64) -> SeiStatus {
    guard(|| {
        let p = &handle(problem)?.0;
        let exact = p
            .exact(t)
            .ok_or_else(|| Failure::Status(SeiStatus::InvalidArgument, "problem has no exact solution".into()))?;
        write(y, p.dim())?.copy_from_slice(&exact);
        Ok(())
    })
}

/// Precomputes the step map of `method` for `problem` at step `h`.
/// `fp_tol <= 0` or `max_iters == 0` selects the defaults.
///
/// # Safety
/// `method` and `problem` must be live handles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sei_stepper_new(
    method: *const SeiMethodHandle,
    problem: *const SeiProblemHandle,
    h: f64,
    fp_tol: f64,
    max_iters: usize,
    out: *mut *mut SeiStepperHandle,
) -> SeiStatus {
    guard(|| {
        let mut settings = SolverSettings::default();
        if fp_tol > 0.0 {
            settings.fp_tol = fp_tol;
        }
        if max_iters > 0 {
            settings.max_iters = max_iters;
        }
        settings.validate()?;
        let map = StepMap::new(&handle(method)?.0, &handle(problem)?.0.m, h)?;
        put(out, boxed(SeiStepperHandle { map, settings }))
    })
}

/// # Safety
/// `stepper` must come from [`sei_stepper_new`], or be null.
#[no_mangle]
pub unsafe extern "C" fn sei_stepper_free(stepper: *mut SeiStepperHandle) {
    if !stepper.is_null() {
        drop(Box::from_raw(stepper));
    }
}

/// One step from `y0` into `y1`; `iterations` (may be null) receives the
/// stage-iteration count.
///
/// # Safety
/// `y0` and `y1` must hold the problem's dimension of doubles.
#[no_mangle]
pub unsafe extern "C" fn sei_stepper_step(
    stepper: *const SeiStepperHandle,
    problem: *const SeiProblemHandle,
    y0: *const f64,
    y1: *mut f64,
    iterations: *mut usize,
) -> SeiStatus {
    guard(|| {
        let st = handle(stepper)?;
        let p = &handle(problem)?.0;
        let outcome = st.map.step(p, read(y0, p.dim())?, &st.settings)?;
        write(y1, p.dim())?.copy_from_slice(&outcome.y);
        if !iterations.is_null() {
            *iterations = outcome.iterations;
        }
        Ok(())
    })
}

/// Integrates from the problem's initial value to `t_end` and writes the
/// final state; `t_end / h` must be an integer.
///
/// # Safety
/// `y_end` must hold the problem's dimension of doubles; `n_steps` may be null.
#[no_mangle]
pub unsafe extern "C" fn sei_integrate(
    stepper: *const SeiStepperHandle,
    problem: *const SeiProblemHandle,
    t_end: f64,
    y_end: *mut f64,
    n_steps: *mut usize,
) -> SeiStatus {
    guard(|| {
        let st = handle(stepper)?;
        let p = &handle(problem)?.0;
        let traj = integrate(&st.map, p, &p.y0, t_end, &st.settings)?;
        write(y_end, p.dim())?.copy_from_slice(traj.final_state());
        if !n_steps.is_null() {
            *n_steps = traj.n_steps();
        }
        Ok(())
    })
}
