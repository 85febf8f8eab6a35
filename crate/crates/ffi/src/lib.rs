//! C ABI over `jmflow`.
//!
//! Objects are opaque heap handles released with their `_free` function.
//! Every call returns a [`JmStatus`]; on failure the message is kept per
//! thread and can be read with [`jm_last_error_message`]. Arrays are passed
//! as pointer and length, and lengths are checked against the mass system.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use jmflow::action::{phi_free, ActionOptions};
use jmflow::dynamics::flow_map;
use jmflow::harness::{load_scenario, Scenario};
use jmflow::shape::{limit_shape, solve_velocity_field, ConeSpec, ShapeFitOptions, ShapeSolveOptions};
use jmflow::{JmError, MassSystem, PhaseState};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Collision = 4,
    CollisionApproach = 5,
    StepFailure = 6,
    EnergyDrift = 7,
    NonConvergence = 8,
    Precondition = 9,
    Schema = 10,
    Io = 11,
    Panic = 12,
}

impl From<&JmError> for JmStatus {
    fn from(e: &JmError) -> Self {
        match e {
            JmError::ShapeMismatch { .. } => JmStatus::ShapeMismatch,
            JmError::InvalidMassSystem(_) | JmError::NonFinite(_) => JmStatus::InvalidArgument,
            JmError::Collision { .. } | JmError::StateCollision { .. } => JmStatus::Collision,
            JmError::CollisionApproach { .. } => JmStatus::CollisionApproach,
            JmError::StepFailure { .. } => JmStatus::StepFailure,
            JmError::EnergyDrift { .. } => JmStatus::EnergyDrift,
            JmError::AllStartsFailed
            | JmError::BracketFailure(_)
            | JmError::NonConvergence(_)
            | JmError::ConeExit { .. } => JmStatus::NonConvergence,
            JmError::Precondition(_) => JmStatus::Precondition,
            JmError::Schema { .. } => JmStatus::Schema,
            JmError::Io(_) => JmStatus::Io,
        }
    }
}

/// A set of point masses in `R^d`.
pub struct JmMassSystem(MassSystem);

/// A loaded scenario.
pub struct JmScenario(Scenario);

/// Normalized Busemann function `u(x) = phi_h(0, p) - phi_h(x, p)` for a
/// fixed target `p`.
pub struct JmBusemann {
    ms: MassSystem,
    h: f64,
    target: Vec<f64>,
    anchor: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(JmStatus, String);

impl From<JmError> for Failure {
    fn from(e: JmError) -> Self {
        Failure(JmStatus::from(&e), e.to_string())
    }
}

type Res<T> = Result<T, Failure>;

fn null(what: &str) -> Failure {
    Failure(JmStatus::NullPointer, format!("null pointer: {what}"))
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Res<()>) -> JmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => JmStatus::Ok,
        Ok(Err(Failure(s, m))) => {
            set_error(m);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            JmStatus::Panic
        }
    }
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &str) -> Res<&'a [f64]> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, what: &str) -> Res<&'a mut [f64]> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn system<'a>(ms: *const JmMassSystem) -> Res<&'a MassSystem> {
    ms.as_ref().map(|m| &m.0).ok_or_else(|| null("mass system"))
}

fn check_len(ms: &MassSystem, len: usize) -> Res<()> {
    if len != ms.ndof() {
        return Err(JmError::ShapeMismatch {
            expected: ms.ndof(),
            got: len,
        }
        .into());
    }
    Ok(())
}

fn write_out<T>(out: *mut T, v: T, what: &str) -> Res<()> {
    if out.is_null() {
        return Err(null(what));
    }
    unsafe { out.write(v) };
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn jm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn jm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Creates a mass system of `n` bodies in dimension `dim`.
///
/// # Safety
/// `masses` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jm_mass_system_new(
    masses: *const f64,
    n: usize,
    dim: usize,
    out: *mut *mut JmMassSystem,
) -> JmStatus {
    guard(|| {
        let m = input(masses, n, "masses")?;
        let ms = MassSystem::new(m.to_vec(), dim)?;
        write_out(out, Box::into_raw(Box::new(JmMassSystem(ms))), "out")
    })
}

/// # Safety
/// `ms` must be null or a handle from this library, released once.
#[no_mangle]
pub unsafe extern "C" fn jm_mass_system_free(ms: *mut JmMassSystem) {
    if !ms.is_null() {
        drop(Box::from_raw(ms));
    }
}

/// Number of configuration coordinates `N d`, or 0 for a null handle.
///
/// # Safety
/// `ms` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn jm_mass_system_ndof(ms: *const JmMassSystem) -> usize {
    ms.as_ref().map(|m| m.0.ndof()).unwrap_or(0)
}

/// Energy `1/2 |v|^2 - U(q)`.
///
/// # Safety
/// `q` and `v` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jm_energy(
    ms: *const JmMassSystem,
    q: *const f64,
    v: *const f64,
    len: usize,
    out: *mut f64,
) -> JmStatus {
    guard(|| {
        let ms = system(ms)?;
        check_len(ms, len)?;
        let e = ms.energy(input(q, len, "q")?, input(v, len, "v")?)?;
        write_out(out, e, "out")
    })
}

/// Integrates Newton's equations from `(q, v)` for time `t` (either sign),
/// writing the end state.
///
/// # Safety
/// All arrays must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn jm_flow_map(
    ms: *const JmMassSystem,
    q: *const f64,
    v: *const f64,
    len: usize,
    t: f64,
    q_out: *mut f64,
    v_out: *mut f64,
) -> JmStatus {
    guard(|| {
        let ms = system(ms)?;
        check_len(ms, len)?;
        let s = PhaseState::new(ms, input(q, len, "q")?.to_vec(), input(v, len, "v")?.to_vec())?;
        let e = flow_map(ms, &s, t)?;
        output(q_out, len, "q_out")?.copy_from_slice(&e.q);
        output(v_out, len, "v_out")?.copy_from_slice(&e.v);
        Ok(())
    })
}

/// Free-time action potential `phi_h(x, y)` and the optimal duration.
///
/// # Safety
/// `x` and `y` must hold `len` doubles; `t_star` may be null.
#[no_mangle]
pub unsafe extern "C" fn jm_phi(
    ms: *const JmMassSystem,
    h: f64,
    x: *const f64,
    y: *const f64,
    len: usize,
    value: *mut f64,
    t_star: *mut f64,
) -> JmStatus {
    guard(|| {
        let ms = system(ms)?;
        check_len(ms, len)?;
        let r = phi_free(ms, h, input(x, len, "x")?, input(y, len, "y")?, &ActionOptions::default())?;
        write_out(value, r.value, "value")?;
        if !t_star.is_null() {
            t_star.write(r.t_star);
        }
        Ok(())
    })
}

/// Limit shape `a` of the motion from `(q, v)`, estimated at `horizon`.
/// `p` receives the remainder exponent, or NaN when no fit was possible.
///
/// # Safety
/// Arrays must hold `len` doubles; `p` may be null.
#[no_mangle]
pub unsafe extern "C" fn jm_limit_shape(
    ms: *const JmMassSystem,
    q: *const f64,
    v: *const f64,
    len: usize,
    horizon: f64,
    a_out: *mut f64,
    p: *mut f64,
) -> JmStatus {
    guard(|| {
        let ms = system(ms)?;
        check_len(ms, len)?;
        let s = PhaseState::new(ms, input(q, len, "q")?.to_vec(), input(v, len, "v")?.to_vec())?;
        let est = limit_shape(ms, &s, horizon, &ShapeFitOptions::default())?;
        output(a_out, len, "a_out")?.copy_from_slice(&est.a);
        if !p.is_null() {
            p.write(est.p.unwrap_or(f64::NAN));
        }
        Ok(())
    })
}

/// Velocity at `x` whose motion has limit shape `a`, for `x` in the cone of
/// half-opening cosine `alpha` outside radius `r`.
///
/// # Safety
/// Arrays must hold `len` doubles; `residual` may be null.
#[no_mangle]
pub unsafe extern "C" fn jm_solve_velocity(
    ms: *const JmMassSystem,
    a: *const f64,
    alpha: f64,
    r: f64,
    x: *const f64,
    len: usize,
    v_out: *mut f64,
    residual: *mut f64,
) -> JmStatus {
    guard(|| {
        let ms = system(ms)?;
        check_len(ms, len)?;
        let cone = ConeSpec::new(ms, input(a, len, "a")?.to_vec(), alpha, r)?;
        let s = solve_velocity_field(ms, &cone, input(x, len, "x")?, None, &ShapeSolveOptions::default())?;
        output(v_out, len, "v_out")?.copy_from_slice(&s.v);
        if !residual.is_null() {
            residual.write(s.residual);
        }
        Ok(())
    })
}

/// Prepares the Busemann function for target `p` at energy `h`.
///
/// # Safety
/// `p` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jm_busemann_new(
    ms: *const JmMassSystem,
    h: f64,
    p: *const f64,
    len: usize,
    out: *mut *mut JmBusemann,
) -> JmStatus {
    guard(|| {
        let m = system(ms)?;
        check_len(m, len)?;
        let target = input(p, len, "p")?.to_vec();
        let zero = vec![0.0; len];
        let anchor = phi_free(m, h, &zero, &target, &ActionOptions::default())?.value;
        let b = JmBusemann {
            ms: m.clone(),
            h,
            target,
            anchor,
        };
        write_out(out, Box::into_raw(Box::new(b)), "out")
    })
}

/// Evaluates the Busemann function at `x`.
///
/// # Safety
/// `b` must be a valid handle and `x` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn jm_busemann_eval(
    b: *const JmBusemann,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> JmStatus {
    guard(|| {
        let b = b.as_ref().ok_or_else(|| null("busemann"))?;
        check_len(&b.ms, len)?;
        let x = input(x, len, "x")?;
        let v = if x.iter().all(|c| *c == 0.0) {
            0.0
        } else {
            b.anchor - phi_free(&b.ms, b.h, x, &b.target, &ActionOptions::default())?.value
        };
        write_out(out, v, "out")
    })
}

/// # Safety
/// `b` must be null or a handle from this library, released once.
#[no_mangle]
pub unsafe extern "C" fn jm_busemann_free(b: *mut JmBusemann) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}

/// Loads a scenario file or bundled scenario by name.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jm_scenario_load(path: *const c_char, out: *mut *mut JmScenario) -> JmStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure(JmStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let sc = load_scenario(p)?;
        write_out(out, Box::into_raw(Box::new(JmScenario(sc))), "out")
    })
}

/// New mass-system handle for a scenario (release it separately).
///
/// # Safety
/// `sc` must be a valid handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jm_scenario_mass_system(
    sc: *const JmScenario,
    out: *mut *mut JmMassSystem,
) -> JmStatus {
    guard(|| {
        let sc = sc.as_ref().ok_or_else(|| null("scenario"))?;
        write_out(out, Box::into_raw(Box::new(JmMassSystem(sc.0.system.clone()))), "out")
    })
}

/// Copies the named state's positions and velocities.
///
/// # Safety
/// `name` must be NUL-terminated; `q_out` and `v_out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn jm_scenario_state(
    sc: *const JmScenario,
    name: *const c_char,
    q_out: *mut f64,
    v_out: *mut f64,
    len: usize,
) -> JmStatus {
    guard(|| {
        let sc = sc.as_ref().ok_or_else(|| null("scenario"))?;
        if name.is_null() {
            return Err(null("name"));
        }
        let name = CStr::from_ptr(name).to_string_lossy();
        check_len(&sc.0.system, len)?;
        let s = sc.0.state(&name)?;
        output(q_out, len, "q_out")?.copy_from_slice(&s.q);
        output(v_out, len, "v_out")?.copy_from_slice(&s.v);
        Ok(())
    })
}

/// # Safety
/// `sc` must be null or a handle from this library, released once.
#[no_mangle]
pub unsafe extern "C" fn jm_scenario_free(sc: *mut JmScenario) {
    if !sc.is_null() {
        drop(Box::from_raw(sc));
    }
}
