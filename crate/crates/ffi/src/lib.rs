//! C ABI over the voxevo simulation core.
//!
//! The surface is the simulator and the episode evaluator: enough to step
//! bodies from another language, visualize them, or drive a foreign
//! learning loop against the same physics. Handles are opaque, every call
//! returns a status code, failures leave a message retrievable with
//! [`vx_last_error`], and panics are caught at the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use voxevo::controller::{param_count, ControllerParams, SensorMode};
use voxevo::env::EnvInstance;
use voxevo::morphology::{MorphGenome, GRID};
use voxevo::sim::{run_episode, EpisodeError, Sim, SimConfig, SimError};

/// Result of every fallible call in this API.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum VxStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    Utf8 = 2,
    /// The morphology string does not describe a valid body.
    InvalidGenome = 3,
    /// An argument was out of range or of the wrong length.
    InvalidArgument = 4,
    /// A panic was caught at the FFI boundary.
    Panic = 5,
}

/// Opaque simulation handle created by [`vx_sim_new`].
pub struct VxSim {
    sim: Sim,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: VxStatus, message: impl std::fmt::Display) -> VxStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = message.to_string());
    status
}

fn guarded(body: impl FnOnce() -> VxStatus) -> VxStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(VxStatus::Panic, "panic caught at the FFI boundary"),
    }
}

fn episode_status(err: EpisodeError) -> VxStatus {
    match err {
        EpisodeError::Sim(SimError::InvalidGenome) => {
            fail(VxStatus::InvalidGenome, SimError::InvalidGenome)
        }
        other => fail(VxStatus::InvalidArgument, other),
    }
}

/// Copies the message of the most recent failure on this thread into `buf`
/// as a NUL-terminated string, truncating to `cap` bytes including the
/// terminator. Returns the full message length in bytes; call with a null
/// `buf` or zero `cap` to query the length alone.
///
/// # Safety
///
/// A non-null `buf` must point to at least `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn vx_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let message = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = message.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(message.as_ptr(), buf.cast(), n);
            *buf.add(n) = 0;
        }
        message.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length of the controller parameter vector, with or without the goal
/// direction sensor.
#[no_mangle]
pub extern "C" fn vx_controller_param_count(direction_sensor: bool) -> usize {
    param_count(if direction_sensor {
        SensorMode::Direction
    } else {
        SensorMode::None
    })
}

/// Side length of the morphology grid (bodies are `VX_GRID` x `VX_GRID`
/// characters).
pub const VX_GRID: usize = 5;
// cbindgen copies the initializer into the header verbatim, so the value
// must be a literal; this pins it to the core grid size.
const _: () = assert!(VX_GRID == GRID);

unsafe fn parse_morph(morph: *const c_char) -> Result<MorphGenome, VxStatus> {
    if morph.is_null() {
        return Err(fail(VxStatus::NullPointer, "morph is null"));
    }
    let text = CStr::from_ptr(morph)
        .to_str()
        .map_err(|e| fail(VxStatus::Utf8, e))?;
    text.parse::<MorphGenome>()
        .map_err(|e| fail(VxStatus::InvalidGenome, e))
}

fn flat_env(goal_sign: f64, sensor: SensorMode) -> EnvInstance {
    EnvInstance {
        terrain: None,
        goal_sign,
        sensor,
    }
}

/// Builds a simulation of the body described by `morph` (a row-major
/// `VX_GRID` x `VX_GRID` string over `R`, `S`, `H`, `V`, `.`) resting on
/// flat ground, and stores the handle in `out`.
///
/// # Safety
/// `morph` must be a NUL-terminated string and `out` a valid pointer. A
/// returned handle must be released with [`vx_sim_free`].
#[no_mangle]
pub unsafe extern "C" fn vx_sim_new(morph: *const c_char, out: *mut *mut VxSim) -> VxStatus {
    guarded(|| {
        if out.is_null() {
            return fail(VxStatus::NullPointer, "out is null");
        }
        let genome = match parse_morph(morph) {
            Ok(g) => g,
            Err(status) => return status,
        };
        match Sim::new(&genome, &flat_env(1.0, SensorMode::None), &SimConfig::default()) {
            Ok(sim) => {
                *out = Box::into_raw(Box::new(VxSim { sim }));
                VxStatus::Ok
            }
            Err(e) => fail(VxStatus::InvalidGenome, e),
        }
    })
}

/// Releases a handle from [`vx_sim_new`]. A null `sim` is a no-op.
///
/// # Safety
/// `sim` must be a handle from [`vx_sim_new`] that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn vx_sim_free(sim: *mut VxSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Number of actuated voxels, i.e. the length `vx_sim_step` expects.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vx_sim_num_actuators(sim: *const VxSim, out: *mut usize) -> VxStatus {
    guarded(|| {
        if sim.is_null() || out.is_null() {
            return fail(VxStatus::NullPointer, "sim or out is null");
        }
        *out = (*sim).sim.num_actuators();
        VxStatus::Ok
    })
}

/// Number of point masses, i.e. the pair count `vx_sim_positions` fills.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vx_sim_num_masses(sim: *const VxSim, out: *mut usize) -> VxStatus {
    guarded(|| {
        if sim.is_null() || out.is_null() {
            return fail(VxStatus::NullPointer, "sim or out is null");
        }
        *out = (*sim).sim.num_masses();
        VxStatus::Ok
    })
}

/// Advances one control step under `n` actuation commands, one per
/// actuator in row-major body order, each in [0.6, 1.6].
///
/// # Safety
/// `sim` must be a live handle and `actions` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn vx_sim_step(
    sim: *mut VxSim,
    actions: *const f64,
    n: usize,
) -> VxStatus {
    guarded(|| {
        if sim.is_null() || (actions.is_null() && n > 0) {
            return fail(VxStatus::NullPointer, "sim or actions is null");
        }
        let actions = std::slice::from_raw_parts(actions, n);
        match (*sim).sim.step(actions) {
            Ok(()) => VxStatus::Ok,
            Err(e) => fail(VxStatus::InvalidArgument, e),
        }
    })
}

/// Center-of-mass x coordinate in meters.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vx_sim_com_x(sim: *const VxSim, out: *mut f64) -> VxStatus {
    guarded(|| {
        if sim.is_null() || out.is_null() {
            return fail(VxStatus::NullPointer, "sim or out is null");
        }
        *out = (*sim).sim.com_x();
        VxStatus::Ok
    })
}

/// Copies point-mass positions as (x, y) pairs into `out_xy`. Requires
/// `cap >= 2 * vx_sim_num_masses`; `written` receives the count stored.
///
/// # Safety
/// `sim` must be a live handle, `out_xy` must point to `cap` doubles, and
/// `written` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vx_sim_positions(
    sim: *const VxSim,
    out_xy: *mut f64,
    cap: usize,
    written: *mut usize,
) -> VxStatus {
    guarded(|| {
        if sim.is_null() || out_xy.is_null() || written.is_null() {
            return fail(VxStatus::NullPointer, "sim, out_xy, or written is null");
        }
        let positions = (*sim).sim.positions();
        let needed = 2 * positions.len();
        if cap < needed {
            return fail(
                VxStatus::InvalidArgument,
                format!("need capacity {needed}, got {cap}"),
            );
        }
        let out = std::slice::from_raw_parts_mut(out_xy, needed);
        for (pair, &[x, y]) in out.chunks_exact_mut(2).zip(positions) {
            pair[0] = x;
            pair[1] = y;
        }
        *written = needed;
        VxStatus::Ok
    })
}

/// Copies the per-voxel observation grid into `out`: for each of the
/// `VX_GRID` x `VX_GRID` cells in row-major order, four doubles
/// (vx, vy, volume, touch), zeros at empty cells. Requires
/// `cap >= 4 * VX_GRID * VX_GRID`; `written` receives the count stored.
///
/// # Safety
/// `sim` must be a live handle, `out` must point to `cap` doubles, and
/// `written` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vx_sim_observe(
    sim: *const VxSim,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> VxStatus {
    guarded(|| {
        if sim.is_null() || out.is_null() || written.is_null() {
            return fail(VxStatus::NullPointer, "sim, out, or written is null");
        }
        let needed = 4 * GRID * GRID;
        if cap < needed {
            return fail(
                VxStatus::InvalidArgument,
                format!("need capacity {needed}, got {cap}"),
            );
        }
        let grid = (*sim).sim.observe();
        let out = std::slice::from_raw_parts_mut(out, needed);
        for row in 0..GRID {
            for col in 0..GRID {
                let s = grid.get(row as isize, col as isize);
                let base = 4 * (row * GRID + col);
                out[base] = s.vx;
                out[base + 1] = s.vy;
                out[base + 2] = s.volume;
                out[base + 3] = if s.touch { 1.0 } else { 0.0 };
            }
        }
        *written = needed;
        VxStatus::Ok
    })
}

/// Runs one locomotion episode of `steps` control steps on flat ground
/// and stores the fitness (goal-signed center-of-mass displacement) in
/// `out_fitness`. `theta` is the controller parameter vector, of length
/// `vx_controller_param_count(direction_sensor)`; `goal_sign` must be
/// +1.0 or -1.0.
///
/// # Safety
/// `morph` must be a NUL-terminated string, `theta` must point to
/// `theta_len` doubles, and `out_fitness` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vx_episode_run(
    morph: *const c_char,
    theta: *const f64,
    theta_len: usize,
    direction_sensor: bool,
    goal_sign: f64,
    steps: u32,
    out_fitness: *mut f64,
) -> VxStatus {
    guarded(|| {
        if theta.is_null() || out_fitness.is_null() {
            return fail(VxStatus::NullPointer, "theta or out_fitness is null");
        }
        if goal_sign != 1.0 && goal_sign != -1.0 {
            return fail(
                VxStatus::InvalidArgument,
                format!("goal_sign must be +1 or -1, got {goal_sign}"),
            );
        }
        let genome = match parse_morph(morph) {
            Ok(g) => g,
            Err(status) => return status,
        };
        let sensor = if direction_sensor {
            SensorMode::Direction
        } else {
            SensorMode::None
        };
        let values = std::slice::from_raw_parts(theta, theta_len).to_vec();
        let params = match ControllerParams::new(sensor, values) {
            Ok(p) => p,
            Err(e) => return fail(VxStatus::InvalidArgument, e),
        };
        let env = flat_env(goal_sign, sensor);
        match run_episode(&genome, &params, &env, steps, &SimConfig::default()) {
            Ok(result) => {
                *out_fitness = result.fitness;
                VxStatus::Ok
            }
            Err(e) => episode_status(e),
        }
    })
}
