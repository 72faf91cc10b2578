//! C ABI for the reversible SPH solver.
//!
//! Handles are opaque; every function returns a status code and writes its
//! results through out-pointers. The last error message is kept per thread
//! and can be copied out with `revsph_last_error_message`.

use std::cell::RefCell;
use std::ffi::c_char;

use revsph::bench::{Arrangement, DamBreakScenario, GreshoScenario};
use revsph::integrate::{self, Arithmetic, IntegratorConfig, Physics, SimState};

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_last_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RevsphStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was out of its documented domain.
    InvalidArgument = 2,
    /// The solver reported an error; see `revsph_last_error_message`.
    RuntimeError = 3,
    /// The caller-provided buffer is too small.
    BufferTooSmall = 4,
}

/// Arithmetic mode for the state vectors.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RevsphArithmetic {
    /// Q31.32 fixed point: bit-exactly reversible.
    FixedPoint = 0,
    /// IEEE double precision.
    FloatingPoint = 1,
}

/// Particle arrangement for the Gresho scenario.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RevsphArrangement {
    Square = 0,
    Hexagonal = 1,
    Vogel = 2,
}

/// Opaque simulation handle.
pub struct RevsphSim {
    state: SimState,
    physics: Physics,
    cfg: IntegratorConfig,
}

impl From<RevsphArithmetic> for Arithmetic {
    fn from(a: RevsphArithmetic) -> Arithmetic {
        match a {
            RevsphArithmetic::FixedPoint => Arithmetic::FixPa,
            RevsphArithmetic::FloatingPoint => Arithmetic::FloPa,
        }
    }
}

fn create_sim(
    build: impl FnOnce() -> Result<RevsphSim, revsph::SphError>,
    out: *mut *mut RevsphSim,
) -> RevsphStatus {
    if out.is_null() {
        return RevsphStatus::NullPointer;
    }
    match build() {
        Ok(sim) => {
            unsafe { *out = Box::into_raw(Box::new(sim)) };
            RevsphStatus::Ok
        }
        Err(e) => {
            set_last_error(e.to_string());
            RevsphStatus::RuntimeError
        }
    }
}

/// Create a dam-break simulation at spacing `dr` (meters).
///
/// On success writes a handle to `*out`; free it with `revsph_sim_destroy`.
#[no_mangle]
pub extern "C" fn revsph_sim_create_dam_break(
    dr: f64,
    arithmetic: RevsphArithmetic,
    out: *mut *mut RevsphSim,
) -> RevsphStatus {
    if !(dr > 0.0) || !dr.is_finite() {
        set_last_error(format!("dr must be positive and finite, got {dr}"));
        return RevsphStatus::InvalidArgument;
    }
    create_sim(
        || {
            let scenario = DamBreakScenario::new(dr);
            let ps = scenario.build()?;
            let mut cfg = scenario.integrator_config();
            cfg.arithmetic = arithmetic.into();
            let state = SimState::new(ps, cfg.arithmetic)?;
            Ok(RevsphSim {
                state,
                physics: scenario.physics(),
                cfg,
            })
        },
        out,
    )
}

/// Create a Gresho vortex simulation at spacing `dr` (dimensionless).
#[no_mangle]
pub extern "C" fn revsph_sim_create_gresho(
    dr: f64,
    arrangement: RevsphArrangement,
    arithmetic: RevsphArithmetic,
    out: *mut *mut RevsphSim,
) -> RevsphStatus {
    if !(dr > 0.0) || !dr.is_finite() {
        set_last_error(format!("dr must be positive and finite, got {dr}"));
        return RevsphStatus::InvalidArgument;
    }
    create_sim(
        || {
            let arrangement = match arrangement {
                RevsphArrangement::Square => Arrangement::Square,
                RevsphArrangement::Hexagonal => Arrangement::Hexagonal,
                RevsphArrangement::Vogel => Arrangement::Vogel,
            };
            let scenario = GreshoScenario::new(dr, arrangement);
            let ps = scenario.build()?;
            let mut cfg = scenario.integrator_config(revsph::bench::FilterMode::None);
            cfg.arithmetic = arithmetic.into();
            let state = SimState::new(ps, cfg.arithmetic)?;
            Ok(RevsphSim {
                state,
                physics: scenario.physics(),
                cfg,
            })
        },
        out,
    )
}

/// Advance the simulation by `n_steps` time steps.
#[no_mangle]
pub extern "C" fn revsph_sim_step(sim: *mut RevsphSim, n_steps: u64) -> RevsphStatus {
    let Some(sim) = (unsafe { sim.as_mut() }) else {
        return RevsphStatus::NullPointer;
    };
    for _ in 0..n_steps {
        if let Err(e) = integrate::step(&mut sim.state, &sim.cfg, &sim.physics) {
            set_last_error(e.to_string());
            return RevsphStatus::RuntimeError;
        }
    }
    RevsphStatus::Ok
}

/// Negate all velocities exactly and reset the step counter.
#[no_mangle]
pub extern "C" fn revsph_sim_reverse(sim: *mut RevsphSim) -> RevsphStatus {
    let Some(sim) = (unsafe { sim.as_mut() }) else {
        return RevsphStatus::NullPointer;
    };
    integrate::reverse_velocities(&mut sim.state);
    RevsphStatus::Ok
}

/// Total number of particles (fluid and wall). Returns 0 for a null handle.
#[no_mangle]
pub extern "C" fn revsph_sim_particle_count(sim: *const RevsphSim) -> u64 {
    unsafe { sim.as_ref() }.map_or(0, |s| s.state.ps.len() as u64)
}

/// Current simulation time (seconds since the last reversal).
#[no_mangle]
pub extern "C" fn revsph_sim_time(sim: *const RevsphSim, out: *mut f64) -> RevsphStatus {
    let Some(sim) = (unsafe { sim.as_ref() }) else {
        return RevsphStatus::NullPointer;
    };
    if out.is_null() {
        return RevsphStatus::NullPointer;
    }
    unsafe { *out = sim.state.time };
    RevsphStatus::Ok
}

/// Time step in use.
#[no_mangle]
pub extern "C" fn revsph_sim_dt(sim: *const RevsphSim, out: *mut f64) -> RevsphStatus {
    let Some(sim) = (unsafe { sim.as_ref() }) else {
        return RevsphStatus::NullPointer;
    };
    if out.is_null() {
        return RevsphStatus::NullPointer;
    }
    unsafe { *out = sim.cfg.dt };
    RevsphStatus::Ok
}

fn copy_vectors(
    data: &[revsph::Vec2],
    buf: *mut f64,
    len: usize,
) -> RevsphStatus {
    if buf.is_null() {
        return RevsphStatus::NullPointer;
    }
    if len < 2 * data.len() {
        set_last_error(format!(
            "buffer holds {len} doubles, need {}",
            2 * data.len()
        ));
        return RevsphStatus::BufferTooSmall;
    }
    let out = unsafe { std::slice::from_raw_parts_mut(buf, 2 * data.len()) };
    for (i, v) in data.iter().enumerate() {
        out[2 * i] = v.x;
        out[2 * i + 1] = v.y;
    }
    RevsphStatus::Ok
}

/// Copy particle positions into `buf` as interleaved x,y pairs.
/// `len` is the buffer capacity in doubles (needs 2 × particle count).
#[no_mangle]
pub extern "C" fn revsph_sim_get_positions(
    sim: *const RevsphSim,
    buf: *mut f64,
    len: usize,
) -> RevsphStatus {
    let Some(sim) = (unsafe { sim.as_ref() }) else {
        return RevsphStatus::NullPointer;
    };
    copy_vectors(&sim.state.ps.positions, buf, len)
}

/// Copy particle velocities into `buf` as interleaved x,y pairs.
#[no_mangle]
pub extern "C" fn revsph_sim_get_velocities(
    sim: *const RevsphSim,
    buf: *mut f64,
    len: usize,
) -> RevsphStatus {
    let Some(sim) = (unsafe { sim.as_ref() }) else {
        return RevsphStatus::NullPointer;
    };
    copy_vectors(&sim.state.ps.velocities, buf, len)
}

/// Total energy (kinetic + internal + gravitational + wall) of the state.
#[no_mangle]
pub extern "C" fn revsph_sim_total_energy(sim: *mut RevsphSim, out: *mut f64) -> RevsphStatus {
    let Some(sim) = (unsafe { sim.as_mut() }) else {
        return RevsphStatus::NullPointer;
    };
    if out.is_null() {
        return RevsphStatus::NullPointer;
    }
    let h = sim.physics.support_radius();
    let lists = match revsph::sphcore::neighbor_lists(&sim.state.ps, h) {
        Ok(l) => l,
        Err(e) => {
            set_last_error(e.to_string());
            return RevsphStatus::RuntimeError;
        }
    };
    if let Err(e) = revsph::sphcore::compute_density(
        &mut sim.state.ps,
        &lists,
        &sim.physics.kernel,
        sim.cfg.density_mode,
    ) {
        set_last_error(e.to_string());
        return RevsphStatus::RuntimeError;
    }
    let rec = revsph::sphcore::total_energy(
        &sim.state.ps,
        &lists,
        &sim.physics.kernel,
        &sim.physics.params,
        sim.cfg.wall_model,
        sim.state.time,
    );
    unsafe { *out = rec.total };
    RevsphStatus::Ok
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len` bytes). Returns the full message length in bytes.
#[no_mangle]
pub extern "C" fn revsph_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            let out = unsafe { std::slice::from_raw_parts_mut(buf as *mut u8, n + 1) };
            out[..n].copy_from_slice(&bytes[..n]);
            out[n] = 0;
        }
        bytes.len()
    })
}

/// Destroy a simulation handle. Null is a no-op.
#[no_mangle]
pub extern "C" fn revsph_sim_destroy(sim: *mut RevsphSim) {
    if !sim.is_null() {
        drop(unsafe { Box::from_raw(sim) });
    }
}
