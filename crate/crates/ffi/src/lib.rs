//! C interface to the dissipaton master-equation toolkit.
//!
//! Everything flows through one opaque handle.  Build it from a run file —
//! the same TOML schema the command-line binary reads, or the JSON manifest
//! of an earlier run — then integrate the hierarchy with the reference
//! solver or train the network ansatz, and copy the observable columns out.
//! The header `include/dissipaton_pinn.h` is regenerated on every build.
//!
//! ```c
//! #include "dissipaton_pinn.h"
//!
//! DqmeSimulation *sim = NULL;
//! if (dqme_simulation_from_file("run.toml", &sim) != DQME_STATUS_OK) {
//!     char msg[256];
//!     dqme_last_error(msg, sizeof msg);
//!     fprintf(stderr, "setup failed: %s\n", msg);
//!     return 1;
//! }
//! dqme_run_reference(sim);
//! size_t n = dqme_trajectory_len(sim);
//! double *n_up = malloc(n * sizeof *n_up);
//! dqme_trajectory_column(sim, DQME_COLUMN_OCCUPATION_UP, n_up, n);
//! /* ... */
//! free(n_up);
//! dqme_simulation_free(sim);
//! ```
//!
//! Conventions, uniform across the surface:
//!
//! * Fallible calls return [`DqmeStatus`]; anything but `DQME_STATUS_OK`
//!   leaves a human-readable explanation retrievable through
//!   [`dqme_last_error`].  The error slot is thread-local, so concurrent
//!   callers on different threads never see each other's messages.
//! * Handles come from `dqme_simulation_*` constructors, are freed exactly
//!   once with [`dqme_simulation_free`], and must not be shared between
//!   threads without external synchronization.
//! * No function ever unwinds across the boundary: internal panics are
//!   caught and surfaced as `DQME_STATUS_PANIC`.

use dissipaton_pinn::bath::{correlation_from_modes, Sigma};
use dissipaton_pinn::cli::{
    assemble, load_config, sample_grid, trace_drift, Assembled, RunError, EXIT_IO, EXIT_OPTIM,
    EXIT_PHYSICS, PROPAGATION_TRACE_GUARD,
};
use dissipaton_pinn::config::RunConfig;
use dissipaton_pinn::driver::{reference_trajectory, train_full_horizon, TrainSetup, Trajectory};
use dissipaton_pinn::dqme::DqmeError;
use dissipaton_pinn::pinn::closed_hierarchy_gradient_audit;
use std::cell::RefCell;
use std::ffi::CStr;
use std::os::raw::{c_char, c_int};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

/// Status code of every fallible call.
///
/// The values 1–4 coincide with the exit classes of the command-line
/// binary, so a code means the same thing whichever surface reported it;
/// the remaining values are interface errors that can only happen here.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DqmeStatus {
    /// The call succeeded.
    Ok = 0,
    /// A file could not be read or written.
    Io = 1,
    /// The run file is malformed or inconsistent.
    Config = 2,
    /// A physics invariant failed at run time (non-finite state, trace
    /// drift, a violated generator arbiter).
    Physics = 3,
    /// The optimizer gave up before reaching its stage targets.
    Optimization = 4,
    /// A required pointer argument was NULL.
    NullArgument = 5,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 6,
    /// The caller's buffer is shorter than the data; nothing was copied.
    BufferTooSmall = 7,
    /// An internal panic was caught at the boundary; the handle is left in
    /// an unspecified but freeable state.
    Panic = 8,
}

/// Observable columns of a computed trajectory.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DqmeColumn {
    /// Sample times t.
    Time = 0,
    /// Re tr ρ(0) — stays 1 on a healthy run.
    TraceRe = 1,
    /// Im tr ρ(0) — stays 0 on a healthy run.
    TraceIm = 2,
    /// Impurity occupation ⟨n̂_↑⟩.
    OccupationUp = 3,
    /// Particle current out of the first reservoir.
    CurrentLeft = 4,
    /// Particle current out of the second reservoir (0 with one reservoir).
    CurrentRight = 5,
}

/// A configured simulation: parsed run file, expanded bath, enumerated
/// hierarchy, assembled generator, equilibrium initial tensor, and the most
/// recently computed trajectory, if any.  Opaque to C.
pub struct DqmeSimulation {
    cfg: RunConfig,
    asm: Assembled,
    trajectory: Option<Trajectory>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: DqmeStatus, msg: impl Into<String>) -> DqmeStatus {
    set_error(msg);
    status
}

/// Fold a run failure into its status, through the same classification the
/// command-line binary uses for its exit code — the two surfaces cannot
/// drift apart.
fn run_error(e: RunError) -> DqmeStatus {
    let status = match e.exit_code() {
        x if x == EXIT_IO => DqmeStatus::Io,
        x if x == EXIT_PHYSICS => DqmeStatus::Physics,
        x if x == EXIT_OPTIM => DqmeStatus::Optimization,
        _ => DqmeStatus::Config,
    };
    fail(status, e.to_string())
}

/// Run `f`, converting a panic into `DQME_STATUS_PANIC` instead of letting
/// it unwind into the caller's C frames.
fn guarded(f: impl FnOnce() -> DqmeStatus) -> DqmeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "opaque panic payload".into());
            fail(DqmeStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

/// Version of the library, as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dqme_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copy the explanation of the most recent failure on this thread into
/// `buf` (NUL-terminated, truncated to `cap` bytes including the NUL) and
/// return the full message length in bytes, excluding the NUL.  `buf` may
/// be NULL to query the length alone; the message is retained either way.
///
/// # Safety
/// `buf`, when non-NULL, must point to at least `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dqme_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

fn build_simulation(cfg: RunConfig) -> Result<DqmeSimulation, RunError> {
    let asm = assemble(&cfg)?;
    Ok(DqmeSimulation {
        cfg,
        asm,
        trajectory: None,
    })
}

unsafe fn construct(
    out: *mut *mut DqmeSimulation,
    cfg: Result<RunConfig, RunError>,
) -> DqmeStatus {
    *out = std::ptr::null_mut();
    guarded(|| match cfg.and_then(build_simulation) {
        Ok(sim) => {
            *out = Box::into_raw(Box::new(sim));
            DqmeStatus::Ok
        }
        Err(e) => run_error(e),
    })
}

/// Build a simulation from the text of a TOML run file.  On success `*out`
/// receives an owned handle; on failure it is set to NULL.
///
/// # Safety
/// `text` must point to a NUL-terminated string and `out` to a writable
/// pointer slot.
#[no_mangle]
pub unsafe extern "C" fn dqme_simulation_from_toml(
    text: *const c_char,
    out: *mut *mut DqmeSimulation,
) -> DqmeStatus {
    if out.is_null() {
        return fail(DqmeStatus::NullArgument, "out is NULL");
    }
    if text.is_null() {
        *out = std::ptr::null_mut();
        return fail(DqmeStatus::NullArgument, "text is NULL");
    }
    let cfg = match CStr::from_ptr(text).to_str() {
        Ok(s) => RunConfig::from_toml(s).map_err(RunError::from),
        Err(e) => {
            *out = std::ptr::null_mut();
            return fail(DqmeStatus::InvalidUtf8, format!("text is not UTF-8: {e}"));
        }
    };
    construct(out, cfg)
}

/// Build a simulation from a run file on disk: TOML, or the JSON manifest
/// of an earlier run (the manifest embeds its effective configuration).
///
/// # Safety
/// `path` must point to a NUL-terminated string and `out` to a writable
/// pointer slot.
#[no_mangle]
pub unsafe extern "C" fn dqme_simulation_from_file(
    path: *const c_char,
    out: *mut *mut DqmeSimulation,
) -> DqmeStatus {
    if out.is_null() {
        return fail(DqmeStatus::NullArgument, "out is NULL");
    }
    if path.is_null() {
        *out = std::ptr::null_mut();
        return fail(DqmeStatus::NullArgument, "path is NULL");
    }
    let cfg = match CStr::from_ptr(path).to_str() {
        Ok(s) => load_config(Path::new(s)),
        Err(e) => {
            *out = std::ptr::null_mut();
            return fail(DqmeStatus::InvalidUtf8, format!("path is not UTF-8: {e}"));
        }
    };
    construct(out, cfg)
}

/// Release a handle.  NULL is a harmless no-op; freeing twice is not.
///
/// # Safety
/// `sim`, when non-NULL, must be a pointer obtained from a
/// `dqme_simulation_*` constructor that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn dqme_simulation_free(sim: *mut DqmeSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Number of retained hierarchy states (the dimension of the generator).
/// Returns 0 for a NULL handle.
///
/// # Safety
/// `sim`, when non-NULL, must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dqme_hierarchy_dim(sim: *const DqmeSimulation) -> usize {
    if sim.is_null() {
        return 0;
    }
    (*sim).asm.basis.len()
}

/// Number of exponential modes in the bath expansion (both σ, all
/// reservoirs and orbitals).  Returns 0 for a NULL handle.
///
/// # Safety
/// `sim`, when non-NULL, must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dqme_mode_count(sim: *const DqmeSimulation) -> usize {
    if sim.is_null() {
        return 0;
    }
    (*sim).asm.modes.len()
}

/// Number of stored entries in the sparse generator.  Returns 0 for a NULL
/// handle.
///
/// # Safety
/// `sim`, when non-NULL, must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dqme_generator_nnz(sim: *const DqmeSimulation) -> usize {
    if sim.is_null() {
        return 0;
    }
    (*sim).asm.liou.nnz()
}

/// Evaluate the bath correlation function C^σ(t) of one (reservoir,
/// orbital) pair from the exponential expansion.  `sigma` is the sign σ:
/// −1 for C⁻ (hole side), +1 for C⁺ (particle side).
///
/// # Safety
/// `sim` must be a live handle; `re_out` and `im_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dqme_correlation(
    sim: *const DqmeSimulation,
    reservoir: usize,
    orbital: usize,
    sigma: c_int,
    t: f64,
    re_out: *mut f64,
    im_out: *mut f64,
) -> DqmeStatus {
    if sim.is_null() || re_out.is_null() || im_out.is_null() {
        return fail(DqmeStatus::NullArgument, "sim/re_out/im_out must be non-NULL");
    }
    let s = match sigma {
        -1 => Sigma::Minus,
        1 => Sigma::Plus,
        other => {
            return fail(
                DqmeStatus::Config,
                format!("sigma must be -1 or +1, got {other}"),
            )
        }
    };
    match correlation_from_modes(&(*sim).asm.modes, reservoir, orbital, s, t) {
        Ok(c) => {
            *re_out = c.re;
            *im_out = c.im;
            DqmeStatus::Ok
        }
        Err(e) => fail(DqmeStatus::Config, e.to_string()),
    }
}

/// Integrate the master equation with the fixed-step reference solver over
/// the configured horizon and store the observable trajectory on the
/// handle, replacing any earlier one.  Fails with `DQME_STATUS_PHYSICS`
/// if the vacuum trace drifts past its guard.
///
/// # Safety
/// `sim` must be a live handle, not aliased by concurrent calls.
#[no_mangle]
pub unsafe extern "C" fn dqme_run_reference(sim: *mut DqmeSimulation) -> DqmeStatus {
    if sim.is_null() {
        return fail(DqmeStatus::NullArgument, "sim is NULL");
    }
    let sim = &mut *sim;
    guarded(|| {
        let t0 = sim.cfg.system.t0;
        let t1 = t0 + sim.cfg.integrator.horizon;
        let grid = sample_grid(t0, t1, sim.cfg.output.sample_dt);
        match reference_trajectory(
            &sim.asm.liou,
            &sim.asm.basis,
            &sim.asm.rho0,
            &grid,
            sim.cfg.integrator.dt,
        ) {
            Ok(traj) => {
                let drift = trace_drift(&traj);
                if drift > PROPAGATION_TRACE_GUARD {
                    return fail(
                        DqmeStatus::Physics,
                        format!(
                            "vacuum trace drifted by {drift:.3e} \
                             (guard {PROPAGATION_TRACE_GUARD:.0e})"
                        ),
                    );
                }
                sim.trajectory = Some(traj);
                DqmeStatus::Ok
            }
            Err(e) => fail(DqmeStatus::Physics, e.to_string()),
        }
    })
}

/// Train the per-subdomain networks over the configured schedule and store
/// the stitched observable trajectory on the handle, replacing any earlier
/// one.  When a subdomain misses its stage targets the call returns
/// `DQME_STATUS_OPTIMIZATION`; pass a nonzero
/// `override_subdomain_failure` to keep training the remaining subdomains
/// anyway, exactly like the command-line flag of the same name.  On that
/// failure the stored trajectory still covers the trained prefix.
///
/// # Safety
/// `sim` must be a live handle, not aliased by concurrent calls.
#[no_mangle]
pub unsafe extern "C" fn dqme_run_training(
    sim: *mut DqmeSimulation,
    override_subdomain_failure: c_int,
) -> DqmeStatus {
    if sim.is_null() {
        return fail(DqmeStatus::NullArgument, "sim is NULL");
    }
    let sim = &mut *sim;
    guarded(|| {
        let schedule = match sim.cfg.training_schedule() {
            Ok(s) => s,
            Err(e) => return fail(DqmeStatus::Config, e.to_string()),
        };
        let setup = TrainSetup {
            liou: &sim.asm.liou,
            basis: &sim.asm.basis,
            schedule: &schedule,
            rho0: &sim.asm.rho0,
            n_h: sim.cfg.network.n_h,
            k: sim.cfg.network.layers,
            seed: sim.cfg.network.seed,
            opt: sim.cfg.optimizer_options(),
            cusp_extras: sim.cfg.schedule.cusp_extras,
            override_subdomain_failure: override_subdomain_failure != 0,
            extrapolate_to: sim.cfg.schedule.extrapolate_to,
            output_dt: sim.cfg.output.sample_dt,
        };
        match train_full_horizon(&setup) {
            Ok(outcome) => {
                let completed = outcome.completed;
                sim.trajectory = Some(outcome.trajectory);
                if completed {
                    DqmeStatus::Ok
                } else {
                    fail(
                        DqmeStatus::Optimization,
                        "a subdomain missed its stage targets; the stored \
                         trajectory covers the trained prefix",
                    )
                }
            }
            Err(DqmeError::NonPhysical(m)) => {
                fail(DqmeStatus::Optimization, format!("training aborted: {m}"))
            }
            Err(e) => fail(DqmeStatus::Physics, e.to_string()),
        }
    })
}

/// Number of samples in the stored trajectory; 0 when nothing has been
/// computed yet or the handle is NULL.
///
/// # Safety
/// `sim`, when non-NULL, must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dqme_trajectory_len(sim: *const DqmeSimulation) -> usize {
    if sim.is_null() {
        return 0;
    }
    (*sim).trajectory.as_ref().map_or(0, |t| t.len())
}

/// Copy one observable column of the stored trajectory into `buf`, which
/// must hold at least [`dqme_trajectory_len`] doubles (`len` says how many
/// it actually holds).
///
/// # Safety
/// `sim` must be a live handle; `buf` must point to `len` writable doubles;
/// `column` must be a valid `DqmeColumn` value.
#[no_mangle]
pub unsafe extern "C" fn dqme_trajectory_column(
    sim: *const DqmeSimulation,
    column: DqmeColumn,
    buf: *mut f64,
    len: usize,
) -> DqmeStatus {
    if sim.is_null() || buf.is_null() {
        return fail(DqmeStatus::NullArgument, "sim/buf must be non-NULL");
    }
    let traj = match (*sim).trajectory.as_ref() {
        Some(t) => t,
        None => {
            return fail(
                DqmeStatus::Config,
                "no trajectory stored: run the integrator or the trainer first",
            )
        }
    };
    let src: &[f64] = match column {
        DqmeColumn::Time => &traj.times,
        DqmeColumn::TraceRe => &traj.trace_re,
        DqmeColumn::TraceIm => &traj.trace_im,
        DqmeColumn::OccupationUp => &traj.n_up,
        DqmeColumn::CurrentLeft => &traj.current_left,
        DqmeColumn::CurrentRight => &traj.current_right,
    };
    if len < src.len() {
        return fail(
            DqmeStatus::BufferTooSmall,
            format!("buffer holds {len} doubles, needs {}", src.len()),
        );
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    DqmeStatus::Ok
}

/// Largest deviation of the vacuum trace from 1 along the stored
/// trajectory — a cheap quality gauge after either run.
///
/// # Safety
/// `sim` must be a live handle; `drift_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dqme_trace_drift(
    sim: *const DqmeSimulation,
    drift_out: *mut f64,
) -> DqmeStatus {
    if sim.is_null() || drift_out.is_null() {
        return fail(DqmeStatus::NullArgument, "sim/drift_out must be non-NULL");
    }
    match (*sim).trajectory.as_ref() {
        Some(t) => {
            *drift_out = trace_drift(t);
            DqmeStatus::Ok
        }
        None => fail(
            DqmeStatus::Config,
            "no trajectory stored: run the integrator or the trainer first",
        ),
    }
}

/// Finite-difference audit of the training gradient on a fixed closed
/// twelve-entry hierarchy: `draws` independent network draws, worst
/// relative deviation written to `worst_out`.  Healthy builds land near
/// 1e−9; anything past 1e−6 means the adjoint sweep disagrees with the
/// loss.
///
/// # Safety
/// `worst_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dqme_gradient_audit(draws: u64, worst_out: *mut f64) -> DqmeStatus {
    if worst_out.is_null() {
        return fail(DqmeStatus::NullArgument, "worst_out is NULL");
    }
    guarded(|| match closed_hierarchy_gradient_audit(draws) {
        Ok(worst) => {
            *worst_out = worst;
            DqmeStatus::Ok
        }
        Err(e) => fail(DqmeStatus::Physics, e.to_string()),
    })
}
