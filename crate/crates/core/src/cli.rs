//! Subcommand dispatch and artifact emission.
//!
//! One TOML run file (see [`crate::config`]) drives every subcommand; a JSON
//! manifest from an earlier run is accepted in its place, which is what
//! makes a run reproducible from its own paper trail.  Artifacts are always
//! written to a temporary name in the target directory and renamed into
//! place, so a crash never leaves a half-written file under the final name.
//!
//! Exit codes: 0 on success, 2 for configuration problems (including
//! malformed run files and unusable CLI inputs), 3 when a physics invariant
//! fails at run time (non-finite state, trace drift, a violated arbiter),
//! 4 when the optimizer gives up.  Plain I/O failures exit 1.

use crate::bath::{
    correlation_from_modes, correlation_quadrature_oracle, expand_bath, BathError,
    ExponentialMode, ModeKind, Sigma,
};
use crate::config::{ConfigError, RunConfig, SeedPolicy};
use crate::driver::{
    equilibrium_initial_tensor, reference_trajectory, relative_error_metric,
    train_full_horizon, ObservableKind, Trajectory, TrainSetup,
};
use crate::dqme::basis::{
    enumerate_basis, reachability_filter, vacuum_diagonal_seeds, BasisState, RdtBasis,
};
use crate::dqme::convention::{
    algebraic_survivors, arbitration_report, selected_convention, ArbiterCheck,
};
use crate::dqme::liouvillian::{
    build_liouvillian, pair_levels, Convention, DissipatonLevel, Liouvillian,
};
use crate::dqme::{DqmeError, SystemSpec};
use crate::pinn::closed_hierarchy_gradient_audit;
use crate::reference::propagate_reference;
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PHYSICS: i32 = 3;
pub const EXIT_OPTIM: i32 = 4;

/// Runtime failure of a subcommand, carrying its exit class.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("physics invariant violated: {0}")]
    Physics(String),
    #[error("optimization failed: {0}")]
    Optimization(String),
    #[error("{0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            // An unreadable run file is an I/O failure, not a malformed one.
            RunError::Config(ConfigError::Io { .. }) => EXIT_IO,
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Physics(_) => EXIT_PHYSICS,
            RunError::Optimization(_) => EXIT_OPTIM,
            RunError::Io(_) => EXIT_IO,
        }
    }
}

fn io_err(ctx: &str, e: std::io::Error) -> RunError {
    RunError::Io(format!("{ctx}: {e}"))
}

/// Errors raised while *building* a run trace back to the run file (bad
/// sizes, grids, caps); violated invariants do not and keep their own exit
/// class.
fn classify(e: DqmeError) -> RunError {
    match e {
        DqmeError::NonPhysical(_)
        | DqmeError::ConventionRejected(_)
        | DqmeError::ConventionSearch(_) => RunError::Physics(e.to_string()),
        other => RunError::Config(ConfigError::Invalid(other.to_string())),
    }
}

fn classify_bath(e: BathError) -> RunError {
    match e {
        BathError::InvalidSpec(_) => RunError::Config(ConfigError::Invalid(e.to_string())),
        other => RunError::Physics(other.to_string()),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dissipaton-pinn",
    version,
    about = "Dissipaton-space master equation for a quenched impurity: \
             reference integration and subdomain-trained network solver"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the bath correlation functions and their exponential modes.
    Bath(CommonArgs),
    /// Enumerate the reduced tensor space and export the sparse generator.
    Basis(CommonArgs),
    /// Integrate the master equation with the fixed-step reference solver.
    Propagate(CommonArgs),
    /// Train the per-subdomain networks and emit the stitched trajectory.
    Train(CommonArgs),
    /// Relative-error metrics between two trajectory CSV files.
    Compare(CompareArgs),
    /// Finite-difference audit of the training gradient on a closed
    /// twelve-entry hierarchy.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run file (TOML), or the JSON manifest of an earlier run.
    #[arg(long)]
    pub config: PathBuf,
    /// Artifact directory; overrides [output] dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Accepted for interface stability; execution stays single-threaded
    /// for bitwise reproducibility, so values above 1 are clamped.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Keep training later subdomains after one misses its stage targets.
    #[arg(long)]
    pub override_subdomain_failure: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// First trajectory CSV.
    pub a: PathBuf,
    /// Second trajectory CSV.
    pub b: PathBuf,
    /// Restrict the metrics to [T0, T1] (default: the full overlap).
    #[arg(long, num_args = 2, value_names = ["T0", "T1"], allow_negative_numbers = true)]
    pub window: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Optional run file; schema-checked when given (the audit instance
    /// itself is fixed).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Independent network draws.
    #[arg(long, default_value_t = 20)]
    pub draws: u64,
}

/// Read a run configuration from a TOML run file, or recover it from the
/// manifest of an earlier run.
pub fn load_config(path: &Path) -> Result<RunConfig, RunError> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path)
            .map_err(|e| io_err(&format!("reading {}", path.display()), e))?;
        let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| {
            RunError::Config(ConfigError::Parse(format!(
                "{} is not a run manifest: {e}",
                path.display()
            )))
        })?;
        manifest.config.validate()?;
        Ok(manifest.config)
    } else {
        Ok(RunConfig::load(path)?)
    }
}

// ---------------------------------------------------------------------------
// Artifact plumbing
// ---------------------------------------------------------------------------

/// 17 significant decimal digits: enough to reproduce any f64 bit-exactly
/// on read-back, few enough to stay fixed-width and diffable.
fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write `bytes` under a temporary name in the destination directory, then
/// rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)
        .map_err(|e| io_err(&format!("creating {}", dir.display()), e))?;
    let name = path
        .file_name()
        .ok_or_else(|| RunError::Io(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    std::fs::write(&tmp, bytes).map_err(|e| io_err(&format!("writing {}", tmp.display()), e))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| io_err(&format!("renaming into {}", path.display()), e))
}

pub const TRAJECTORY_HEADER: &str = "t,trace_re,trace_im,n_up,I_L,I_R";

/// Observable series as CSV, strictly time-ascending, 17 significant digits.
pub fn emit_trajectory(traj: &Trajectory, path: &Path) -> Result<(), RunError> {
    if traj.times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(RunError::Physics(
            "trajectory times must increase strictly".into(),
        ));
    }
    let mut text = String::from(TRAJECTORY_HEADER);
    text.push('\n');
    for i in 0..traj.len() {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            sig17(traj.times[i]),
            sig17(traj.trace_re[i]),
            sig17(traj.trace_im[i]),
            sig17(traj.n_up[i]),
            sig17(traj.current_left[i]),
            sig17(traj.current_right[i]),
        ));
    }
    write_atomic(path, text.as_bytes())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| io_err(&format!("reading {}", path.display()), e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| RunError::Config(ConfigError::Invalid(format!(
            "{}: empty trajectory file",
            path.display()
        ))))?;
    if header.trim() != TRAJECTORY_HEADER {
        return Err(RunError::Config(ConfigError::Invalid(format!(
            "{}: unexpected header '{header}'",
            path.display()
        ))));
    }
    let mut traj = Trajectory::default();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 6 {
            return Err(RunError::Config(ConfigError::Invalid(format!(
                "{}: row {} has {} columns, expected 6",
                path.display(),
                k + 2,
                cells.len()
            ))));
        }
        let mut vals = [0.0f64; 6];
        for (v, cell) in vals.iter_mut().zip(&cells) {
            *v = cell.trim().parse().map_err(|e| {
                RunError::Config(ConfigError::Invalid(format!(
                    "{}: row {}: bad number '{cell}': {e}",
                    path.display(),
                    k + 2
                )))
            })?;
        }
        traj.times.push(vals[0]);
        traj.trace_re.push(vals[1]);
        traj.trace_im.push(vals[2]);
        traj.n_up.push(vals[3]);
        traj.current_left.push(vals[4]);
        traj.current_right.push(vals[5]);
    }
    Ok(traj)
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisSummary {
    pub n_e: usize,
    pub m_max: u32,
    pub full_states: usize,
    pub filtered_states: usize,
    pub content_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConventionSummary {
    pub winner: Convention,
    pub candidates: usize,
    pub algebraic_survivors: usize,
    pub arbiters: Vec<ArbiterCheck>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: usize,
    pub n_points: usize,
    pub loss: f64,
    pub l_r: f64,
    pub l_i: f64,
    pub l_tr: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub reached_target: bool,
    pub termination: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubdomainSummary {
    pub t_start: f64,
    pub t_end: f64,
    pub failed: bool,
    pub stages: Vec<StageSummary>,
}

/// Everything needed to audit a run — and to repeat it: the `config` field
/// is the complete effective configuration, so the manifest itself is a
/// valid `--config` input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: RunConfig,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<BasisSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convention: Option<ConventionSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subdomains: Vec<SubdomainSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_drift: Option<f64>,
    pub completed: bool,
    pub timings_ms: BTreeMap<String, f64>,
    pub artifacts: BTreeMap<String, String>,
}

pub fn emit_manifest(manifest: &RunManifest, path: &Path) -> Result<(), RunError> {
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| RunError::Io(format!("encoding manifest: {e}")))?;
    write_atomic(path, json.as_bytes())
}

fn manifest_skeleton(command: &str, cfg: &RunConfig) -> RunManifest {
    RunManifest {
        command: command.into(),
        config: cfg.clone(),
        seed: cfg.network.seed,
        basis: None,
        convention: None,
        subdomains: Vec::new(),
        trace_drift: None,
        completed: true,
        timings_ms: BTreeMap::new(),
        artifacts: BTreeMap::new(),
    }
}

// ---------------------------------------------------------------------------
// Pipeline assembly shared by basis/propagate/train
// ---------------------------------------------------------------------------

pub struct Assembled {
    pub system: SystemSpec,
    pub modes: Vec<ExponentialMode>,
    pub levels: Vec<DissipatonLevel>,
    pub full_states: usize,
    pub basis: RdtBasis,
    pub liou: Liouvillian,
    pub rho0: Vec<Complex64>,
    pub timings_ms: BTreeMap<String, f64>,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Bath expansion → level pairing → basis truncation and filtering →
/// generator assembly (post-quench parameters, arbitrated convention) →
/// pre-quench equilibrium tensor.
pub fn assemble(cfg: &RunConfig) -> Result<Assembled, RunError> {
    let mut timings = BTreeMap::new();
    let system = cfg.system_spec();
    let bath = cfg.bath_spec();

    let t = Instant::now();
    let modes = expand_bath(&bath, system.n_s).map_err(classify_bath)?;
    let levels = pair_levels(&modes).map_err(classify)?;
    timings.insert("bath_expansion".into(), ms(t));

    let t = Instant::now();
    let full = enumerate_basis(system.n_s, levels.len(), cfg.basis.m_max, cfg.basis.cap)
        .map_err(classify)?;
    let full_states = full.len();
    let pairs: Vec<(usize, usize)> = levels
        .iter()
        .enumerate()
        .map(|(j, l)| (j, l.orbital))
        .collect();
    let basis = match cfg.basis.seeds {
        SeedPolicy::VacuumDiagonal => {
            let seeds = vacuum_diagonal_seeds(&full);
            reachability_filter(&full, &pairs, &seeds).map_err(classify)?
        }
        SeedPolicy::VacuumBlock => {
            let seeds: Vec<BasisState> = full
                .states
                .iter()
                .copied()
                .filter(|s| s.tier(&full.layout) == 0)
                .collect();
            reachability_filter(&full, &pairs, &seeds).map_err(classify)?
        }
        SeedPolicy::Unfiltered => full,
    };
    timings.insert("basis_enumeration".into(), ms(t));

    let t = Instant::now();
    let params = system.params_at(system.t0);
    let liou =
        build_liouvillian(&params, &levels, &basis, selected_convention()).map_err(classify)?;
    timings.insert("generator_assembly".into(), ms(t));

    let beta = cfg.bath.reservoirs[0].beta;
    let rho0 = equilibrium_initial_tensor(&system, &basis, beta, cfg.system.mu_equilibrium)
        .map_err(classify)?;

    Ok(Assembled {
        system,
        modes,
        levels,
        full_states,
        basis,
        liou,
        rho0,
        timings_ms: timings,
    })
}

fn basis_summary(a: &Assembled, cfg: &RunConfig) -> BasisSummary {
    BasisSummary {
        n_e: a.levels.len(),
        m_max: cfg.basis.m_max,
        full_states: a.full_states,
        filtered_states: a.basis.len(),
        content_hash: a.basis.content_hash(),
    }
}

fn convention_summary() -> Result<ConventionSummary, RunError> {
    let winner = *selected_convention();
    let arbiters = arbitration_report(&winner).map_err(classify)?;
    Ok(ConventionSummary {
        winner,
        candidates: Convention::candidates().len(),
        algebraic_survivors: algebraic_survivors().len(),
        arbiters,
    })
}

/// Shared output grid: `n = round(span/dt)` uniform cells with both
/// endpoints landed exactly, matching the training driver's choice so
/// reference and network trajectories line up node for node.
pub fn sample_grid(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    let n = (((t1 - t0) / dt).round() as usize).max(1);
    let h = (t1 - t0) / n as f64;
    let mut v: Vec<f64> = (0..n).map(|i| t0 + i as f64 * h).collect();
    v.push(t1);
    v
}

// ---------------------------------------------------------------------------
// Subcommand runners
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ModeRow {
    sigma: String,
    /// σ as an integer sign, for tools that prefer numbers.
    s: i8,
    /// Reservoir index α.
    alpha: usize,
    /// Impurity spin-orbital ν.
    nu: usize,
    /// Pole index within the correlation function.
    p: usize,
    eta_re: f64,
    eta_im: f64,
    gamma_re: f64,
    gamma_im: f64,
    kind: ModeKind,
}

fn run_bath(cfg: &RunConfig, out: &Path) -> Result<RunManifest, RunError> {
    let bath = cfg.bath_spec();
    let t = Instant::now();
    let modes = expand_bath(&bath, cfg.system.n_s).map_err(classify_bath)?;
    let rows: Vec<ModeRow> = modes
        .iter()
        .map(|m| ModeRow {
            sigma: match m.sigma {
                Sigma::Minus => "-".into(),
                Sigma::Plus => "+".into(),
            },
            s: m.sigma.sign() as i8,
            alpha: m.reservoir,
            nu: m.orbital,
            p: m.pole,
            eta_re: m.eta.re,
            eta_im: m.eta.im,
            gamma_re: m.gamma.re,
            gamma_im: m.gamma.im,
            kind: m.kind,
        })
        .collect();
    let table_path = out.join(&cfg.output.bath_table);
    let json = serde_json::to_string_pretty(&rows)
        .map_err(|e| RunError::Io(format!("encoding mode table: {e}")))?;
    write_atomic(&table_path, json.as_bytes())?;

    // Mode sums next to the quadrature oracle on a shared grid, every
    // channel and charge.
    let nsamp = cfg.output.bath_samples;
    let tmax = cfg.output.bath_t_max;
    let mut csv = String::from("t,alpha,nu,sigma,c_re,c_im,oracle_re,oracle_im\n");
    for (alpha, res) in bath.reservoirs.iter().enumerate() {
        for (nu, &g) in res.coupling.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for sigma in Sigma::BOTH {
                for k in 0..nsamp {
                    let tk = tmax * k as f64 / (nsamp - 1) as f64;
                    let c = correlation_from_modes(&modes, alpha, nu, sigma, tk)
                        .map_err(classify_bath)?;
                    let o = correlation_quadrature_oracle(&bath, alpha, nu, sigma, tk)
                        .map_err(classify_bath)?;
                    csv.push_str(&format!(
                        "{},{},{},{},{},{},{},{}\n",
                        sig17(tk),
                        alpha,
                        nu,
                        match sigma {
                            Sigma::Minus => "-",
                            Sigma::Plus => "+",
                        },
                        sig17(c.re),
                        sig17(c.im),
                        sig17(o.re),
                        sig17(o.im),
                    ));
                }
            }
        }
    }
    let csv_path = out.join(&cfg.output.bath_csv);
    write_atomic(&csv_path, csv.as_bytes())?;

    println!(
        "bath: {} exponential modes across {} reservoirs; correlation table at {}",
        modes.len(),
        bath.reservoirs.len(),
        csv_path.display()
    );
    let mut manifest = manifest_skeleton("bath", cfg);
    manifest.timings_ms.insert("bath_total".into(), ms(t));
    manifest
        .artifacts
        .insert("mode_table".into(), table_path.display().to_string());
    manifest
        .artifacts
        .insert("correlation_csv".into(), csv_path.display().to_string());
    Ok(manifest)
}

fn run_basis(cfg: &RunConfig, out: &Path) -> Result<RunManifest, RunError> {
    let a = assemble(cfg)?;
    println!(
        "states: {} enumerated, {} reachable ({} dissipaton levels, m_max = {})",
        a.full_states,
        a.basis.len(),
        a.levels.len(),
        cfg.basis.m_max
    );
    println!(
        "generator: dim {}, {} stored entries, trace residual {:.3e}, \
         conjugation residual {:.3e}",
        a.basis.len(),
        a.liou.nnz(),
        a.liou.trace_row_residual(&a.basis),
        a.liou.conjugation_residual(&a.basis)
    );

    let mut triplets = Vec::new();
    a.liou
        .export_triplets(&mut triplets)
        .map_err(|e| io_err("encoding triplets", e))?;
    let trip_path = out.join(&cfg.output.triplets);
    write_atomic(&trip_path, &triplets)?;

    let mut manifest = manifest_skeleton("basis", cfg);
    manifest.basis = Some(basis_summary(&a, cfg));
    manifest.convention = Some(convention_summary()?);
    manifest.timings_ms = a.timings_ms;
    manifest
        .artifacts
        .insert("triplets".into(), trip_path.display().to_string());
    Ok(manifest)
}

/// Largest deviation of the vacuum trace from 1 along a trajectory.
pub fn trace_drift(traj: &Trajectory) -> f64 {
    traj.trace_re
        .iter()
        .zip(&traj.trace_im)
        .map(|(re, im)| ((re - 1.0).powi(2) + im * im).sqrt())
        .fold(0.0, f64::max)
}

/// Guard on the reference propagation: RK4 at the configured step keeps the
/// trace to ~1e−10 on healthy runs, so anything past this is a real defect.
pub const PROPAGATION_TRACE_GUARD: f64 = 1e-6;

#[derive(Debug, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub time: f64,
    pub basis_hash: String,
    /// Tensor entries as (re, im) pairs in canonical basis order.
    pub state: Vec<[f64; 2]>,
}

fn run_propagate(cfg: &RunConfig, out: &Path) -> Result<RunManifest, RunError> {
    let a = assemble(cfg)?;
    let t0 = cfg.system.t0;
    let t1 = t0 + cfg.integrator.horizon;
    let grid = sample_grid(t0, t1, cfg.output.sample_dt);

    let t = Instant::now();
    let traj = reference_trajectory(&a.liou, &a.basis, &a.rho0, &grid, cfg.integrator.dt)
        .map_err(classify)?;
    let mut timings = a.timings_ms.clone();
    timings.insert("propagation".into(), ms(t));

    let drift = trace_drift(&traj);
    if drift > PROPAGATION_TRACE_GUARD {
        return Err(RunError::Physics(format!(
            "vacuum trace drifted by {drift:.3e} (guard {PROPAGATION_TRACE_GUARD:.0e}); \
             the integrator step is too coarse or the generator is inconsistent"
        )));
    }

    let traj_path = out.join(&cfg.output.trajectory);
    emit_trajectory(&traj, &traj_path)?;
    println!(
        "propagated {} samples over [{:.3}, {:.3}], trace drift {:.3e}; {}",
        traj.len(),
        t0,
        t1,
        drift,
        traj_path.display()
    );

    let mut manifest = manifest_skeleton("propagate", cfg);
    let mut snaps = cfg.snapshot_times()?;
    if !snaps.is_empty() {
        snaps.sort_by(f64::total_cmp);
        snaps.dedup();
        let states =
            propagate_reference(&a.liou, &a.rho0, &snaps, cfg.integrator.dt).map_err(classify)?;
        let hash = a.basis.content_hash();
        let dump: Vec<StateSnapshot> = snaps
            .iter()
            .zip(&states)
            .map(|(time, rho)| StateSnapshot {
                time: *time,
                basis_hash: hash.clone(),
                state: rho.iter().map(|z| [z.re, z.im]).collect(),
            })
            .collect();
        let snap_path = out.join(&cfg.output.snapshots);
        let json = serde_json::to_string(&dump)
            .map_err(|e| RunError::Io(format!("encoding snapshots: {e}")))?;
        write_atomic(&snap_path, json.as_bytes())?;
        manifest
            .artifacts
            .insert("snapshots".into(), snap_path.display().to_string());
    }

    manifest.basis = Some(basis_summary(&a, cfg));
    manifest.convention = Some(convention_summary()?);
    manifest.trace_drift = Some(drift);
    manifest.timings_ms = timings;
    manifest
        .artifacts
        .insert("trajectory".into(), traj_path.display().to_string());
    Ok(manifest)
}

fn run_train(
    cfg: &RunConfig,
    out: &Path,
    override_subdomain_failure: bool,
) -> Result<RunManifest, RunError> {
    let a = assemble(cfg)?;
    let schedule = cfg.training_schedule()?;
    let setup = TrainSetup {
        liou: &a.liou,
        basis: &a.basis,
        schedule: &schedule,
        rho0: &a.rho0,
        n_h: cfg.network.n_h,
        k: cfg.network.layers,
        seed: cfg.network.seed,
        opt: cfg.optimizer_options(),
        cusp_extras: cfg.schedule.cusp_extras,
        override_subdomain_failure,
        extrapolate_to: cfg.schedule.extrapolate_to,
        output_dt: cfg.output.sample_dt,
    };

    let t = Instant::now();
    let outcome = train_full_horizon(&setup).map_err(|e| match e {
        DqmeError::NonPhysical(m) => RunError::Optimization(format!("training aborted: {m}")),
        other => classify(other),
    })?;
    let mut timings = a.timings_ms.clone();
    timings.insert("training".into(), ms(t));

    // Artifacts are written even when a subdomain failed: a partial run is
    // exactly the case one wants to inspect.
    let traj_path = out.join(&cfg.output.trajectory);
    emit_trajectory(&outcome.trajectory, &traj_path)?;

    let mut log = String::from(
        "subdomain,stage,iteration,loss,l_r,l_i,l_tr,grad_norm,step\n",
    );
    for (p, report) in outcome.reports.iter().enumerate() {
        for st in &report.stages {
            for rec in &st.history {
                log.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    p,
                    st.stage,
                    rec.iteration,
                    sig17(rec.loss),
                    sig17(rec.aux[0]),
                    sig17(rec.aux[1]),
                    sig17(rec.aux[2]),
                    sig17(rec.grad_norm),
                    sig17(rec.step),
                ));
            }
        }
    }
    let log_path = out.join(&cfg.output.stage_log);
    write_atomic(&log_path, log.as_bytes())?;

    let hash = a.basis.content_hash();
    let mut checkpoint_paths = Vec::new();
    for (p, model) in outcome.models.iter().enumerate() {
        let cp = model.to_checkpoint(&hash);
        let json = serde_json::to_string(&cp)
            .map_err(|e| RunError::Io(format!("encoding checkpoint {p}: {e}")))?;
        let path = out.join(format!("{}_{p}.json", cfg.output.checkpoint_prefix));
        write_atomic(&path, json.as_bytes())?;
        checkpoint_paths.push(path);
    }

    for (p, report) in outcome.reports.iter().enumerate() {
        for st in &report.stages {
            println!(
                "subdomain {p} [{:.3}, {:.3}] stage {}: {} points, loss {:.3e} \
                 (L_R {:.3e}, L_I {:.3e}, L_tr {:.3e}), {} iterations, {:?}",
                report.t_start,
                report.t_end,
                st.stage,
                st.n_points,
                st.loss,
                st.l_r,
                st.l_i,
                st.l_tr,
                st.iterations,
                st.termination,
            );
        }
    }

    let mut manifest = manifest_skeleton("train", cfg);
    manifest.basis = Some(basis_summary(&a, cfg));
    manifest.convention = Some(convention_summary()?);
    manifest.subdomains = outcome
        .reports
        .iter()
        .map(|r| SubdomainSummary {
            t_start: r.t_start,
            t_end: r.t_end,
            failed: r.failed,
            stages: r
                .stages
                .iter()
                .map(|st| StageSummary {
                    stage: st.stage,
                    n_points: st.n_points,
                    loss: st.loss,
                    l_r: st.l_r,
                    l_i: st.l_i,
                    l_tr: st.l_tr,
                    grad_norm: st.grad_norm,
                    iterations: st.iterations,
                    reached_target: st.reached_target,
                    termination: format!("{:?}", st.termination),
                })
                .collect(),
        })
        .collect();
    manifest.trace_drift = Some(trace_drift(&outcome.trajectory));
    manifest.completed = outcome.completed;
    manifest.timings_ms = timings;
    manifest
        .artifacts
        .insert("trajectory".into(), traj_path.display().to_string());
    manifest
        .artifacts
        .insert("stage_log".into(), log_path.display().to_string());
    for (p, path) in checkpoint_paths.iter().enumerate() {
        manifest
            .artifacts
            .insert(format!("checkpoint_{p}"), path.display().to_string());
    }

    if !outcome.completed {
        let failed: Vec<usize> = outcome
            .reports
            .iter()
            .enumerate()
            .filter(|(_, r)| r.failed)
            .map(|(p, _)| p)
            .collect();
        // The manifest still records the partial run before the error exits.
        let manifest_path = out.join(&cfg.output.manifest);
        emit_manifest(&manifest, &manifest_path)?;
        return Err(RunError::Optimization(format!(
            "subdomain(s) {failed:?} missed their stage loss targets; \
             rerun with --override-subdomain-failure to train past them"
        )));
    }
    Ok(manifest)
}

/// Relative error with the all-zero escape: two channels that both vanish
/// identically on the window agree exactly, which the ratio metric cannot
/// express (0/0).
fn metric_or_zero(
    a: &Trajectory,
    b: &Trajectory,
    kind: ObservableKind,
    window: (f64, f64),
) -> Result<f64, RunError> {
    match relative_error_metric(a, b, kind, window) {
        Ok(e) => Ok(e),
        Err(DqmeError::NonPhysical(_)) => {
            let inside = |t: &[f64], x: &[f64]| {
                t.iter()
                    .zip(x)
                    .filter(|(t, _)| **t >= window.0 && **t <= window.1)
                    .all(|(_, x)| *x == 0.0)
            };
            if inside(&a.times, a.observable(kind)) && inside(&b.times, b.observable(kind)) {
                Ok(0.0)
            } else {
                Err(RunError::Physics(
                    "relative error undefined: observable norm vanishes on the window".into(),
                ))
            }
        }
        Err(e) => Err(classify(e)),
    }
}

fn run_compare(args: &CompareArgs) -> Result<(), RunError> {
    let a = read_trajectory(&args.a)?;
    let b = read_trajectory(&args.b)?;
    let window = args
        .window
        .as_ref()
        .map(|w| (w[0], w[1]))
        .unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    for (label, kind) in [
        ("n_up", ObservableKind::OccupationUp),
        ("I_L", ObservableKind::CurrentLeft),
        ("I_R", ObservableKind::CurrentRight),
    ] {
        let e = metric_or_zero(&a, &b, kind, window)?;
        println!("E({label}) = {e:.6e}");
    }
    Ok(())
}

fn run_gradcheck(args: &GradcheckArgs) -> Result<(), RunError> {
    if let Some(path) = &args.config {
        load_config(path)?;
        println!("config OK: {}", path.display());
    }
    if args.draws == 0 {
        return Err(RunError::Config(ConfigError::Invalid(
            "gradcheck needs at least one draw".into(),
        )));
    }
    let worst = closed_hierarchy_gradient_audit(args.draws).map_err(classify)?;
    println!(
        "gradient audit: worst relative deviation {worst:.3e} over {} draws (tolerance 1e-6)",
        args.draws
    );
    if worst <= 1e-6 {
        Ok(())
    } else {
        Err(RunError::Physics(format!(
            "analytic gradient disagrees with the finite difference: {worst:.3e} > 1e-6"
        )))
    }
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

fn with_manifest(
    args: &CommonArgs,
    run: impl FnOnce(&RunConfig, &Path) -> Result<RunManifest, RunError>,
) -> Result<(), RunError> {
    if args.threads > 1 {
        eprintln!(
            "note: --threads {} requested; running single-threaded for bitwise reproducibility",
            args.threads
        );
    }
    let cfg = load_config(&args.config)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let manifest = run(&cfg, &out)?;
    let manifest_path = out.join(&cfg.output.manifest);
    emit_manifest(&manifest, &manifest_path)?;
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), RunError> {
    match &cli.command {
        Command::Bath(args) => with_manifest(args, |cfg, out| run_bath(cfg, out)),
        Command::Basis(args) => with_manifest(args, |cfg, out| run_basis(cfg, out)),
        Command::Propagate(args) => with_manifest(args, |cfg, out| run_propagate(cfg, out)),
        Command::Train(args) => with_manifest(args, |cfg, out| {
            run_train(cfg, out, args.override_subdomain_failure)
        }),
        Command::Compare(args) => run_compare(args),
        Command::Gradcheck(args) => run_gradcheck(args),
    }
}

/// Entry point for the binary: parse, run, fold errors into exit codes.
pub fn cli_main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
