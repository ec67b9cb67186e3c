//! Time-domain decomposition and training orchestration.
//!
//! A single network cannot hold a long nonequilibrium transient to high
//! accuracy, so the horizon is cut into subdomains trained sequentially:
//! each subdomain minimizes its own residual + boundary-condition loss,
//! warm-started from the previous parameters, with the previous network's
//! boundary output acting as the initial condition.  Within a subdomain,
//! training proceeds in stages over progressively denser residual-point
//! sets, optionally concentrating extra points around the worst-residual
//! "cusp" found on a fine audit grid.
//!
//! The same module carries the observable extraction shared by the network
//! and the reference propagator, and the time-integrated relative error
//!   E_X = ∫|X − X^ref| dτ / ∫ ½(|X| + |X^ref|) dτ
//! used to grade trajectories against each other.

use crate::dqme::basis::{BasisState, RdtBasis};
use crate::dqme::liouvillian::Liouvillian;
use crate::dqme::observables::{occupation_expectation, vacuum_trace};
use crate::dqme::{DqmeError, SystemSpec};
use crate::optim::{bfgs_minimize, warm_start_transfer, OptimizerOptions, Termination};
use crate::pinn::{loss_and_grad, loss_eval, rdt_eval, FeatureMap, LossWeights, PinnModel};
use crate::reference::propagate_reference;
use num_complex::Complex64;
use serde::Serialize;
use std::cell::RefCell;

/// One training stage: the residual points it contributes and the loss the
/// optimizer must reach before the next stage takes over.
#[derive(Debug, Clone, Serialize)]
pub struct Stage {
    pub points: Vec<f64>,
    pub loss_target: f64,
}

impl Stage {
    /// Uniformly spaced residual points covering [t0, t1] with spacing as
    /// close to `spacing` as an integer subdivision allows; both endpoints
    /// land exactly.
    pub fn uniform(t0: f64, t1: f64, spacing: f64, loss_target: f64) -> Stage {
        let n = (((t1 - t0) / spacing).round() as usize).max(1);
        let h = (t1 - t0) / n as f64;
        let mut points: Vec<f64> = (0..n).map(|i| t0 + i as f64 * h).collect();
        points.push(t1);
        Stage {
            points,
            loss_target,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SubdomainPlan {
    pub t_start: f64,
    pub t_end: f64,
    pub features: FeatureMap,
    pub stages: Vec<Stage>,
}

/// The full decomposition: boundaries t₀ < t₁ < … with one plan per
/// subdomain and the loss weights shared by all of them.
#[derive(Debug, Clone, Serialize)]
pub struct TrainingSchedule {
    pub boundaries: Vec<f64>,
    pub subdomains: Vec<SubdomainPlan>,
    pub weights: LossWeights,
}

impl TrainingSchedule {
    pub fn validate(&self) -> Result<(), DqmeError> {
        if self.boundaries.len() < 2 {
            return Err(DqmeError::Grid("need at least one subdomain".into()));
        }
        if self.boundaries.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(DqmeError::Grid(
                "subdomain boundaries must increase strictly".into(),
            ));
        }
        if self.subdomains.len() + 1 != self.boundaries.len() {
            return Err(DqmeError::Grid(format!(
                "{} boundaries describe {} subdomains, got {} plans",
                self.boundaries.len(),
                self.boundaries.len() - 1,
                self.subdomains.len()
            )));
        }
        for (p, sub) in self.subdomains.iter().enumerate() {
            let (lo, hi) = (self.boundaries[p], self.boundaries[p + 1]);
            if sub.t_start != lo || sub.t_end != hi {
                return Err(DqmeError::Grid(format!(
                    "subdomain {p} interval [{}, {}] disagrees with boundaries",
                    sub.t_start, sub.t_end
                )));
            }
            if sub.stages.is_empty() {
                return Err(DqmeError::Grid(format!("subdomain {p} has no stages")));
            }
            let slack = 1e-12 * (1.0 + hi.abs());
            for st in &sub.stages {
                if st.points.is_empty() {
                    return Err(DqmeError::Grid(format!(
                        "subdomain {p} has a stage without residual points"
                    )));
                }
                if st.points.iter().any(|&t| t < lo - slack || t > hi + slack) {
                    return Err(DqmeError::Grid(format!(
                        "subdomain {p} has residual points outside [{lo}, {hi}]"
                    )));
                }
            }
            if sub.stages.windows(2).any(|w| !(w[1].loss_target < w[0].loss_target)) {
                return Err(DqmeError::Grid(format!(
                    "stage loss targets of subdomain {p} must decrease"
                )));
            }
        }
        Ok(())
    }
}

/// How the horizon is cut into subdomains.
#[derive(Debug, Clone)]
pub enum SubdomainLayout {
    Uniform { width: f64 },
    Explicit { boundaries: Vec<f64> },
}

/// Build a schedule skeleton: boundaries from the layout, and for every
/// subdomain the same feature map and stage recipe, where each recipe entry
/// (spacing, target) becomes a uniform point set over that subdomain.
pub fn plan_subdomains(
    t_start: f64,
    horizon: f64,
    layout: &SubdomainLayout,
    features: &FeatureMap,
    stage_recipe: &[(f64, f64)],
    weights: LossWeights,
) -> Result<TrainingSchedule, DqmeError> {
    if !(horizon > 0.0) {
        return Err(DqmeError::Grid(format!("horizon {horizon} must be positive")));
    }
    if stage_recipe.is_empty() || stage_recipe.iter().any(|&(s, _)| !(s > 0.0)) {
        return Err(DqmeError::Grid(
            "stage recipe needs at least one positive spacing".into(),
        ));
    }
    let boundaries = match layout {
        SubdomainLayout::Uniform { width } => {
            if !(*width > 0.0) {
                return Err(DqmeError::Grid(format!("width {width} must be positive")));
            }
            let n = ((horizon / width) - 1e-9).ceil().max(1.0) as usize;
            let mut b: Vec<f64> = (0..=n).map(|i| t_start + i as f64 * width).collect();
            // Land the final boundary exactly on the horizon when the width
            // divides it; otherwise the last subdomain overshoots slightly.
            if (b[n] - (t_start + horizon)).abs() < 1e-9 * (1.0 + horizon) {
                b[n] = t_start + horizon;
            }
            b
        }
        SubdomainLayout::Explicit { boundaries } => boundaries.clone(),
    };
    let subdomains = boundaries
        .windows(2)
        .map(|w| SubdomainPlan {
            t_start: w[0],
            t_end: w[1],
            features: features.clone(),
            stages: stage_recipe
                .iter()
                .map(|&(sp, target)| Stage::uniform(w[0], w[1], sp, target))
                .collect(),
        })
        .collect();
    let schedule = TrainingSchedule {
        boundaries,
        subdomains,
        weights,
    };
    schedule.validate()?;
    Ok(schedule)
}

/// Loss components (L_R, L_I, L_tr) threaded through the optimizer history.
pub type LossParts = [f64; 3];

#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub stage: usize,
    pub n_points: usize,
    pub loss: f64,
    pub l_r: f64,
    pub l_i: f64,
    pub l_tr: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub reached_target: bool,
    pub termination: Termination,
    pub history: Vec<crate::optim::IterationRecord<LossParts>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubdomainReport {
    pub t_start: f64,
    pub t_end: f64,
    pub stages: Vec<StageReport>,
    /// True when the final stage missed its loss target.
    pub failed: bool,
}

/// Merge two ascending point sets, dropping exact duplicates.
fn sorted_union(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = a.iter().chain(b).copied().collect();
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Train one subdomain through its stage list.
///
/// Residual-point sets accumulate: each stage unions its points into the
/// active set, so later stages always refine (never replace) earlier ones.
/// With `cusp_extras > 0`, every stage after the first also receives that
/// many extra points clustered around the worst pointwise residual of the
/// previous stage's model, located on an audit grid ten times denser than
/// the active set.
#[allow(clippy::too_many_arguments)]
pub fn staged_train_subdomain(
    mut model: PinnModel,
    liou: &Liouvillian,
    basis: &RdtBasis,
    stages: &[Stage],
    initial_target: &[Complex64],
    weights: &LossWeights,
    opt_base: &OptimizerOptions,
    cusp_extras: usize,
) -> Result<(PinnModel, SubdomainReport), DqmeError> {
    if stages.is_empty() {
        return Err(DqmeError::Grid("no stages to train".into()));
    }
    let (t0, t1) = (model.t_start, model.t_end);
    let mut active: Vec<f64> = Vec::new();
    let mut reports = Vec::with_capacity(stages.len());
    for (k, stage) in stages.iter().enumerate() {
        active = sorted_union(&active, &stage.points);
        if k > 0 && cusp_extras > 0 {
            let n_audit = 10 * active.len();
            let h = (t1 - t0) / n_audit as f64;
            let audit: Vec<f64> = (0..=n_audit).map(|i| t0 + i as f64 * h).collect();
            let rep = loss_eval(&model, liou, basis, &audit, initial_target, weights)?;
            let worst = rep
                .point_residuals
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| audit[i])
                .unwrap_or(t0);
            let extras: Vec<f64> = (0..cusp_extras)
                .map(|j| {
                    let offset = (j / 2 + 1) as f64 * h;
                    let side = if j % 2 == 0 { 1.0 } else { -1.0 };
                    (worst + side * offset).clamp(t0, t1)
                })
                .collect();
            active = sorted_union(&active, &extras);
        }

        let opts = OptimizerOptions {
            loss_target: Some(stage.loss_target),
            ..*opt_base
        };
        let cell = RefCell::new(model);
        let theta0 = cell.borrow().flatten_params();
        let result = bfgs_minimize(
            |theta| {
                let mut m = cell.borrow_mut();
                m.set_params(theta).ok()?;
                loss_eval(&m, liou, basis, &active, initial_target, weights)
                    .ok()
                    .map(|r| r.total)
            },
            |theta| {
                let mut m = cell.borrow_mut();
                m.set_params(theta).ok()?;
                loss_and_grad(&m, liou, basis, &active, initial_target, weights)
                    .ok()
                    .map(|(r, g)| (r.total, g, [r.l_r, r.l_i, r.l_tr]))
            },
            theta0,
            &opts,
        );
        model = cell.into_inner();
        if result.termination == Termination::EvaluationFailed {
            return Err(DqmeError::NonPhysical(format!(
                "loss not evaluable at the start of stage {k} on [{t0}, {t1}]"
            )));
        }
        model.set_params(&result.theta)?;
        let last = result.history.last().expect("history has the start point");
        reports.push(StageReport {
            stage: k,
            n_points: active.len(),
            loss: result.loss,
            l_r: last.aux[0],
            l_i: last.aux[1],
            l_tr: last.aux[2],
            grad_norm: result.grad_norm,
            iterations: result.history.len() - 1,
            reached_target: result.loss <= stage.loss_target,
            termination: result.termination,
            history: result.history,
        });
    }
    let failed = !reports.last().expect("at least one stage").reached_target;
    Ok((
        model,
        SubdomainReport {
            t_start: t0,
            t_end: t1,
            stages: reports,
            failed,
        },
    ))
}

/// Everything train_full_horizon needs beyond the schedule itself.
pub struct TrainSetup<'a> {
    pub liou: &'a Liouvillian,
    pub basis: &'a RdtBasis,
    pub schedule: &'a TrainingSchedule,
    /// Physical initial condition at the first boundary.
    pub rho0: &'a [Complex64],
    /// Hidden width and number of affine maps of every subdomain network.
    pub n_h: usize,
    pub k: usize,
    pub seed: u64,
    pub opt: OptimizerOptions,
    pub cusp_extras: usize,
    /// Keep going past a subdomain whose final stage missed its target.
    pub override_subdomain_failure: bool,
    /// Evaluate the last trained model beyond its right edge up to this
    /// time (the fixed-parameter extrapolation experiment).
    pub extrapolate_to: Option<f64>,
    /// Output sample spacing of the stitched trajectory.
    pub output_dt: f64,
}

pub struct TrainOutcome {
    pub models: Vec<PinnModel>,
    pub reports: Vec<SubdomainReport>,
    pub trajectory: Trajectory,
    /// False when training stopped early at a failed subdomain; the
    /// trajectory then covers only the trained prefix.
    pub completed: bool,
}

/// Seeded network whose output-layer bias is shifted so the vacuum trace
/// starts near 1; a fresh random network would otherwise sit below the
/// trace division guard.
pub fn fresh_model(
    basis: &RdtBasis,
    n_h: usize,
    k: usize,
    features: FeatureMap,
    t_start: f64,
    t_end: f64,
    seed: u64,
) -> Result<PinnModel, DqmeError> {
    let mut m = PinnModel::init(basis.layout.width(), n_h, k, features, t_start, t_end, seed)?;
    let n_vd = basis
        .states
        .iter()
        .filter(|s| s.is_vacuum_diagonal(&basis.layout))
        .count();
    if n_vd == 0 {
        return Err(DqmeError::EmptySeeds);
    }
    let out = m.layers.last_mut().expect("at least one layer");
    out.bre[0] += 0.5 / n_vd as f64;
    Ok(m)
}

/// Train every subdomain in sequence, feed boundary outputs forward, and
/// sample the stitched observable trajectory on a uniform grid.
pub fn train_full_horizon(setup: &TrainSetup) -> Result<TrainOutcome, DqmeError> {
    let schedule = setup.schedule;
    schedule.validate()?;
    if !(setup.output_dt > 0.0) {
        return Err(DqmeError::Grid(format!(
            "output spacing {} must be positive",
            setup.output_dt
        )));
    }
    let mut models: Vec<PinnModel> = Vec::new();
    let mut reports: Vec<SubdomainReport> = Vec::new();
    let mut target = setup.rho0.to_vec();
    let mut completed = true;
    for (p, plan) in schedule.subdomains.iter().enumerate() {
        let model0 = if let Some(prev) = models.last() {
            warm_start_transfer(
                prev,
                plan.t_start,
                plan.t_end,
                plan.features.clone(),
                setup.seed.wrapping_add(p as u64),
            )?
        } else {
            fresh_model(
                setup.basis,
                setup.n_h,
                setup.k,
                plan.features.clone(),
                plan.t_start,
                plan.t_end,
                setup.seed,
            )?
        };
        let (model, report) = staged_train_subdomain(
            model0,
            setup.liou,
            setup.basis,
            &plan.stages,
            &target,
            &schedule.weights,
            &setup.opt,
            setup.cusp_extras,
        )?;
        let failed = report.failed;
        target = rdt_eval(&model, setup.basis, plan.t_end)?;
        models.push(model);
        reports.push(report);
        if failed && !setup.override_subdomain_failure {
            completed = false;
            break;
        }
    }
    let trained_end = models.last().expect("at least one subdomain").t_end;
    let t_last = if completed {
        setup.extrapolate_to.unwrap_or(trained_end).max(trained_end)
    } else {
        trained_end
    };
    let t_first = schedule.boundaries[0];
    let n = (((t_last - t_first) / setup.output_dt).round() as usize).max(1);
    let h = (t_last - t_first) / n as f64;
    let mut times: Vec<f64> = (0..n).map(|i| t_first + i as f64 * h).collect();
    times.push(t_last);
    let trajectory = stitched_trajectory(&models, setup.liou, setup.basis, &times)?;
    Ok(TrainOutcome {
        models,
        reports,
        trajectory,
        completed,
    })
}

/// Observable time series shared by the reference propagator and the
/// network: vacuum trace, spin-up impurity occupation, and the currents
/// from the first two reservoirs (zero where a reservoir does not exist).
#[derive(Debug, Clone, Default, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub trace_re: Vec<f64>,
    pub trace_im: Vec<f64>,
    pub n_up: Vec<f64>,
    pub current_left: Vec<f64>,
    pub current_right: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservableKind {
    OccupationUp,
    CurrentLeft,
    CurrentRight,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn observable(&self, kind: ObservableKind) -> &[f64] {
        match kind {
            ObservableKind::OccupationUp => &self.n_up,
            ObservableKind::CurrentLeft => &self.current_left,
            ObservableKind::CurrentRight => &self.current_right,
        }
    }

    fn push_state(
        &mut self,
        t: f64,
        rho: &[Complex64],
        liou: &Liouvillian,
        basis: &RdtBasis,
    ) -> Result<(), DqmeError> {
        let tr = vacuum_trace(rho, basis);
        let mut current = [0.0; 2];
        for (alpha, slot) in current.iter_mut().enumerate() {
            if alpha < liou.n_reservoirs {
                *slot = crate::dqme::observables::reservoir_current(liou, rho, alpha)?;
            }
        }
        self.times.push(t);
        self.trace_re.push(tr.re);
        self.trace_im.push(tr.im);
        self.n_up.push(occupation_expectation(rho, basis, 0)?);
        self.current_left.push(current[0]);
        self.current_right.push(current[1]);
        Ok(())
    }
}

/// Reference trajectory: integrate ρ̇ = Lρ and extract observables at the
/// sample times.
pub fn reference_trajectory(
    liou: &Liouvillian,
    basis: &RdtBasis,
    rho0: &[Complex64],
    times: &[f64],
    max_dt: f64,
) -> Result<Trajectory, DqmeError> {
    let states = propagate_reference(liou, rho0, times, max_dt)?;
    let mut traj = Trajectory::default();
    for (t, rho) in times.iter().zip(&states) {
        traj.push_state(*t, rho, liou, basis)?;
    }
    Ok(traj)
}

/// Evaluate a chain of per-subdomain models on a shared grid.  Every time
/// belongs to the latest subdomain whose start it has reached; times beyond
/// the last interval extrapolate the last model with fixed parameters.
pub fn stitched_trajectory(
    models: &[PinnModel],
    liou: &Liouvillian,
    basis: &RdtBasis,
    times: &[f64],
) -> Result<Trajectory, DqmeError> {
    if models.is_empty() {
        return Err(DqmeError::Grid("no trained subdomain models".into()));
    }
    let mut traj = Trajectory::default();
    for &t in times {
        let slack = 1e-12 * (1.0 + t.abs());
        let owner = models
            .iter()
            .rposition(|m| m.t_start <= t + slack)
            .unwrap_or(0);
        let rho = rdt_eval(&models[owner], basis, t)?;
        traj.push_state(t, &rho, liou, basis)?;
    }
    Ok(traj)
}

/// Grand-canonical equilibrium of the pre-quench impurity tensored with the
/// dissipaton vacuum: weights ∝ e^{−β(E(n⃗) − μ N(n⃗))} on the
/// vacuum-diagonal states.
pub fn equilibrium_initial_tensor(
    sys: &SystemSpec,
    basis: &RdtBasis,
    beta: f64,
    mu_eq: f64,
) -> Result<Vec<Complex64>, DqmeError> {
    sys.validate()?;
    if basis.layout.n_s != sys.n_s {
        return Err(DqmeError::Dimension {
            got: basis.layout.n_s,
            want: sys.n_s,
        });
    }
    if !(beta > 0.0) {
        return Err(DqmeError::InvalidSystem(format!(
            "inverse temperature {beta} must be positive"
        )));
    }
    let params = sys.params_at(sys.t0 - 1.0);
    let mut rho = vec![Complex64::new(0.0, 0.0); basis.len()];
    let mut z = 0.0;
    let mut entries = Vec::new();
    for st in 0u64..(1 << sys.n_s) {
        let mut energy = 0.0;
        let mut number = 0.0;
        for u in 0..sys.n_s {
            if st >> u & 1 == 1 {
                energy += params.epsilon[u];
                number += 1.0;
            }
        }
        if sys.n_s == 2 && st == 0b11 {
            energy += params.u;
        }
        let w = (-beta * (energy - mu_eq * number)).exp();
        let word = st | st << sys.n_s;
        let ord = basis.ordinal(BasisState(word)).ok_or_else(|| {
            DqmeError::InvalidSystem(format!(
                "vacuum-diagonal state {word:#x} missing from the basis"
            ))
        })?;
        entries.push((ord as usize, w));
        z += w;
    }
    for (ord, w) in entries {
        rho[ord] = Complex64::new(w / z, 0.0);
    }
    Ok(rho)
}

/// E_X between two sampled series over a window: both are linearly
/// interpolated onto the union of their grids restricted to the overlap,
/// then trapezoid-integrated.  Symmetric in its arguments and invariant
/// under a common positive rescaling.
pub fn relative_error_series(
    ta: &[f64],
    xa: &[f64],
    tb: &[f64],
    xb: &[f64],
    window: (f64, f64),
) -> Result<f64, DqmeError> {
    for (t, x) in [(ta, xa), (tb, xb)] {
        if t.len() != x.len() || t.len() < 2 {
            return Err(DqmeError::Grid(
                "series need at least two aligned samples".into(),
            ));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(DqmeError::Grid("sample times must increase strictly".into()));
        }
    }
    let lo = window.0.max(ta[0]).max(tb[0]);
    let hi = window.1.min(*ta.last().unwrap()).min(*tb.last().unwrap());
    if !(hi > lo) {
        return Err(DqmeError::Grid(format!(
            "window [{}, {}] does not overlap both series",
            window.0, window.1
        )));
    }
    let mut grid: Vec<f64> = ta
        .iter()
        .chain(tb.iter())
        .copied()
        .filter(|&t| t >= lo && t <= hi)
        .chain([lo, hi])
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let interp = |t: &[f64], x: &[f64], q: f64| -> f64 {
        let j = t.partition_point(|&v| v < q).clamp(1, t.len() - 1);
        let (t0, t1) = (t[j - 1], t[j]);
        let w = (q - t0) / (t1 - t0);
        x[j - 1] * (1.0 - w) + x[j] * w
    };
    let (mut num, mut den) = (0.0, 0.0);
    for w in grid.windows(2) {
        let h = w[1] - w[0];
        let (a0, a1) = (interp(ta, xa, w[0]), interp(ta, xa, w[1]));
        let (b0, b1) = (interp(tb, xb, w[0]), interp(tb, xb, w[1]));
        num += 0.5 * h * ((a0 - b0).abs() + (a1 - b1).abs());
        den += 0.25 * h * (a0.abs() + b0.abs() + a1.abs() + b1.abs());
    }
    if den <= f64::MIN_POSITIVE {
        return Err(DqmeError::NonPhysical(
            "relative error undefined: both series vanish on the window".into(),
        ));
    }
    Ok(num / den)
}

/// E_X for a named observable of two trajectories.
pub fn relative_error_metric(
    a: &Trajectory,
    b: &Trajectory,
    kind: ObservableKind,
    window: (f64, f64),
) -> Result<f64, DqmeError> {
    relative_error_series(
        &a.times,
        a.observable(kind),
        &b.times,
        b.observable(kind),
        window,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dqme::basis::enumerate_basis;
    use crate::dqme::liouvillian::tests::EXPECTED;
    use crate::dqme::liouvillian::{build_liouvillian, ImpurityParams};
    use crate::pinn::Feature;
    use crate::reference::DiscreteBathInstance;

    fn feat_t2() -> FeatureMap {
        FeatureMap::new(vec![Feature::Time, Feature::TimeSquared]).unwrap()
    }

    #[test]
    fn uniform_layout_counts_subdomains() {
        let s = plan_subdomains(
            0.0,
            2.3,
            &SubdomainLayout::Uniform { width: 0.23 },
            &feat_t2(),
            &[(0.015, 1e-4)],
            LossWeights::default(),
        )
        .unwrap();
        assert_eq!(s.subdomains.len(), 10);
        assert!((s.boundaries[10] - 2.3).abs() < 1e-12);
        // Every stage grid starts exactly on its left boundary.
        for sub in &s.subdomains {
            assert_eq!(sub.stages[0].points[0], sub.t_start);
        }
    }

    #[test]
    fn explicit_boundaries_are_honored_verbatim() {
        let b = vec![0.0, 0.228, 0.3, 0.4, 1.44, 1.67];
        let s = plan_subdomains(
            0.0,
            1.67,
            &SubdomainLayout::Explicit {
                boundaries: b.clone(),
            },
            &feat_t2(),
            &[(0.03, 1e-3), (0.023, 1e-4)],
            LossWeights::default(),
        )
        .unwrap();
        assert_eq!(s.boundaries, b);
        assert_eq!(s.subdomains[0].stages.len(), 2);
    }

    #[test]
    fn bad_layouts_are_rejected() {
        let res = plan_subdomains(
            0.0,
            1.0,
            &SubdomainLayout::Explicit {
                boundaries: vec![0.0, 0.5, 0.4],
            },
            &feat_t2(),
            &[(0.05, 1e-3)],
            LossWeights::default(),
        );
        assert!(matches!(res, Err(DqmeError::Grid(_))));
        let res = plan_subdomains(
            0.0,
            1.0,
            &SubdomainLayout::Uniform { width: 0.3 },
            &feat_t2(),
            &[(0.05, 1e-2), (0.03, 1e-2)],
            LossWeights::default(),
        );
        assert!(matches!(res, Err(DqmeError::Grid(_))), "targets must decrease");
    }

    #[test]
    fn relative_error_closed_forms() {
        let t: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        let a: Vec<f64> = t.iter().map(|_| 1.1).collect();
        let b: Vec<f64> = t.iter().map(|_| 0.9).collect();
        let e = relative_error_series(&t, &a, &t, &b, (0.0, 1.0)).unwrap();
        assert!((e - 0.2).abs() < 1e-12);
        let zero = relative_error_series(&t, &a, &t, &a, (0.0, 1.0)).unwrap();
        assert_eq!(zero, 0.0);
        // Symmetry and common-rescale invariance.
        let c: Vec<f64> = t.iter().map(|x| 0.4 + x * x).collect();
        let d: Vec<f64> = t.iter().map(|x| 0.5 + x).collect();
        let e1 = relative_error_series(&t, &c, &t, &d, (0.0, 1.0)).unwrap();
        let e2 = relative_error_series(&t, &d, &t, &c, (0.0, 1.0)).unwrap();
        assert_eq!(e1, e2);
        let c3: Vec<f64> = c.iter().map(|x| 3.0 * x).collect();
        let d3: Vec<f64> = d.iter().map(|x| 3.0 * x).collect();
        let e3 = relative_error_series(&t, &c3, &t, &d3, (0.0, 1.0)).unwrap();
        assert!((e1 - e3).abs() < 1e-14);
        // Mismatched grids interpolate onto the union.
        let t2: Vec<f64> = (0..=7).map(|i| i as f64 / 7.0).collect();
        let d2: Vec<f64> = t2.iter().map(|x| 0.5 + x).collect();
        let e4 = relative_error_series(&t, &c, &t2, &d2, (0.0, 1.0)).unwrap();
        assert!((e4 - e1).abs() < 1e-3);
    }

    #[test]
    fn trivial_generator_reaches_stage_target_immediately() {
        // Zero generator and a constant target: the constant network is an
        // exact solution, so stage 1 terminates on its target at once.
        let basis = enumerate_basis(1, 0, 0, 1 << 8).unwrap();
        let liou = build_liouvillian(
            &ImpurityParams {
                epsilon: vec![0.0],
                u: 0.0,
            },
            &[],
            &basis,
            &EXPECTED,
        )
        .unwrap();
        let mut m = PinnModel::zeroed(basis.layout.width(), 3, 2, feat_t2(), 0.0, 0.5).unwrap();
        m.layers.last_mut().unwrap().bre[0] = 0.25;
        let target = rdt_eval(&m, &basis, 0.0).unwrap();
        let stages = vec![Stage::uniform(0.0, 0.5, 0.1, 1e-10)];
        let w = LossWeights {
            delta_t: 1e-3,
            ..LossWeights::default()
        };
        let (_, report) = staged_train_subdomain(
            m,
            &liou,
            &basis,
            &stages,
            &target,
            &w,
            &OptimizerOptions::default(),
            0,
        )
        .unwrap();
        assert!(!report.failed);
        assert_eq!(report.stages[0].iterations, 0);
        assert!(report.stages[0].loss <= 1e-10);
    }

    /// Discrete-bath spinless probe: 1 impurity level, 1 bath level, exact
    /// hierarchy closure at M_max = 2.
    fn probe() -> (RdtBasis, Liouvillian, DiscreteBathInstance) {
        let inst = DiscreteBathInstance {
            eps_sys: vec![0.15],
            u: 0.0,
            bath: vec![(0, 0.8, 0.4)],
            beta: 2.0,
            mu: 0.3,
            rho_s_diag: vec![0.25, 0.75],
        };
        let basis = enumerate_basis(1, 1, 2, 1 << 10).unwrap();
        let liou = build_liouvillian(&inst.impurity(), &inst.dissipaton_levels(), &basis, &EXPECTED)
            .unwrap();
        (basis, liou, inst)
    }

    fn probe_weights() -> LossWeights {
        LossWeights {
            delta_t: 1e-4,
            ..LossWeights::default()
        }
    }

    #[test]
    fn stage_point_sets_are_supersets() {
        let (basis, liou, inst) = probe();
        let rho0 = inst.initial_tensor(&basis);
        let model = fresh_model(&basis, 6, 3, feat_t2(), 0.0, 0.3, 5).unwrap();
        let stages = vec![
            Stage::uniform(0.0, 0.3, 0.1, 1e-1),
            Stage::uniform(0.0, 0.3, 0.06, 1e-2),
        ];
        let opt = OptimizerOptions {
            max_iters: 40,
            ..OptimizerOptions::default()
        };
        let (_, report) = staged_train_subdomain(
            model,
            &liou,
            &basis,
            &stages,
            &rho0,
            &probe_weights(),
            &opt,
            4,
        )
        .unwrap();
        assert!(report.stages[1].n_points > report.stages[0].n_points);
        // Stage 2 must contain every stage-1 point (supersets by
        // construction) plus the cusp extras.
        assert!(report.stages[1].n_points >= report.stages[0].n_points + 4);
    }

    #[test]
    fn warm_start_beats_a_fresh_network() {
        let (basis, liou, inst) = probe();
        let rho0 = inst.initial_tensor(&basis);
        let w = probe_weights();
        let opt = OptimizerOptions {
            max_iters: 200,
            ..OptimizerOptions::default()
        };
        let stages = vec![Stage::uniform(0.0, 0.3, 0.05, 2e-4)];
        let model0 = fresh_model(&basis, 6, 3, feat_t2(), 0.0, 0.3, 11).unwrap();
        let (trained, report) =
            staged_train_subdomain(model0, &liou, &basis, &stages, &rho0, &w, &opt, 0).unwrap();
        assert!(!report.failed, "first subdomain must train: {report:?}");
        let boundary = rdt_eval(&trained, &basis, 0.3).unwrap();

        let warm = warm_start_transfer(&trained, 0.3, 0.6, feat_t2(), 1).unwrap();
        let fresh = fresh_model(&basis, 6, 3, feat_t2(), 0.3, 0.6, 11).unwrap();
        let pts = Stage::uniform(0.3, 0.6, 0.05, 0.0).points;
        let warm_loss = loss_eval(&warm, &liou, &basis, &pts, &boundary, &w)
            .unwrap()
            .total;
        let fresh_loss = loss_eval(&fresh, &liou, &basis, &pts, &boundary, &w)
            .unwrap()
            .total;
        assert!(
            warm_loss < fresh_loss,
            "warm {warm_loss:.3e} vs fresh {fresh_loss:.3e}"
        );
    }

    #[test]
    fn full_horizon_matches_the_reference_propagator() {
        let (basis, liou, inst) = probe();
        let rho0 = inst.initial_tensor(&basis);
        let schedule = plan_subdomains(
            0.0,
            0.7,
            &SubdomainLayout::Uniform { width: 0.35 },
            &feat_t2(),
            &[(0.05, 2e-4)],
            probe_weights(),
        )
        .unwrap();
        let setup = TrainSetup {
            liou: &liou,
            basis: &basis,
            schedule: &schedule,
            rho0: &rho0,
            n_h: 6,
            k: 3,
            seed: 11,
            opt: OptimizerOptions {
                max_iters: 250,
                ..OptimizerOptions::default()
            },
            cusp_extras: 0,
            override_subdomain_failure: false,
            extrapolate_to: None,
            output_dt: 0.02,
        };
        let out = train_full_horizon(&setup).unwrap();
        assert!(out.completed, "{:?}", out.reports);
        assert_eq!(out.models.len(), 2);

        let reference =
            reference_trajectory(&liou, &basis, &rho0, &out.trajectory.times, 1e-3).unwrap();
        let e = relative_error_metric(
            &out.trajectory,
            &reference,
            ObservableKind::OccupationUp,
            (0.0, 0.7),
        )
        .unwrap();
        assert!(e < 2e-2, "occupation error {e:.3e}");
        // Continuity at the interior boundary: the two models agree there.
        let left = rdt_eval(&out.models[0], &basis, 0.35).unwrap();
        let right = rdt_eval(&out.models[1], &basis, 0.35).unwrap();
        let jump: f64 = left
            .iter()
            .zip(&right)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(jump < 5e-2, "boundary jump {jump:.3e}");
        // Trace stays near 1 along the stitched trajectory.
        for (t, tr) in out.trajectory.times.iter().zip(&out.trajectory.trace_re) {
            assert!((tr - 1.0).abs() < 5e-2, "trace {tr} at t={t}");
        }
    }

    #[test]
    fn equilibrium_weights_are_gibbs() {
        let sys = SystemSpec {
            n_s: 2,
            epsilon0: 2.0,
            u0: 4.0,
            delta_epsilon: -7.0,
            delta_u: 6.0,
            t0: 0.0,
            mu_before: vec![0.0, 0.0],
            mu_after: vec![1.0, -1.0],
        };
        let basis = enumerate_basis(2, 1, 1, 1 << 10).unwrap();
        let beta = 1.0 / 3.0;
        let rho = equilibrium_initial_tensor(&sys, &basis, beta, 0.0).unwrap();
        let tr = vacuum_trace(&rho, &basis);
        assert!((tr.re - 1.0).abs() < 1e-14 && tr.im == 0.0);
        // Pre-quench energies: 0, ε₀, ε₀, 2ε₀+U₀ with ε₀ = 2, U₀ = 4.
        let z = 1.0 + 2.0 * (-beta * 2.0_f64).exp() + (-beta * 8.0_f64).exp();
        let ord = |word: u64| basis.ordinal(BasisState(word)).unwrap() as usize;
        assert!((rho[ord(0b0000)].re - 1.0 / z).abs() < 1e-14);
        assert!((rho[ord(0b0101)].re - (-beta * 2.0_f64).exp() / z).abs() < 1e-14);
        assert!((rho[ord(0b1111)].re - (-beta * 8.0_f64).exp() / z).abs() < 1e-14);
        let n0 = occupation_expectation(&rho, &basis, 0).unwrap();
        let want = ((-beta * 2.0_f64).exp() + (-beta * 8.0_f64).exp()) / z;
        assert!((n0 - want).abs() < 1e-14);
    }
}
