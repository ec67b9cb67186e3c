//! Run-file schema: one TOML document drives every subcommand.
//!
//! The file is split into blocks mirroring the pipeline — `[system]` and
//! `[bath]` fix the physics, `[basis]` the truncation, `[network]` and
//! `[schedule]` the ansatz and its training plan, `[integrator]` the
//! reference solver, `[output]` the artifact names.  Every block rejects
//! unknown keys, and every default is baked into the re-serialized config
//! echoed into the run manifest, so a manifest alone reproduces the run.

use crate::bath::{BathSpec, PsdScheme, ReservoirSpec, SpectralConvention};
use crate::driver::{plan_subdomains, SubdomainLayout, TrainingSchedule};
use crate::dqme::SystemSpec;
use crate::optim::OptimizerOptions;
use crate::pinn::{Feature, FeatureMap, LossWeights};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Impurity and quench parameters.  Energies are in units of Γ, times in
/// units of 1/Γ (ħ = 1 throughout).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    /// Spin-orbitals on the impurity: 1 (spinless level) or 2 (Anderson).
    #[serde(default = "two")]
    pub n_s: usize,
    /// Level energy ε₀ before the quench.
    pub epsilon0: f64,
    /// On-site repulsion U₀ before the quench.
    #[serde(default)]
    pub u0: f64,
    /// Sudden level shift Δε applied at t₀.
    #[serde(default)]
    pub delta_epsilon: f64,
    /// Sudden repulsion shift ΔU applied at t₀.
    #[serde(default)]
    pub delta_u: f64,
    /// Quench instant; the horizon starts here.
    #[serde(default)]
    pub t0: f64,
    /// Common chemical potential of the pre-quench equilibrium state.
    #[serde(default)]
    pub mu_equilibrium: f64,
}

fn two() -> usize {
    2
}

/// One reservoir of the post-quench (biased) bath.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirBlock {
    pub name: String,
    /// Inverse temperature β.
    pub beta: f64,
    /// Post-quench chemical potential μ.
    pub mu: f64,
    /// Band center Ω of the Lorentzian window; defaults to μ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    /// Half width W of the Lorentzian window.
    pub width: f64,
    /// Coupling strength Γ per impurity spin-orbital.
    pub coupling: Vec<f64>,
}

impl ReservoirBlock {
    fn to_spec(&self) -> ReservoirSpec {
        ReservoirSpec {
            name: self.name.clone(),
            beta: self.beta,
            mu: self.mu,
            center: self.center,
            width: self.width,
            coupling: self.coupling.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathBlock {
    /// Poles retained per Fermi-function decomposition.
    #[serde(default = "two")]
    pub n_pade: usize,
    #[serde(default = "default_scheme")]
    pub scheme: PsdScheme,
    /// Prefactor convention of C^σ(t) (see the bath module).
    #[serde(default = "default_spectral_convention")]
    pub convention: SpectralConvention,
    #[serde(rename = "reservoir")]
    pub reservoirs: Vec<ReservoirBlock>,
}

fn default_scheme() -> PsdScheme {
    PsdScheme::Pade
}

fn default_spectral_convention() -> SpectralConvention {
    SpectralConvention::PaperLiteral
}

/// Which states seed the reachability filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedPolicy {
    /// m⃗ = 0, n⃗ = n⃗′ — the support of every number-diagonal preparation.
    VacuumDiagonal,
    /// The whole m⃗ = 0 block, dyads included.
    VacuumBlock,
    /// No filtering; keep every enumerated state.
    Unfiltered,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisBlock {
    /// Maximal total dissipaton occupation Σ(m⁻ + m⁺).
    pub m_max: u32,
    /// Hard cap on the enumerated state count.
    pub cap: usize,
    pub seeds: SeedPolicy,
}

impl Default for BasisBlock {
    fn default() -> Self {
        BasisBlock {
            m_max: 2,
            cap: 1 << 22,
            seeds: SeedPolicy::VacuumDiagonal,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkBlock {
    /// Hidden width N_h.
    pub n_h: usize,
    /// Affine layer count K (K − 1 hidden activations).
    pub layers: usize,
    /// Time features fed alongside the state bits; see [`parse_feature`].
    pub features: Vec<String>,
    pub seed: u64,
}

impl Default for NetworkBlock {
    fn default() -> Self {
        NetworkBlock {
            n_h: 35,
            layers: 4,
            features: vec!["t".into(), "t^2".into(), "t^3".into()],
            seed: 2_718_281_828,
        }
    }
}

/// Replace the feature map of one subdomain (0-based index into the
/// partition) while keeping the shared recipe everywhere else.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureOverride {
    pub subdomain: usize,
    pub features: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleBlock {
    /// Uniform subdomain width; mutually exclusive with `boundaries`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    /// Explicit partition of the horizon; mutually exclusive with `width`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundaries: Option<Vec<f64>>,
    /// Stage recipe: [collocation spacing, loss target] pairs, coarse to
    /// fine, applied identically in every subdomain.
    pub stages: Vec<[f64; 2]>,
    pub omega_r: f64,
    pub omega_i: f64,
    pub omega_tr: f64,
    /// Tier-weight exponent λ in the initial-condition norm.
    pub lambda: f64,
    /// Time-difference step δt for ρ̇ inside the residual.
    pub delta_t: f64,
    /// Extra collocation points packed around the worst pointwise residual
    /// after each stage (0 disables the audit).
    pub cusp_extras: usize,
    /// Evaluate the final model past its trained interval up to this time.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extrapolate_to: Option<f64>,
    /// Optimizer budget per stage.
    pub max_iters: usize,
    pub grad_tol: f64,
    #[serde(rename = "override")]
    pub overrides: Vec<FeatureOverride>,
}

impl Default for ScheduleBlock {
    fn default() -> Self {
        let w = LossWeights::default();
        let opt = OptimizerOptions::default();
        ScheduleBlock {
            width: None,
            boundaries: None,
            stages: vec![[0.1, 1e-3]],
            omega_r: w.omega_r,
            omega_i: w.omega_i,
            omega_tr: w.omega_tr,
            lambda: w.lambda,
            delta_t: w.delta_t,
            cusp_extras: 0,
            extrapolate_to: None,
            max_iters: opt.max_iters,
            grad_tol: opt.grad_tol,
            overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorBlock {
    /// Fixed step of the reference integrator.
    pub dt: f64,
    /// Length of the simulated window, starting at the quench.
    pub horizon: f64,
}

impl Default for IntegratorBlock {
    fn default() -> Self {
        IntegratorBlock {
            dt: 1e-3,
            horizon: 2.3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    /// Artifact directory; `--out` overrides it.
    pub dir: String,
    pub trajectory: String,
    pub manifest: String,
    /// Per-iteration optimizer log (CSV).
    pub stage_log: String,
    /// Per-subdomain model files are named `<checkpoint_prefix>_<p>.json`.
    pub checkpoint_prefix: String,
    /// Observable sampling step of emitted trajectories.
    pub sample_dt: f64,
    /// Times at which `propagate` dumps the full tensor.
    pub snapshot_times: Vec<f64>,
    pub snapshots: String,
    /// Correlation-function table and mode list written by `bath`.
    pub bath_table: String,
    pub bath_csv: String,
    pub bath_samples: usize,
    pub bath_t_max: f64,
    /// Sparse generator dump written by `basis`.
    pub triplets: String,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            dir: "out".into(),
            trajectory: "trajectory.csv".into(),
            manifest: "manifest.json".into(),
            stage_log: "stages.csv".into(),
            checkpoint_prefix: "model".into(),
            sample_dt: 0.02,
            snapshot_times: Vec::new(),
            snapshots: "snapshots.json".into(),
            bath_table: "bath_modes.json".into(),
            bath_csv: "bath_correlation.csv".into(),
            bath_samples: 20,
            bath_t_max: 2.0,
            triplets: "liouvillian.csv".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemBlock,
    pub bath: BathBlock,
    #[serde(default)]
    pub basis: BasisBlock,
    #[serde(default)]
    pub network: NetworkBlock,
    #[serde(default)]
    pub schedule: ScheduleBlock,
    #[serde(default)]
    pub integrator: IntegratorBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

/// Parse one feature atom:
/// `"t"`, `"t^2"`, `"t^3"`, `"t^1.5"` (alias `"t^3/2"`), `"zero"` (alias
/// `"0"`), and the cusp feature `"sqrt(t)/(t+c)"` with a literal shift,
/// e.g. `"sqrt(t)/(t+0.015)"`.  Times are subdomain-local.
pub fn parse_feature(s: &str) -> Result<Feature, ConfigError> {
    let t = s.trim();
    match t {
        "t" | "time" => return Ok(Feature::Time),
        "t^2" => return Ok(Feature::TimeSquared),
        "t^3" => return Ok(Feature::TimeCubed),
        "t^1.5" | "t^3/2" => return Ok(Feature::TimeSesqui),
        "0" | "zero" => return Ok(Feature::Zero),
        _ => {}
    }
    if let Some(rest) = t.strip_prefix("sqrt(t)/(t+") {
        if let Some(num) = rest.strip_suffix(')') {
            let c: f64 = num
                .trim()
                .parse()
                .map_err(|_| invalid(format!("bad shift in feature '{t}'")))?;
            return Ok(Feature::SqrtShifted { c });
        }
    }
    Err(invalid(format!(
        "unknown feature '{t}' (expected t, t^2, t^3, t^1.5, zero, or sqrt(t)/(t+c))"
    )))
}

pub fn parse_feature_map(strings: &[String]) -> Result<FeatureMap, ConfigError> {
    let feats = strings
        .iter()
        .map(|s| parse_feature(s))
        .collect::<Result<Vec<_>, _>>()?;
    FeatureMap::new(feats).map_err(|e| invalid(e.to_string()))
}

impl RunConfig {
    /// Parse a TOML run file.
    pub fn from_toml(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let spec = self.system_spec();
        spec.validate().map_err(|e| invalid(e.to_string()))?;
        self.bath_spec()
            .validate(self.system.n_s)
            .map_err(|e| invalid(e.to_string()))?;
        if self.bath.reservoirs.is_empty() {
            return Err(invalid("at least one reservoir is required"));
        }
        let beta0 = self.bath.reservoirs[0].beta;
        if self.bath.reservoirs.iter().any(|r| r.beta != beta0) {
            return Err(invalid(
                "reservoir temperatures must agree: the initial state is a \
                 single-temperature equilibrium",
            ));
        }
        if !(self.integrator.dt > 0.0) || !(self.integrator.horizon > 0.0) {
            return Err(invalid("integrator dt and horizon must be positive"));
        }
        if !(self.output.sample_dt > 0.0) {
            return Err(invalid("output sample_dt must be positive"));
        }
        if self.output.bath_samples < 2 || !(self.output.bath_t_max > 0.0) {
            return Err(invalid("bath table needs >= 2 samples over a positive window"));
        }
        if self.network.n_h == 0 || self.network.layers < 2 {
            return Err(invalid("network needs n_h >= 1 and at least two layers"));
        }
        parse_feature_map(&self.network.features)?;
        for ov in &self.schedule.overrides {
            parse_feature_map(&ov.features)?;
        }
        if self.schedule.width.is_some() && self.schedule.boundaries.is_some() {
            return Err(invalid(
                "schedule.width and schedule.boundaries are mutually exclusive",
            ));
        }
        // Shape problems inside stages/boundaries surface through the
        // schedule planner so the checks live in one place.
        self.training_schedule().map(|_| ())
    }

    pub fn system_spec(&self) -> SystemSpec {
        let s = &self.system;
        SystemSpec {
            n_s: s.n_s,
            epsilon0: s.epsilon0,
            u0: s.u0,
            delta_epsilon: s.delta_epsilon,
            delta_u: s.delta_u,
            t0: s.t0,
            mu_before: vec![s.mu_equilibrium; self.bath.reservoirs.len()],
            mu_after: self.bath.reservoirs.iter().map(|r| r.mu).collect(),
        }
    }

    pub fn bath_spec(&self) -> BathSpec {
        BathSpec {
            reservoirs: self.bath.reservoirs.iter().map(|r| r.to_spec()).collect(),
            n_pade: self.bath.n_pade,
            scheme: self.bath.scheme,
            convention: self.bath.convention,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        let s = &self.schedule;
        LossWeights {
            omega_r: s.omega_r,
            omega_i: s.omega_i,
            omega_tr: s.omega_tr,
            lambda: s.lambda,
            delta_t: s.delta_t,
        }
    }

    pub fn optimizer_options(&self) -> OptimizerOptions {
        OptimizerOptions {
            max_iters: self.schedule.max_iters,
            grad_tol: self.schedule.grad_tol,
            ..OptimizerOptions::default()
        }
    }

    /// The fully planned schedule: partition, per-subdomain stages and
    /// features (overrides applied), and loss weights.
    pub fn training_schedule(&self) -> Result<TrainingSchedule, ConfigError> {
        let feats = parse_feature_map(&self.network.features)?;
        let layout = match (&self.schedule.width, &self.schedule.boundaries) {
            (Some(w), None) => SubdomainLayout::Uniform { width: *w },
            (None, Some(b)) => SubdomainLayout::Explicit {
                boundaries: b.clone(),
            },
            (None, None) => SubdomainLayout::Uniform {
                width: self.integrator.horizon,
            },
            (Some(_), Some(_)) => {
                return Err(invalid(
                    "schedule.width and schedule.boundaries are mutually exclusive",
                ))
            }
        };
        let recipe: Vec<(f64, f64)> = self
            .schedule
            .stages
            .iter()
            .map(|&[sp, target]| (sp, target))
            .collect();
        let mut schedule = plan_subdomains(
            self.system.t0,
            self.integrator.horizon,
            &layout,
            &feats,
            &recipe,
            self.loss_weights(),
        )
        .map_err(|e| invalid(e.to_string()))?;
        for ov in &self.schedule.overrides {
            let n = schedule.subdomains.len();
            let plan = schedule.subdomains.get_mut(ov.subdomain).ok_or_else(|| {
                invalid(format!(
                    "feature override targets subdomain {} but the partition has {n}",
                    ov.subdomain
                ))
            })?;
            plan.features = parse_feature_map(&ov.features)?;
        }
        Ok(schedule)
    }

    /// Times at which `propagate` dumps the full tensor, validated against
    /// the horizon.
    pub fn snapshot_times(&self) -> Result<Vec<f64>, ConfigError> {
        let t0 = self.system.t0;
        let t1 = t0 + self.integrator.horizon;
        for &t in &self.output.snapshot_times {
            if !(t >= t0 && t <= t1) {
                return Err(invalid(format!(
                    "snapshot time {t} outside the simulated window [{t0}, {t1}]"
                )));
            }
        }
        Ok(self.output.snapshot_times.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_toml() -> String {
        r#"
            [system]
            epsilon0 = 2.0
            u0 = 4.0
            delta_epsilon = -7.0
            delta_u = 6.0

            [bath]
            n_pade = 2

            [[bath.reservoir]]
            name = "L"
            beta = 0.3333333333333333
            mu = 1.0
            width = 5.0
            coupling = [0.5, 0.5]

            [[bath.reservoir]]
            name = "R"
            beta = 0.3333333333333333
            mu = -1.0
            width = 5.0
            coupling = [0.5, 0.5]
        "#
        .to_string()
    }

    #[test]
    fn minimal_file_fills_every_default() {
        let cfg = RunConfig::from_toml(&minimal_toml()).unwrap();
        assert_eq!(cfg.system.n_s, 2);
        assert_eq!(cfg.basis.m_max, 2);
        assert_eq!(cfg.network.n_h, 35);
        assert_eq!(cfg.network.layers, 4);
        assert_eq!(cfg.integrator.horizon, 2.3);
        let spec = cfg.system_spec();
        assert_eq!(spec.mu_after, vec![1.0, -1.0]);
        assert_eq!(spec.mu_before, vec![0.0, 0.0]);
    }

    #[test]
    fn unknown_keys_are_rejected_everywhere() {
        let with_top = format!("{}\nunknown_top = 1\n", minimal_toml());
        assert!(RunConfig::from_toml(&with_top).is_err());
        let with_nested = format!("{}\n[network]\nwombat = 3\n", minimal_toml());
        assert!(RunConfig::from_toml(&with_nested).is_err());
    }

    #[test]
    fn feature_grammar_round_trips() {
        assert_eq!(parse_feature("t").unwrap(), Feature::Time);
        assert_eq!(parse_feature("t^2").unwrap(), Feature::TimeSquared);
        assert_eq!(parse_feature("t^3").unwrap(), Feature::TimeCubed);
        assert_eq!(parse_feature("t^1.5").unwrap(), Feature::TimeSesqui);
        assert_eq!(parse_feature("t^3/2").unwrap(), Feature::TimeSesqui);
        assert_eq!(parse_feature("zero").unwrap(), Feature::Zero);
        assert_eq!(
            parse_feature("sqrt(t)/(t+0.015)").unwrap(),
            Feature::SqrtShifted { c: 0.015 }
        );
        assert!(parse_feature("t^4").is_err());
        assert!(parse_feature("sqrt(t)/(t+)").is_err());
        assert!(parse_feature("sqrt(t)/(t+-0.1)").is_ok());
        // The map constructor still vets the parsed shift.
        assert!(parse_feature_map(&["sqrt(t)/(t+-0.1)".into()]).is_err());
    }

    #[test]
    fn schedule_overrides_land_on_the_right_subdomain() {
        let toml = format!(
            "{}\n[schedule]\nboundaries = [0.0, 0.228, 0.3, 0.4]\nstages = [[0.03, 1e-3]]\n\
             [[schedule.override]]\nsubdomain = 2\nfeatures = [\"t\", \"t^1.5\", \"sqrt(t)/(t+0.015)\"]\n",
            minimal_toml()
        );
        let mut cfg = RunConfig::from_toml(&toml).unwrap();
        cfg.integrator.horizon = 0.4;
        let sched = cfg.training_schedule().unwrap();
        assert_eq!(sched.subdomains.len(), 3);
        assert_eq!(sched.subdomains[0].features, parse_feature_map(&cfg.network.features).unwrap());
        assert_eq!(
            sched.subdomains[2].features.features,
            vec![
                Feature::Time,
                Feature::TimeSesqui,
                Feature::SqrtShifted { c: 0.015 }
            ]
        );
        // Out-of-range override is a config error, not a silent no-op.
        let bad = format!(
            "{}\n[schedule]\nboundaries = [0.0, 0.2, 0.4]\n\
             [[schedule.override]]\nsubdomain = 5\nfeatures = [\"t\"]\n",
            minimal_toml()
        );
        assert!(RunConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn mixed_temperatures_are_rejected() {
        let toml = minimal_toml().replace(
            "name = \"R\"\n            beta = 0.3333333333333333",
            "name = \"R\"\n            beta = 10.0",
        );
        let err = RunConfig::from_toml(&toml).unwrap_err();
        assert!(err.to_string().contains("single-temperature"));
    }

    #[test]
    fn effective_config_survives_a_toml_round_trip() {
        let cfg = RunConfig::from_toml(&minimal_toml()).unwrap();
        let echoed = toml::to_string_pretty(&cfg).unwrap();
        let back = RunConfig::from_toml(&echoed).unwrap();
        assert_eq!(
            serde_json::to_string(&back).unwrap(),
            serde_json::to_string(&cfg).unwrap()
        );
    }
}
