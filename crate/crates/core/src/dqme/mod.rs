//! Dissipaton-embedded master equation for impurity models.
//!
//! The reduced density tensor ρ(n⃗, n⃗′; m⃗⁻, m⃗⁺) lives on an enlarged
//! fermionic configuration space: system bits n⃗ (ket side) and n⃗′ (bra
//! side), plus one electron-type (m⁻) and one hole-type (m⁺) dissipaton bit
//! per exponential mode of the bath expansion.  The vacuum–diagonal block
//! m⃗ = 0 carries the physical reduced density matrix; all other entries are
//! generalized auxiliary amplitudes that feed back on it.
//!
//! Submodules: state enumeration and indexing ([`basis`]), sparse generator
//! assembly with the machine-selected operator convention ([`liouvillian`],
//! [`convention`]), and physical observables ([`observables`]).

pub mod basis;
pub mod convention;
pub mod liouvillian;
pub mod observables;

pub use basis::{enumerate_basis, reachability_filter, BasisState, RdtBasis};
pub use liouvillian::{
    apply_liouvillian, build_liouvillian, pair_levels, Convention, DissipatonLevel,
    FamilyTag, ImpurityParams, Liouvillian,
};
pub use basis::vacuum_diagonal_seeds;
pub use convention::{search_convention, selected_convention};
pub use observables::{occupation_expectation, reservoir_current, vacuum_trace};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DqmeError {
    #[error("state space too large: {count} states exceeds cap {cap}")]
    Capacity { count: usize, cap: usize },
    #[error("empty seed set for the reachability filter")]
    EmptySeeds,
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("mode list inconsistent with basis: {0}")]
    ModeMismatch(String),
    #[error("unpaired dissipaton level: {0}")]
    UnpairedLevel(String),
    #[error("dimension mismatch: vector has {got}, generator expects {want}")]
    Dimension { got: usize, want: usize },
    #[error("operator convention rejected: {0}")]
    ConventionRejected(String),
    #[error("convention search failed: {0}")]
    ConventionSearch(String),
    #[error("unknown reservoir tag {0}")]
    UnknownReservoir(usize),
    #[error("non-physical state: {0}")]
    NonPhysical(String),
    #[error("invalid time grid: {0}")]
    Grid(String),
}

/// Impurity Hamiltonian parameters together with the sudden quench that
/// shifts them at t₀: H_S(t) = Σ_u ε_u(t) n̂_u + U(t) n̂_↑ n̂_↓.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SystemSpec {
    /// Number of system spin-orbitals (1 = spinless level, 2 = Anderson).
    pub n_s: usize,
    /// Level energy ε₀ before the quench (shared by both spins).
    pub epsilon0: f64,
    /// On-site repulsion U₀ before the quench (ignored for n_s = 1).
    pub u0: f64,
    /// Sudden shift Δε applied at t₀.
    pub delta_epsilon: f64,
    /// Sudden shift ΔU applied at t₀.
    pub delta_u: f64,
    /// Quench time t₀; t < t₀ uses the bare parameters.
    pub t0: f64,
    /// Reservoir chemical potentials before the quench (per reservoir).
    pub mu_before: Vec<f64>,
    /// Reservoir chemical potentials after the quench.
    pub mu_after: Vec<f64>,
}

impl SystemSpec {
    pub fn validate(&self) -> Result<(), DqmeError> {
        if !(self.n_s == 1 || self.n_s == 2) {
            return Err(DqmeError::InvalidSystem(format!(
                "n_s must be 1 or 2, got {}",
                self.n_s
            )));
        }
        if self.mu_before.len() != self.mu_after.len() {
            return Err(DqmeError::InvalidSystem(
                "mu_before and mu_after must list the same reservoirs".into(),
            ));
        }
        for v in [
            self.epsilon0,
            self.u0,
            self.delta_epsilon,
            self.delta_u,
            self.t0,
        ] {
            if !v.is_finite() {
                return Err(DqmeError::InvalidSystem("non-finite parameter".into()));
            }
        }
        Ok(())
    }

    /// Impurity parameters in effect at time t.
    pub fn params_at(&self, t: f64) -> ImpurityParams {
        if t < self.t0 {
            ImpurityParams {
                epsilon: vec![self.epsilon0; self.n_s],
                u: self.u0,
            }
        } else {
            ImpurityParams {
                epsilon: vec![self.epsilon0 + self.delta_epsilon; self.n_s],
                u: self.u0 + self.delta_u,
            }
        }
    }
}
