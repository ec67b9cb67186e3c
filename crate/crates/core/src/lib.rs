//! Simulation toolkit for open-fermion impurity dynamics in the
//! dissipaton-embedded picture.
//!
//! The reduced dynamics of an impurity coupled to fermionic reservoirs is
//! represented by a reduced density tensor ρ(n, n′; m⁻, m⁺): a system
//! ket/bra pair dressed with occupation numbers of electron-type (m⁻) and
//! hole-type (m⁺) dissipatons, one pair per exponential mode of the bath
//! correlation functions.  The tensor obeys a linear equation of motion
//! ρ̇ = Lρ whose vacuum block (m = 0) carries the physical density matrix.
//!
//! The crate provides two independent solvers for the same generator —
//! a fixed-step RK4 reference integrator and a physics-informed complex
//! network trained subdomain by subdomain — plus the spectral bath
//! expansion, exact small-system oracles, and a CLI that wires them
//! together.

pub mod bath;
pub mod cli;
pub mod config;
pub mod driver;
pub mod dqme;
pub mod optim;
pub mod pinn;
pub mod reference;

pub use num_complex::Complex64;
