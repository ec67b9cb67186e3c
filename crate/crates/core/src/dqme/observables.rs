//! Physical observables read off the vacuum–diagonal block.
//!
//! The m⃗ = 0, n⃗ = n⃗′ entries of the tensor are the diagonal of the reduced
//! density matrix ρ₀; everything physical reported by the toolkit (trace,
//! occupations, reservoir currents) contracts against that block.

use super::basis::RdtBasis;
use super::liouvillian::Liouvillian;
use super::DqmeError;
use num_complex::Complex64;

/// tr_s ρ₀: sum of the vacuum–diagonal entries.
pub fn vacuum_trace(rho: &[Complex64], basis: &RdtBasis) -> Complex64 {
    let l = basis.layout;
    basis
        .states
        .iter()
        .zip(rho)
        .filter(|(s, _)| s.is_vacuum_diagonal(&l))
        .map(|(_, v)| v)
        .sum()
}

/// ⟨n̂_u⟩ = tr_s(n̂_u ρ₀), real part; a stray imaginary component above
/// 1e−8 marks the state as unphysical.
pub fn occupation_expectation(
    rho: &[Complex64],
    basis: &RdtBasis,
    u: usize,
) -> Result<f64, DqmeError> {
    let l = basis.layout;
    if u >= l.n_s {
        return Err(DqmeError::InvalidSystem(format!(
            "orbital {u} out of range for N_S = {}",
            l.n_s
        )));
    }
    if rho.len() != basis.len() {
        return Err(DqmeError::Dimension {
            got: rho.len(),
            want: basis.len(),
        });
    }
    let total: Complex64 = basis
        .states
        .iter()
        .zip(rho)
        .filter(|(s, _)| s.is_vacuum_diagonal(&l) && s.n_occupied(&l, u))
        .map(|(_, v)| v)
        .sum();
    if total.im.abs() > 1e-8 {
        return Err(DqmeError::NonPhysical(format!(
            "⟨n̂_{u}⟩ has imaginary residue {:.3e}",
            total.im
        )));
    }
    Ok(total.re)
}

/// Electron current from reservoir α into the impurity,
/// I_α = tr_s[N̂_sys P₀ (L_α ρ)] with L_α the α-tagged coupling entries.
pub fn reservoir_current(
    liou: &Liouvillian,
    rho: &[Complex64],
    alpha: usize,
) -> Result<f64, DqmeError> {
    let v = liou.current_into(alpha, rho)?;
    if v.im.abs() > 1e-6 {
        return Err(DqmeError::NonPhysical(format!(
            "I_{alpha} has imaginary residue {:.3e}",
            v.im
        )));
    }
    Ok(v.re)
}
