//! Spectral decomposition of fermionic reservoir correlation functions.
//!
//! Each reservoir couples to the impurity through a Lorentzian hybridization
//! J(ω) = Γ W² / ((ω − Ω)² + W²).  The two-time correlation functions
//!
//!   C^σ(t) = ∫ dω e^{σiωt} f^σ(ω) J(ω),   f^σ(ω) = 1/(1 + e^{σβ(ω−μ)})
//!
//! are closed into sums of exponentials η e^{−γt} by contour integration:
//! one mode from the Lorentzian pole of J and one per Padé pole of the
//! [N−1/N] spectral decomposition of the Fermi function,
//!
//!   f(x) ≈ 1/2 − Σ_p 2 η_p x / (x² + ξ_p²).
//!
//! The mode list is what the dissipaton generator consumes; an adaptive
//! quadrature oracle evaluates the same integral directly so the expansion
//! can be cross-checked without sharing code with it.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Error)]
pub enum BathError {
    #[error("invalid bath specification: {0}")]
    InvalidSpec(String),
    #[error("degenerate exponents within one correlation function: {0}")]
    Degenerate(String),
    #[error("Fermi evaluation at a pole of the decomposition: {0}")]
    Singular(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("correlation functions are defined for t >= 0 only (got {0})")]
    NegativeTime(f64),
}

/// Dissipaton charge: σ = − creates electron-type excitations (bath gains an
/// electron), σ = + hole-type ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sigma {
    Minus,
    Plus,
}

impl Sigma {
    pub const BOTH: [Sigma; 2] = [Sigma::Minus, Sigma::Plus];

    /// The sign σ as a float, for use in exponents.
    pub fn sign(self) -> f64 {
        match self {
            Sigma::Minus => -1.0,
            Sigma::Plus => 1.0,
        }
    }

    pub fn conjugate(self) -> Sigma {
        match self {
            Sigma::Minus => Sigma::Plus,
            Sigma::Plus => Sigma::Minus,
        }
    }
}

/// Which pole of the closed contour produced a mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeKind {
    /// Pole of the Lorentzian hybridization at Ω + σiW.
    Lorentzian,
    /// Padé (or Matsubara) pole of the Fermi function.
    Pade,
    /// Discrete bath level; purely oscillatory exponent.
    DiscreteLevel,
}

/// One exponential term η e^{−γt} of a correlation function C^σ.
///
/// The identity (reservoir, orbital, pole) names the dissipaton level j;
/// the σ = ± partners of one level always appear as a pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentialMode {
    pub reservoir: usize,
    pub orbital: usize,
    pub pole: usize,
    pub sigma: Sigma,
    pub eta: Complex64,
    pub gamma: Complex64,
    pub kind: ModeKind,
}

/// Scheme used to decompose the Fermi function into simple poles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsdScheme {
    /// [N−1/N] Padé spectral decomposition (fast-converging default).
    Pade,
    /// Plain Matsubara poles ξ_p = (2p−1)π with unit residues.
    Matsubara,
}

/// Prefactor convention for C^σ(t) = (1 or 1/π) ∫ dω e^{σiωt} f^σ J.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralConvention {
    /// No prefactor; Σ_σ C^σ(0) = πΓW.
    PaperLiteral,
    /// 1/π prefactor; Σ_σ C^σ(0) = ΓW.
    OneOverPi,
}

/// One fermionic reservoir with a Lorentzian hybridization window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReservoirSpec {
    pub name: String,
    /// Inverse temperature β (units of 1/Γ).
    pub beta: f64,
    /// Chemical potential μ.
    pub mu: f64,
    /// Band center Ω; defaults to μ when absent.
    pub center: Option<f64>,
    /// Half width W of the Lorentzian.
    pub width: f64,
    /// Coupling strength Γ per system spin-orbital; zero decouples one.
    pub coupling: Vec<f64>,
}

impl ReservoirSpec {
    pub fn center(&self) -> f64 {
        self.center.unwrap_or(self.mu)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BathSpec {
    pub reservoirs: Vec<ReservoirSpec>,
    /// Number of Padé (or Matsubara) poles retained per correlation function.
    pub n_pade: usize,
    pub scheme: PsdScheme,
    pub convention: SpectralConvention,
}

impl BathSpec {
    pub fn validate(&self, n_orbitals: usize) -> Result<(), BathError> {
        if self.reservoirs.is_empty() {
            return Err(BathError::InvalidSpec("no reservoirs".into()));
        }
        if self.n_pade == 0 {
            return Err(BathError::InvalidSpec(
                "n_pade must be at least 1".into(),
            ));
        }
        for r in &self.reservoirs {
            if !(r.beta.is_finite() && r.beta > 0.0) {
                return Err(BathError::InvalidSpec(format!(
                    "reservoir {}: beta must be finite and positive",
                    r.name
                )));
            }
            if !(r.width.is_finite() && r.width > 0.0) {
                return Err(BathError::InvalidSpec(format!(
                    "reservoir {}: width must be finite and positive",
                    r.name
                )));
            }
            if !r.mu.is_finite() || !r.center().is_finite() {
                return Err(BathError::InvalidSpec(format!(
                    "reservoir {}: non-finite mu or center",
                    r.name
                )));
            }
            if r.coupling.len() != n_orbitals {
                return Err(BathError::InvalidSpec(format!(
                    "reservoir {}: expected {} coupling entries, got {}",
                    r.name,
                    n_orbitals,
                    r.coupling.len()
                )));
            }
            if r.coupling.iter().any(|g| !g.is_finite() || *g < 0.0) {
                return Err(BathError::InvalidSpec(format!(
                    "reservoir {}: couplings must be finite and non-negative",
                    r.name
                )));
            }
        }
        Ok(())
    }
}

/// Positive eigenvalues λ of a symmetric tridiagonal matrix with zero
/// diagonal and the given off-diagonal entries, returned ascending.
fn positive_tridiag_eigenvalues(off: &[f64]) -> Result<Vec<f64>, BathError> {
    let n = off.len() + 1;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for (k, &b) in off.iter().enumerate() {
        m[(k, k + 1)] = b;
        m[(k + 1, k)] = b;
    }
    let eig = SymmetricEigen::new(m);
    let mut pos: Vec<f64> = eig
        .eigenvalues
        .iter()
        .copied()
        .filter(|&l| l > 1e-14)
        .collect();
    pos.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    Ok(pos)
}

/// Poles ξ_p and residues η_p of the [N−1/N] Padé spectral decomposition of
/// the Fermi function, sorted by ascending ξ.
///
/// ξ_p = 2/λ_p with λ_p the positive eigenvalues of the 2N×2N tridiagonal
/// matrix with off-diagonals 1/√((2m−1)(2m+1)); the residues additionally
/// use ζ_k = 2/μ_k from the (2N−1)-dimensional companion matrix with
/// off-diagonals 1/√((2m+1)(2m+3)).
pub fn pade_poles_residues(n: usize) -> Result<Vec<(f64, f64)>, BathError> {
    if n == 0 {
        return Err(BathError::InvalidSpec("n_pade must be at least 1".into()));
    }
    let off_xi: Vec<f64> = (1..2 * n)
        .map(|m| 1.0 / (((2 * m - 1) * (2 * m + 1)) as f64).sqrt())
        .collect();
    let lambda = positive_tridiag_eigenvalues(&off_xi)?;
    if lambda.len() != n {
        return Err(BathError::InvalidSpec(format!(
            "expected {} positive eigenvalues, found {}",
            n,
            lambda.len()
        )));
    }
    // Ascending ξ = descending λ.
    let mut xi: Vec<f64> = lambda.iter().map(|l| 2.0 / l).collect();
    xi.sort_by(|a, b| a.partial_cmp(b).expect("finite poles"));

    let zeta: Vec<f64> = if n > 1 {
        let off_zeta: Vec<f64> = (1..2 * n - 1)
            .map(|m| 1.0 / (((2 * m + 1) * (2 * m + 3)) as f64).sqrt())
            .collect();
        let mu = positive_tridiag_eigenvalues(&off_zeta)?;
        if mu.len() != n - 1 {
            return Err(BathError::InvalidSpec(format!(
                "expected {} positive companion eigenvalues, found {}",
                n - 1,
                mu.len()
            )));
        }
        mu.iter().map(|m| 2.0 / m).collect()
    } else {
        Vec::new()
    };

    let pref = 0.5 * (n * (2 * n + 1)) as f64;
    let mut out = Vec::with_capacity(n);
    for p in 0..n {
        let xp2 = xi[p] * xi[p];
        let mut num = 1.0;
        for z in &zeta {
            num *= z * z - xp2;
        }
        let mut den = 1.0;
        for (k, x) in xi.iter().enumerate() {
            if k != p {
                den *= x * x - xp2;
            }
        }
        out.push((xi[p], pref * num / den));
    }
    Ok(out)
}

/// Poles and residues for the configured scheme.
pub fn poles_residues(scheme: PsdScheme, n: usize) -> Result<Vec<(f64, f64)>, BathError> {
    match scheme {
        PsdScheme::Pade => pade_poles_residues(n),
        PsdScheme::Matsubara => Ok((1..=n)
            .map(|p| ((2 * p - 1) as f64 * std::f64::consts::PI, 1.0))
            .collect()),
    }
}

/// Evaluate the pole decomposition f(z) = 1/2 − Σ_p 2 η_p z/(z² + ξ_p²) at a
/// complex argument.  Errors if z sits on (or numerically at) a pole ±iξ_p.
pub fn fermi_eval_psd(z: Complex64, poles: &[(f64, f64)]) -> Result<Complex64, BathError> {
    let tol = 1e-12 * (1.0 + z.norm());
    let mut f = Complex64::new(0.5, 0.0);
    for &(xi, eta) in poles {
        let up = z - I * xi;
        let dn = z + I * xi;
        if up.norm() < tol || dn.norm() < tol {
            return Err(BathError::Singular(format!(
                "argument {z} within {tol:.1e} of pole ±i{xi}"
            )));
        }
        f -= 2.0 * eta * z / (z * z + xi * xi);
    }
    Ok(f)
}

fn lorentzian_j(gamma: f64, width: f64, center: f64, z: Complex64) -> Complex64 {
    let d = z - center;
    gamma * width * width / (d * d + width * width)
}

/// Expand every reservoir correlation function into exponential modes.
///
/// For each (reservoir α, orbital u) with non-zero coupling and each charge
/// σ the closed contour yields one Lorentzian-pole mode
///   γ = W − σiΩ,  η = πΓW · f_PSD(σβ(Ω + σiW − μ)),
/// and one mode per Padé pole
///   γ_p = ξ_p/β − σiμ,  η_p = −(2πi/β) η_p^{psd} J(μ + σiξ_p/β).
/// Under the 1/π convention all amplitudes are divided by π.
pub fn expand_bath(spec: &BathSpec, n_orbitals: usize) -> Result<Vec<ExponentialMode>, BathError> {
    spec.validate(n_orbitals)?;
    let poles = poles_residues(spec.scheme, spec.n_pade)?;
    let pref = match spec.convention {
        SpectralConvention::PaperLiteral => 1.0,
        SpectralConvention::OneOverPi => 1.0 / std::f64::consts::PI,
    };
    let pi = std::f64::consts::PI;

    let mut modes = Vec::new();
    for (alpha, res) in spec.reservoirs.iter().enumerate() {
        let omega = res.center();
        for (u, &g) in res.coupling.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for sigma in Sigma::BOTH {
                let s = sigma.sign();
                // Pole of J enclosed by the σ contour.
                let zj = Complex64::new(omega, s * res.width);
                let f_at_j = fermi_eval_psd(s * res.beta * (zj - res.mu), &poles)?;
                modes.push(ExponentialMode {
                    reservoir: alpha,
                    orbital: u,
                    pole: 0,
                    sigma,
                    eta: pref * pi * g * res.width * f_at_j,
                    gamma: Complex64::new(res.width, -s * omega),
                    kind: ModeKind::Lorentzian,
                });
                // Poles of the Fermi decomposition.
                for (p, &(xi, eta_psd)) in poles.iter().enumerate() {
                    let zp = Complex64::new(res.mu, s * xi / res.beta);
                    modes.push(ExponentialMode {
                        reservoir: alpha,
                        orbital: u,
                        pole: p + 1,
                        sigma,
                        eta: pref
                            * (-2.0 * pi * I / res.beta)
                            * eta_psd
                            * lorentzian_j(g, res.width, omega, zp),
                        gamma: Complex64::new(xi / res.beta, -s * res.mu),
                        kind: ModeKind::Pade,
                    });
                }
            }
        }
    }
    check_degeneracy(&modes)?;
    Ok(modes)
}

/// Reject exponent collisions within one correlation function: two modes of
/// the same (reservoir, orbital, σ) with coinciding γ would require merged
/// amplitudes, which the generator does not represent.
pub fn check_degeneracy(modes: &[ExponentialMode]) -> Result<(), BathError> {
    for (i, a) in modes.iter().enumerate() {
        for b in modes.iter().skip(i + 1) {
            if a.reservoir == b.reservoir
                && a.orbital == b.orbital
                && a.sigma == b.sigma
                && (a.gamma - b.gamma).norm() < 1e-9 * (1.0 + a.gamma.norm() + b.gamma.norm())
            {
                return Err(BathError::Degenerate(format!(
                    "reservoir {} orbital {} σ{:?}: poles {} and {} share γ ≈ {}",
                    a.reservoir, a.orbital, a.sigma, a.pole, b.pole, a.gamma
                )));
            }
        }
    }
    Ok(())
}

/// C^σ(t) as the mode sum Σ η e^{−γt}, restricted to one (reservoir, orbital).
pub fn correlation_from_modes(
    modes: &[ExponentialMode],
    reservoir: usize,
    orbital: usize,
    sigma: Sigma,
    t: f64,
) -> Result<Complex64, BathError> {
    if t < 0.0 {
        return Err(BathError::NegativeTime(t));
    }
    Ok(modes
        .iter()
        .filter(|m| m.reservoir == reservoir && m.orbital == orbital && m.sigma == sigma)
        .map(|m| m.eta * (-m.gamma * t).exp())
        .sum())
}

/// Adaptive-Simpson evaluation of C^σ(t) with the Fermi function replaced by
/// the same pole decomposition the mode sum uses, so the two routes share an
/// integrand but nothing else.
///
/// The window [Ω − 40W, Ω + 40W] is integrated directly; outside it the
/// integrand still carries ~ J(ω)/2 because the decomposed Fermi function
/// tends to 1/2 at ±∞, a tail of relative weight ~1/40 that plain
/// truncation would keep.  Both tails are therefore completed by rotating
/// the contour onto vertical rays ω = edge ± iy, on which e^{σiωt} turns
/// into pure exponential decay and the rational factor is smooth; every pole
/// of the integrand has real part Ω or μ, so the rotated quarter-contours
/// enclose nothing.
pub fn correlation_quadrature_oracle(
    spec: &BathSpec,
    reservoir: usize,
    orbital: usize,
    sigma: Sigma,
    t: f64,
) -> Result<Complex64, BathError> {
    if t < 0.0 {
        return Err(BathError::NegativeTime(t));
    }
    let res = spec
        .reservoirs
        .get(reservoir)
        .ok_or_else(|| BathError::InvalidSpec(format!("no reservoir {reservoir}")))?;
    let g = *res
        .coupling
        .get(orbital)
        .ok_or_else(|| BathError::InvalidSpec(format!("no orbital {orbital}")))?;
    let poles = poles_residues(spec.scheme, spec.n_pade)?;
    let pref = match spec.convention {
        SpectralConvention::PaperLiteral => 1.0,
        SpectralConvention::OneOverPi => 1.0 / std::f64::consts::PI,
    };
    let s = sigma.sign();
    let omega0 = res.center();
    let w = res.width;
    // Non-oscillatory rational factor, defined off the real axis as well.
    let rational = |z: Complex64| -> Result<Complex64, BathError> {
        let fermi = fermi_eval_psd(s * res.beta * (z - res.mu), &poles)?;
        Ok(fermi * lorentzian_j(g, w, omega0, z) * pref)
    };

    let a = omega0.min(res.mu) - 40.0 * w;
    let b = omega0.max(res.mu) + 40.0 * w;
    let f = |x: f64| -> Result<Complex64, BathError> {
        Ok((I * s * x * t).exp() * rational(x.into())?)
    };
    // Seed enough panels to resolve the e^{iωt} oscillation before adapting.
    let oscillations = (b - a) * t.abs() / (2.0 * std::f64::consts::PI);
    let panels = 64.max((8.0 * oscillations).ceil() as usize);
    let tol = 1e-10;
    let mut total = Complex64::new(0.0, 0.0);
    let h = (b - a) / panels as f64;
    for k in 0..panels {
        let lo = a + k as f64 * h;
        total += adaptive_simpson(&f, lo, lo + h, tol / panels as f64, 40)?;
    }

    // Vertical-ray tails.  With Λ = σt, e^{iΛω} decays for Im ω of the same
    // sign as Λ, so each real tail equals a damped integral up (or down) the
    // window edge; mapping y = W u/(1−u) compactifies it onto u ∈ [0, 1].
    let lambda = s * t;
    let sgn = if lambda >= 0.0 { 1.0 } else { -1.0 };
    let edge_ray = |edge: f64| -> Result<Complex64, BathError> {
        let f = |u: f64| -> Result<Complex64, BathError> {
            let uc = u.min(1.0 - 1e-12);
            let y = w * uc / (1.0 - uc);
            let jac = w / ((1.0 - uc) * (1.0 - uc));
            Ok((-lambda.abs() * y).exp()
                * rational(Complex64::new(edge, sgn * y))?
                * jac)
        };
        Ok(I * sgn * (I * lambda * edge).exp() * adaptive_simpson(&f, 0.0, 1.0, tol, 48)?)
    };
    total += edge_ray(b)?;
    total -= edge_ray(a)?;
    Ok(total)
}

fn simpson(fa: Complex64, fm: Complex64, fb: Complex64, h: f64) -> Complex64 {
    (fa + 4.0 * fm + fb) * (h / 6.0)
}

fn adaptive_simpson<F>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    depth: usize,
) -> Result<Complex64, BathError>
where
    F: Fn(f64) -> Result<Complex64, BathError>,
{
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a)?, f(m)?, f(b)?);
    adaptive_simpson_inner(f, a, b, tol, fa, fm, fb, simpson(fa, fm, fb, b - a), depth)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson_inner<F>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    fa: Complex64,
    fm: Complex64,
    fb: Complex64,
    whole: Complex64,
    depth: usize,
) -> Result<Complex64, BathError>
where
    F: Fn(f64) -> Result<Complex64, BathError>,
{
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm)?, f(rm)?);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if delta.norm() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(BathError::Quadrature(format!(
            "tolerance {tol:.1e} not reached on [{a}, {b}]"
        )));
    }
    Ok(adaptive_simpson_inner(f, a, m, 0.5 * tol, fa, flm, fm, left, depth - 1)?
        + adaptive_simpson_inner(f, m, b, 0.5 * tol, fm, frm, fb, right, depth - 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn single_reservoir(beta: f64, mu: f64, width: f64, g: f64, n_pade: usize) -> BathSpec {
        BathSpec {
            reservoirs: vec![ReservoirSpec {
                name: "L".into(),
                beta,
                mu,
                center: None,
                width,
                coupling: vec![g],
            }],
            n_pade,
            scheme: PsdScheme::Pade,
            convention: SpectralConvention::PaperLiteral,
        }
    }

    #[test]
    fn pade_n1_closed_form() {
        let pr = pade_poles_residues(1).unwrap();
        assert_eq!(pr.len(), 1);
        assert_relative_eq!(pr[0].0, 2.0 * 3.0_f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(pr[0].1, 1.5, max_relative = 1e-12);
    }

    #[test]
    fn pade_taylor_identity() {
        // f(x) = 1/2 − x/4 + O(x³) forces Σ_p 2η_p/ξ_p² = 1/4.
        for n in 1..=8 {
            let sum: f64 = pade_poles_residues(n)
                .unwrap()
                .iter()
                .map(|(xi, eta)| 2.0 * eta / (xi * xi))
                .sum();
            assert_relative_eq!(sum, 0.25, max_relative = 1e-10);
        }
    }

    #[test]
    fn fermi_half_at_zero() {
        let poles = pade_poles_residues(4).unwrap();
        let f = fermi_eval_psd(Complex64::new(0.0, 0.0), &poles).unwrap();
        assert_eq!(f, Complex64::new(0.5, 0.0));
    }

    #[test]
    fn fermi_accurate_at_moderate_argument() {
        let poles = pade_poles_residues(8).unwrap();
        let f = fermi_eval_psd(Complex64::new(5.0, 0.0), &poles).unwrap();
        let exact = 1.0 / (1.0 + 5.0_f64.exp());
        assert!((f.re - exact).abs() < 1e-8, "err {}", (f.re - exact).abs());
        assert!(f.im.abs() < 1e-14);
    }

    #[test]
    fn fermi_error_shrinks_with_order() {
        let xs: Vec<f64> = (0..101).map(|k| -5.0 + 0.1 * k as f64).collect();
        let mut last = f64::INFINITY;
        for n in 1..=8 {
            let poles = pade_poles_residues(n).unwrap();
            let sup = xs
                .iter()
                .map(|&x| {
                    let f = fermi_eval_psd(Complex64::new(x, 0.0), &poles).unwrap();
                    (f.re - 1.0 / (1.0 + x.exp())).abs()
                })
                .fold(0.0, f64::max);
            assert!(sup <= last + 1e-15, "order {n}: sup error grew to {sup}");
            last = sup;
        }
        assert!(last < 1e-10, "order 8 sup error {last}");
    }

    #[test]
    fn fermi_particle_hole_sum_rule() {
        let poles = pade_poles_residues(5).unwrap();
        proptest!(|(re in -20.0..20.0f64, im in -3.0..3.0f64)| {
            let z = Complex64::new(re, im);
            if let (Ok(a), Ok(b)) = (fermi_eval_psd(z, &poles), fermi_eval_psd(-z, &poles)) {
                prop_assert!((a + b - 1.0).norm() < 1e-12);
            }
        });
    }

    #[test]
    fn pole_collision_rejected() {
        let poles = pade_poles_residues(2).unwrap();
        let z = Complex64::new(0.0, poles[0].0);
        assert!(matches!(
            fermi_eval_psd(z, &poles),
            Err(BathError::Singular(_))
        ));
    }

    #[test]
    fn expansion_mode_inventory() {
        let spec = single_reservoir(2.0, 0.3, 1.5, 0.8, 2);
        let modes = expand_bath(&spec, 1).unwrap();
        // (1 Lorentzian + 2 Padé) per σ.
        assert_eq!(modes.len(), 6);
        for sigma in Sigma::BOTH {
            let per: Vec<_> = modes.iter().filter(|m| m.sigma == sigma).collect();
            assert_eq!(per.len(), 3);
            assert_eq!(
                per.iter().filter(|m| m.kind == ModeKind::Lorentzian).count(),
                1
            );
        }
        // σ partners pair up level by level with conjugate exponents.
        for m in &modes {
            let partner = modes
                .iter()
                .find(|o| {
                    o.pole == m.pole && o.sigma == m.sigma.conjugate() && o.reservoir == m.reservoir
                })
                .expect("partner mode");
            assert!((partner.gamma - m.gamma.conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn expansion_sum_rule() {
        // Σ_σ C^σ(0) = ∫ J = πΓW under the paper-literal convention.
        let spec = single_reservoir(1.7, -0.4, 2.2, 0.9, 6);
        let modes = expand_bath(&spec, 1).unwrap();
        let c0: Complex64 = Sigma::BOTH
            .iter()
            .map(|&s| correlation_from_modes(&modes, 0, 0, s, 0.0).unwrap())
            .sum();
        let exact = std::f64::consts::PI * 0.9 * 2.2;
        assert_relative_eq!(c0.re, exact, max_relative = 1e-8);
        assert!(c0.im.abs() < 1e-8 * exact);
    }

    #[test]
    fn expansion_high_temperature_limit() {
        // β → 0: f ≈ 1/2 everywhere, so C^σ(0) → πΓW/2.
        let spec = single_reservoir(1e-4, 0.0, 1.0, 1.0, 2);
        let modes = expand_bath(&spec, 1).unwrap();
        let c0 = correlation_from_modes(&modes, 0, 0, Sigma::Plus, 0.0).unwrap();
        let expect = std::f64::consts::PI / 2.0;
        assert_relative_eq!(c0.re, expect, max_relative = 1e-2);
    }

    #[test]
    fn one_over_pi_convention_scales_amplitudes() {
        let mut spec = single_reservoir(2.0, 0.1, 1.0, 0.7, 3);
        let a = expand_bath(&spec, 1).unwrap();
        spec.convention = SpectralConvention::OneOverPi;
        let b = expand_bath(&spec, 1).unwrap();
        for (ma, mb) in a.iter().zip(&b) {
            assert!((ma.eta / std::f64::consts::PI - mb.eta).norm() < 1e-14 * ma.eta.norm());
            assert_eq!(ma.gamma, mb.gamma);
        }
    }

    #[test]
    fn mode_sum_matches_quadrature() {
        for convention in [SpectralConvention::PaperLiteral, SpectralConvention::OneOverPi] {
            let mut spec = single_reservoir(2.3, 0.4, 1.3, 0.6, 6);
            spec.reservoirs[0].center = Some(0.9);
            spec.convention = convention;
            let modes = expand_bath(&spec, 1).unwrap();
            let scale = correlation_from_modes(&modes, 0, 0, Sigma::Plus, 0.0)
                .unwrap()
                .norm();
            for sigma in Sigma::BOTH {
                for k in 0..20 {
                    let t = 5.0 / 1.3 * k as f64 / 19.0;
                    let sum = correlation_from_modes(&modes, 0, 0, sigma, t).unwrap();
                    let quad =
                        correlation_quadrature_oracle(&spec, 0, 0, sigma, t).unwrap();
                    assert!(
                        (sum - quad).norm() <= 1e-6 * scale,
                        "{convention:?} σ{sigma:?} t={t}: |Δ|={}",
                        (sum - quad).norm()
                    );
                }
            }
        }
    }

    #[test]
    fn zero_coupling_drops_orbital() {
        let spec = BathSpec {
            reservoirs: vec![ReservoirSpec {
                name: "L".into(),
                beta: 1.0,
                mu: 0.0,
                center: None,
                width: 1.0,
                coupling: vec![0.5, 0.0],
            }],
            n_pade: 1,
            scheme: PsdScheme::Pade,
            convention: SpectralConvention::PaperLiteral,
        };
        let modes = expand_bath(&spec, 2).unwrap();
        assert!(modes.iter().all(|m| m.orbital == 0));
    }

    #[test]
    fn exponent_degeneracy_detected() {
        // W = ξ₁/β with Ω = μ makes the Lorentzian pole collide with the
        // first Padé pole: a genuine double pole of the closed contour.  The
        // collision surfaces at the Fermi evaluation (the Lorentzian pole IS
        // the Padé pole), so either loud error is acceptable.
        let xi1 = pade_poles_residues(1).unwrap()[0].0;
        let beta = 2.0;
        let spec = single_reservoir(beta, 0.0, xi1 / beta, 1.0, 1);
        assert!(matches!(
            expand_bath(&spec, 1),
            Err(BathError::Degenerate(_)) | Err(BathError::Singular(_))
        ));

        // A pure exponent collision (same γ, distinct poles) is what the
        // dedicated check reports; discrete levels with equal energies are
        // the realistic source.
        let mk = |pole: usize| ExponentialMode {
            reservoir: 0,
            orbital: 0,
            pole,
            sigma: Sigma::Plus,
            eta: Complex64::new(0.3, 0.0),
            gamma: Complex64::new(0.0, -0.7),
            kind: ModeKind::DiscreteLevel,
        };
        assert!(matches!(
            check_degeneracy(&[mk(0), mk(1)]),
            Err(BathError::Degenerate(_))
        ));
    }

    #[test]
    fn collisions_across_reservoirs_are_fine() {
        // Two equilibrium reservoirs with identical parameters share every
        // exponent; that is legitimate and must not be flagged.
        let r = ReservoirSpec {
            name: "L".into(),
            beta: 2.0,
            mu: 0.0,
            center: None,
            width: 1.0,
            coupling: vec![0.5],
        };
        let mut r2 = r.clone();
        r2.name = "R".into();
        let spec = BathSpec {
            reservoirs: vec![r, r2],
            n_pade: 2,
            scheme: PsdScheme::Pade,
            convention: SpectralConvention::PaperLiteral,
        };
        assert!(expand_bath(&spec, 1).is_ok());
    }

    #[test]
    fn negative_time_rejected() {
        let spec = single_reservoir(1.0, 0.0, 1.0, 1.0, 1);
        let modes = expand_bath(&spec, 1).unwrap();
        assert!(correlation_from_modes(&modes, 0, 0, Sigma::Plus, -0.1).is_err());
        assert!(correlation_quadrature_oracle(&spec, 0, 0, Sigma::Plus, -0.1).is_err());
    }

    #[test]
    fn matsubara_fallback_behaves() {
        let mut spec = single_reservoir(1.0, 0.0, 1.0, 1.0, 40);
        spec.scheme = PsdScheme::Matsubara;
        let poles = poles_residues(PsdScheme::Matsubara, 40).unwrap();
        assert_relative_eq!(poles[0].0, std::f64::consts::PI, max_relative = 1e-14);
        assert_eq!(poles[0].1, 1.0);
        let f = fermi_eval_psd(Complex64::new(2.0, 0.0), &poles).unwrap();
        let exact = 1.0 / (1.0 + 2.0_f64.exp());
        assert!((f.re - exact).abs() < 1e-2);
        // Sum rule survives the scheme swap.
        let modes = expand_bath(&spec, 1).unwrap();
        let c0: Complex64 = Sigma::BOTH
            .iter()
            .map(|&s| correlation_from_modes(&modes, 0, 0, s, 0.0).unwrap())
            .sum();
        assert_relative_eq!(c0.re, std::f64::consts::PI, max_relative = 1e-3);
    }
}
