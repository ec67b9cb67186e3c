//! Fixed-step reference propagation of the embedded master equation, plus an
//! exactly solvable companion: an impurity hybridized with a handful of
//! discrete bath levels.
//!
//! A discrete bath has a correlation function that is a *finite* sum of
//! exponentials, C^σ(t) = Σ_k |t_k|² f^σ(ε_k) e^{−σiε_k t}, so the dissipaton
//! hierarchy closes at tier 2K with no truncation error.  Diagonalizing the
//! composite impurity⊕levels Hamiltonian then gives the reduced dynamics in
//! closed form, which pins every sign in the generator: a single wrong
//! fermionic string shows up as an occupation error of order one.

use crate::dqme::basis::RdtBasis;
use crate::dqme::liouvillian::{DissipatonLevel, ImpurityParams, Liouvillian};
use crate::dqme::DqmeError;
use num_complex::Complex64;

/// Work buffers for one classical fourth-order step, reused across steps.
pub struct Rk4Scratch {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    stage: Vec<Complex64>,
}

impl Rk4Scratch {
    pub fn new(dim: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); dim];
        Rk4Scratch {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            stage: z,
        }
    }
}

/// One classical Runge–Kutta step of ρ̇ = f(ρ) with fixed step h.
pub fn rk4_step_with<F>(f: &mut F, rho: &mut [Complex64], h: f64, s: &mut Rk4Scratch)
where
    F: FnMut(&[Complex64], &mut [Complex64]),
{
    let n = rho.len();
    f(rho, &mut s.k1);
    for i in 0..n {
        s.stage[i] = rho[i] + 0.5 * h * s.k1[i];
    }
    f(&s.stage, &mut s.k2);
    for i in 0..n {
        s.stage[i] = rho[i] + 0.5 * h * s.k2[i];
    }
    f(&s.stage, &mut s.k3);
    for i in 0..n {
        s.stage[i] = rho[i] + h * s.k3[i];
    }
    f(&s.stage, &mut s.k4);
    let w = h / 6.0;
    for i in 0..n {
        rho[i] += w * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
    }
}

/// Propagate ρ̇ = f(ρ) from t = 0 and sample at the requested times.
///
/// `times` must be non-decreasing and non-negative.  Each sampling interval
/// is subdivided uniformly so that no step exceeds `max_dt` and every sample
/// lands exactly on its target time (no interpolation).
pub fn propagate_with<F>(
    f: &mut F,
    rho0: &[Complex64],
    times: &[f64],
    max_dt: f64,
) -> Result<Vec<Vec<Complex64>>, DqmeError>
where
    F: FnMut(&[Complex64], &mut [Complex64]),
{
    if !(max_dt > 0.0) {
        return Err(DqmeError::Grid(format!("step size {max_dt} must be positive")));
    }
    let mut rho = rho0.to_vec();
    let mut scratch = Rk4Scratch::new(rho.len());
    let mut t = 0.0f64;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        if target < t - 1e-12 {
            return Err(DqmeError::Grid(format!(
                "sample times must be non-decreasing and non-negative (got {target} after {t})"
            )));
        }
        let span = target - t;
        if span > 1e-12 {
            let n_steps = (span / max_dt).ceil().max(1.0) as usize;
            let h = span / n_steps as f64;
            for _ in 0..n_steps {
                rk4_step_with(f, &mut rho, h, &mut scratch);
            }
        }
        t = target;
        out.push(rho.clone());
    }
    Ok(out)
}

/// [`propagate_with`] driven by a sparse generator: ρ̇ = Lρ.
pub fn propagate_reference(
    liou: &Liouvillian,
    rho0: &[Complex64],
    times: &[f64],
    max_dt: f64,
) -> Result<Vec<Vec<Complex64>>, DqmeError> {
    if rho0.len() != liou.dim {
        return Err(DqmeError::Dimension {
            got: rho0.len(),
            want: liou.dim,
        });
    }
    let mut apply = |x: &[Complex64], y: &mut [Complex64]| {
        liou.apply(x, y).expect("dimensions checked before propagation");
    };
    propagate_with(&mut apply, rho0, times, max_dt)
}

/// An impurity coupled to a few discrete bath levels: exactly solvable on the
/// composite Fock space, and exactly representable in the embedded hierarchy.
#[derive(Debug, Clone)]
pub struct DiscreteBathInstance {
    /// Impurity level energies ε_u (one per spin-orbital).
    pub eps_sys: Vec<f64>,
    /// On-site repulsion (acts when both spin-orbitals are filled).
    pub u: f64,
    /// Bath levels as (impurity orbital, ε_k, tunneling t_k).
    pub bath: Vec<(usize, f64, f64)>,
    /// Inverse temperature of the initial bath occupation.
    pub beta: f64,
    /// Chemical potential of the initial bath occupation.
    pub mu: f64,
    /// Initial impurity density matrix, diagonal in the number basis
    /// (LSB = orbital 0), length 2^{N_S}.
    pub rho_s_diag: Vec<f64>,
}

impl DiscreteBathInstance {
    fn fermi(&self, e: f64) -> f64 {
        1.0 / (1.0 + (self.beta * (e - self.mu)).exp())
    }

    /// The finite dissipaton expansion of this bath: one level per discrete
    /// bath state, η_k^∓ = t_k²(1∓(2f_k−1))/… i.e. η⁻ = t²(1−f), η⁺ = t²f,
    /// γ_k^∓ = ±iε_k.  All levels are tagged reservoir 0.
    pub fn dissipaton_levels(&self) -> Vec<DissipatonLevel> {
        self.bath
            .iter()
            .enumerate()
            .map(|(k, &(orb, eps, t))| {
                let f = self.fermi(eps);
                DissipatonLevel {
                    reservoir: 0,
                    orbital: orb,
                    pole: k,
                    eta_minus: Complex64::new(t * t * (1.0 - f), 0.0),
                    eta_plus: Complex64::new(t * t * f, 0.0),
                    gamma_minus: Complex64::new(0.0, eps),
                    gamma_plus: Complex64::new(0.0, -eps),
                }
            })
            .collect()
    }

    pub fn impurity(&self) -> ImpurityParams {
        ImpurityParams {
            epsilon: self.eps_sys.clone(),
            u: self.u,
        }
    }

    /// Embed the initial impurity state in the hierarchy: weight on the
    /// vacuum-diagonal configurations, zero elsewhere.
    pub fn initial_tensor(&self, basis: &RdtBasis) -> Vec<Complex64> {
        let l = basis.layout;
        basis
            .states
            .iter()
            .map(|s| {
                if s.is_vacuum_diagonal(&l) {
                    Complex64::new(self.rho_s_diag[(s.0 & l.n_mask()) as usize], 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect()
    }

    /// n_u(t) for every impurity orbital at the requested times, by exact
    /// eigendecomposition of the composite Hamiltonian.  The initial state is
    /// ρ_S ⊗ Π_k diag(1−f_k, f_k) with modes Jordan–Wigner ordered impurity
    /// first.
    pub fn exact_occupations(&self, times: &[f64]) -> Vec<Vec<f64>> {
        use nalgebra::DMatrix;
        let n_s = self.eps_sys.len();
        let k = self.bath.len();
        let dim = 1usize << (n_s + k);
        let jw_sign = |state: usize, below: usize| -> f64 {
            if (state & below).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        };
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        for st in 0..dim {
            let mut e = 0.0;
            for (u, &eps) in self.eps_sys.iter().enumerate() {
                if st >> u & 1 == 1 {
                    e += eps;
                }
            }
            if n_s == 2 && st & 0b11 == 0b11 {
                e += self.u;
            }
            for (kk, &(_, eps, _)) in self.bath.iter().enumerate() {
                if st >> (n_s + kk) & 1 == 1 {
                    e += eps;
                }
            }
            h[(st, st)] = e;
            // c†_u d_k + d†_k c_u with the string between the two modes.
            for (kk, &(orb, _, t)) in self.bath.iter().enumerate() {
                let (bu, bk) = (orb, n_s + kk);
                if st >> bk & 1 == 1 && st >> bu & 1 == 0 {
                    let s1 = jw_sign(st, (1 << bk) - 1);
                    let mid = st ^ (1 << bk);
                    let s2 = jw_sign(mid, (1 << bu) - 1);
                    let out = mid | (1 << bu);
                    h[(out, st)] += t * s1 * s2;
                    h[(st, out)] += t * s1 * s2;
                }
            }
        }
        let eig = nalgebra::SymmetricEigen::new(h);
        let v = &eig.eigenvectors;
        let lam = &eig.eigenvalues;
        let w: Vec<f64> = (0..dim)
            .map(|st| {
                let mut p = self.rho_s_diag[st & ((1 << n_s) - 1)];
                for (kk, &(_, eps, _)) in self.bath.iter().enumerate() {
                    let f = self.fermi(eps);
                    p *= if st >> (n_s + kk) & 1 == 1 { f } else { 1.0 - f };
                }
                p
            })
            .collect();
        // A = Vᵀ diag(w) V evolves as A_ij e^{−i(λ_i−λ_j)t}; fold the
        // occupation projector into B_u = Vᵀ diag(occ_u) V once.
        let mut a = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                a[(i, j)] = (0..dim).map(|s| v[(s, i)] * w[s] * v[(s, j)]).sum();
            }
        }
        let b_mats: Vec<DMatrix<f64>> = (0..n_s)
            .map(|u| {
                let mut b = DMatrix::<f64>::zeros(dim, dim);
                for i in 0..dim {
                    for j in 0..dim {
                        b[(i, j)] = (0..dim)
                            .filter(|s| s >> u & 1 == 1)
                            .map(|s| v[(s, i)] * v[(s, j)])
                            .sum();
                    }
                }
                b
            })
            .collect();
        times
            .iter()
            .map(|&t| {
                b_mats
                    .iter()
                    .map(|b| {
                        let mut n = Complex64::new(0.0, 0.0);
                        for i in 0..dim {
                            for j in 0..dim {
                                let ph = Complex64::new(0.0, -(lam[i] - lam[j]) * t).exp();
                                n += b[(i, j)] * a[(i, j)] * ph;
                            }
                        }
                        debug_assert!(n.im.abs() < 1e-9);
                        n.re
                    })
                    .collect()
            })
            .collect()
    }
}
