//! Sparse assembly of the dissipaton generator.
//!
//! dρ/dt = Lρ collects four groups of terms: the impurity commutator
//! −i[H_S, ρ] (diagonal here, since H_S is density–density), the damping
//! diagonal −Σ_j (γ_j⁻ N̂_j ρ + γ_j⁺ ρ N̂_j), the coefficient-free
//! tier-lowering couplings −i[(ĉ†b̂ρ − b̂ρĉ†) + (ĉρb̂† − ρb̂†ĉ)], and the
//! η-weighted tier-raising ones −i[−η_j⁻ ĉb̂†ρ − (η_j⁺)* b̂†ρĉ
//! + η_j⁺ ĉ†ρb̂ + (η_j⁻)* ρb̂ĉ†].
//!
//! Every elementary operator is a Jordan–Wigner signed bit toggle over the
//! global mode order (n⃗, n⃗′, m⃗⁻, m⃗⁺).  What that order leaves open — which
//! dissipaton sector left multiplications address, and which extra parity
//! factors right-acting and cross-sector operators pick up — is captured by
//! [`Convention`] and fixed by the machine search in the sibling module:
//! composing parity factors is XOR on bit masks, so each choice is one mask.

use super::basis::{BasisState, BitLayout, RdtBasis};
use super::DqmeError;
use crate::bath::{ExponentialMode, Sigma};
use num_complex::Complex64;
use std::collections::HashMap;

const MINUS_I: Complex64 = Complex64::new(0.0, -1.0);

/// Field selectors for the optional parity factors a port string may carry
/// beyond its canonical segment (the occupied modes *before* the port's bit
/// within its own field).  `OWN_REST` selects the rest of the port's own
/// field -- every mode of that field except the port's own bit -- which turns
/// the canonical before-segment into the reversed after-segment.
pub mod string_extra {
    pub const N: u8 = 1;
    pub const NPRIME: u8 = 2;
    pub const MMINUS: u8 = 4;
    pub const MPLUS: u8 = 8;
    pub const OWN_REST: u8 = 16;
}

/// One resolution of the operator-ordering freedom the printed equation
/// leaves open: the parity factors each of the four operator ports
/// (left/right ĉ_u, left/right b̂_j) carries on top of its canonical
/// in-field string.  Every combination is a well-defined sparse generator;
/// only one point of the lattice represents the actual master equation, and
/// the trace, conjugation, and dynamics arbiters are what single it out.
///
/// The winner is a thermofield-double layout: ket-side operators are
/// Jordan–Wigner ordered over [n, m⁻], bra-side ones over [n′, m⁺] with the
/// dissipaton modes in reversed order, and the two sides commute.  (A gauge
/// orbit of equivalent resolutions exists — co-varying sector parities that
/// act trivially on the vacuum-diagonal block and therefore on every
/// observable — so the candidate grid is built to intersect that orbit in
/// exactly one point.)
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Convention {
    /// Extra parity fields on the left system port (ĉ_u, ĉ†_u acting on n).
    pub lc: u8,
    /// Extra parity fields on the right system port (acting on n′).
    pub rc: u8,
    /// Extra parity fields on the left dissipaton port (b̂_j, b̂†_j on m⁻).
    pub lb: u8,
    /// Extra parity fields on the right dissipaton port (on m⁺).
    pub rb: u8,
}

impl Convention {
    /// Every candidate, in a fixed enumeration order.
    pub fn candidates() -> Vec<Convention> {
        use string_extra::*;
        let mut out = Vec::new();
        for lc in [0, MMINUS, OWN_REST] {
            for rc in [0, N, MMINUS] {
                for lb in [0, N, NPRIME, N | NPRIME] {
                    for rb in [
                        OWN_REST | NPRIME,
                        OWN_REST,
                        NPRIME,
                        OWN_REST | N,
                    ] {
                        out.push(Convention { lc, rc, lb, rb });
                    }
                }
            }
        }
        out
    }
}

/// One dissipaton level j: the σ = ∓ partner modes of one bath exponential.
#[derive(Debug, Clone)]
pub struct DissipatonLevel {
    pub reservoir: usize,
    pub orbital: usize,
    pub pole: usize,
    pub eta_minus: Complex64,
    pub eta_plus: Complex64,
    pub gamma_minus: Complex64,
    pub gamma_plus: Complex64,
}

/// Group a mode list into σ-paired dissipaton levels, ordered by
/// (reservoir, orbital, pole).  Each level must contribute exactly one mode
/// of each charge.
pub fn pair_levels(modes: &[ExponentialMode]) -> Result<Vec<DissipatonLevel>, DqmeError> {
    let mut table: HashMap<(usize, usize, usize), (Option<&ExponentialMode>, Option<&ExponentialMode>)> =
        HashMap::new();
    for m in modes {
        let slot = table.entry((m.reservoir, m.orbital, m.pole)).or_default();
        let side = match m.sigma {
            Sigma::Minus => &mut slot.0,
            Sigma::Plus => &mut slot.1,
        };
        if side.is_some() {
            return Err(DqmeError::UnpairedLevel(format!(
                "duplicate σ{:?} mode at (reservoir {}, orbital {}, pole {})",
                m.sigma, m.reservoir, m.orbital, m.pole
            )));
        }
        *side = Some(m);
    }
    let mut keys: Vec<_> = table.keys().copied().collect();
    keys.sort_unstable();
    let mut levels = Vec::with_capacity(keys.len());
    for k in keys {
        let (minus, plus) = &table[&k];
        let (minus, plus) = match (minus, plus) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(DqmeError::UnpairedLevel(format!(
                    "level (reservoir {}, orbital {}, pole {}) lacks a σ partner",
                    k.0, k.1, k.2
                )))
            }
        };
        levels.push(DissipatonLevel {
            reservoir: k.0,
            orbital: k.1,
            pole: k.2,
            eta_minus: minus.eta,
            eta_plus: plus.eta,
            gamma_minus: minus.gamma,
            gamma_plus: plus.gamma,
        });
    }
    Ok(levels)
}

/// Impurity parameters in effect during one evolution phase:
/// H_S = Σ_u ε_u n̂_u + U n̂_↑ n̂_↓.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpurityParams {
    pub epsilon: Vec<f64>,
    pub u: f64,
}

impl ImpurityParams {
    /// Diagonal energy of a system bit field (offset `base` in the packed word).
    fn energy(&self, state: u64, base: usize) -> f64 {
        let mut e = 0.0;
        let mut all = true;
        for (u, eps) in self.epsilon.iter().enumerate() {
            if state >> (base + u) & 1 == 1 {
                e += eps;
            } else {
                all = false;
            }
        }
        if self.epsilon.len() == 2 && all {
            e += self.u;
        }
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyTag {
    Hamiltonian,
    Damping,
    /// Coefficient-free couplings: they consume a dissipaton.
    TierLower,
    /// η-weighted couplings: they create a dissipaton.
    TierRaise,
}

/// Sparse generator in compressed-row form.  Entries keep their term-family
/// tag and, for couplings, the reservoir that produced them; duplicate
/// (row, col) positions from different families are stored separately so the
/// tags stay exact.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    pub dim: usize,
    pub n_reservoirs: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<Complex64>,
    families: Vec<FamilyTag>,
    alphas: Vec<Option<u8>>,
    /// Per-reservoir current functionals: I_α = Σ_s w_α[s] ρ(s).
    current_rows: Vec<Vec<Complex64>>,
}

#[derive(Clone, Copy)]
enum OpKind {
    Create,
    Annihilate,
}

/// Signed toggle of one mode bit: the Jordan–Wigner sign is the parity of
/// the occupied modes selected by `parity_mask`.
#[inline]
fn apply_toggle(state: u64, bit: usize, parity_mask: u64, kind: OpKind) -> Option<(u64, f64)> {
    let occupied = state >> bit & 1 == 1;
    match kind {
        OpKind::Create if occupied => return None,
        OpKind::Annihilate if !occupied => return None,
        _ => {}
    }
    let sign = if (state & parity_mask).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    };
    Some((state ^ (1 << bit), sign))
}

#[derive(Clone, Copy)]
struct Port {
    bit: usize,
    mask: u64,
}

impl Port {
    #[inline]
    fn apply(&self, state: u64, kind: OpKind) -> Option<(u64, f64)> {
        apply_toggle(state, self.bit, self.mask, kind)
    }
}

/// Canonical in-field string plus the convention's extra parity fields.
fn port_mask(l: &BitLayout, bit: usize, own_field: u64, extra: u8) -> u64 {
    let mut m = ((1u64 << bit) - 1) & own_field;
    if extra & string_extra::N != 0 {
        m ^= l.n_mask();
    }
    if extra & string_extra::NPRIME != 0 {
        m ^= l.nprime_mask();
    }
    if extra & string_extra::MMINUS != 0 {
        m ^= l.mminus_mask();
    }
    if extra & string_extra::MPLUS != 0 {
        m ^= l.mplus_mask();
    }
    if extra & string_extra::OWN_REST != 0 {
        m ^= own_field ^ (1u64 << bit);
    }
    debug_assert_eq!(m >> bit & 1, 0, "a string never contains its own bit");
    m
}

/// The four operator ports of one dissipaton level under a convention:
/// (left ĉ, right ĉ, left b̂, right b̂), each a bit plus a parity mask.
fn level_ports(l: &BitLayout, conv: &Convention, j: usize, u: usize) -> [Port; 4] {
    [
        Port {
            bit: l.bit_n(u),
            mask: port_mask(l, l.bit_n(u), l.n_mask(), conv.lc),
        },
        Port {
            bit: l.bit_nprime(u),
            mask: port_mask(l, l.bit_nprime(u), l.nprime_mask(), conv.rc),
        },
        Port {
            bit: l.bit_mminus(j),
            mask: port_mask(l, l.bit_mminus(j), l.mminus_mask(), conv.lb),
        },
        Port {
            bit: l.bit_mplus(j),
            mask: port_mask(l, l.bit_mplus(j), l.mplus_mask(), conv.rb),
        },
    ]
}

struct Coo {
    row: u32,
    col: u32,
    val: Complex64,
    family: FamilyTag,
    alpha: Option<u8>,
}

/// Assemble the generator without running the arbiter checks (the convention
/// search needs to assemble failing candidates too).
pub(crate) fn assemble_raw(
    params: &ImpurityParams,
    levels: &[DissipatonLevel],
    basis: &RdtBasis,
    conv: &Convention,
) -> Result<Liouvillian, DqmeError> {
    let l = basis.layout;
    if levels.len() != l.n_e {
        return Err(DqmeError::ModeMismatch(format!(
            "{} dissipaton levels for a basis with N_E = {}",
            levels.len(),
            l.n_e
        )));
    }
    if params.epsilon.len() != l.n_s {
        return Err(DqmeError::ModeMismatch(format!(
            "{} level energies for N_S = {}",
            params.epsilon.len(),
            l.n_s
        )));
    }
    let n_reservoirs = levels.iter().map(|lv| lv.reservoir + 1).max().unwrap_or(0);
    for lv in levels {
        if lv.orbital >= l.n_s {
            return Err(DqmeError::ModeMismatch(format!(
                "level references orbital {} but N_S = {}",
                lv.orbital, l.n_s
            )));
        }
    }

    let ports: Vec<[Port; 4]> = levels
        .iter()
        .enumerate()
        .map(|(j, lv)| level_ports(&l, conv, j, lv.orbital))
        .collect();

    let mut coo: Vec<Coo> = Vec::new();
    let mut push = |row: u32, col: u32, val: Complex64, family: FamilyTag, alpha: Option<u8>| {
        if val.norm() >= 1e-15 {
            coo.push(Coo {
                row,
                col,
                val,
                family,
                alpha,
            });
        }
    };

    for (col, s) in basis.states.iter().enumerate() {
        let col = col as u32;
        let st = s.0;

        // −i [H_S, ρ]: diagonal energy difference between ket and bra.
        let de = params.energy(st, 0) - params.energy(st, l.n_s);
        push(col, col, MINUS_I * de, FamilyTag::Hamiltonian, None);

        // Damping: γ⁻ with the left number operator, γ⁺ with the right.
        let mut damp = Complex64::new(0.0, 0.0);
        for (j, lv) in levels.iter().enumerate() {
            if st >> ports[j][2].bit & 1 == 1 {
                damp -= lv.gamma_minus;
            }
            if st >> ports[j][3].bit & 1 == 1 {
                damp -= lv.gamma_plus;
            }
        }
        push(col, col, damp, FamilyTag::Damping, None);

        // Tier couplings.  Each term is two sequential signed toggles,
        // dissipaton port first; a missing output ordinal is the M_max
        // truncation doing its job.
        for (j, lv) in levels.iter().enumerate() {
            let [lc, rc, lb, rb] = ports[j];
            let alpha = Some(lv.reservoir as u8);
            // (coeff, dissipaton port+kind, system port+kind, family)
            let terms: [(Complex64, &Port, OpKind, &Port, OpKind, FamilyTag); 8] = [
                // ĉ† b̂ ρ
                (MINUS_I, &lb, OpKind::Annihilate, &lc, OpKind::Create, FamilyTag::TierLower),
                // − b̂ ρ ĉ†   (right ĉ† = annihilation on the bra field)
                (-MINUS_I, &lb, OpKind::Annihilate, &rc, OpKind::Annihilate, FamilyTag::TierLower),
                // ĉ ρ b̂†    (right b̂† = annihilation on its bra sector)
                (MINUS_I, &rb, OpKind::Annihilate, &lc, OpKind::Annihilate, FamilyTag::TierLower),
                // − ρ b̂† ĉ  (right ĉ = creation on the bra field)
                (-MINUS_I, &rb, OpKind::Annihilate, &rc, OpKind::Create, FamilyTag::TierLower),
                // − η⁻ ĉ b̂† ρ
                (MINUS_I * -lv.eta_minus, &lb, OpKind::Create, &lc, OpKind::Annihilate, FamilyTag::TierRaise),
                // − (η⁺)* b̂† ρ ĉ
                (MINUS_I * -lv.eta_plus.conj(), &lb, OpKind::Create, &rc, OpKind::Create, FamilyTag::TierRaise),
                // + η⁺ ĉ† ρ b̂
                (MINUS_I * lv.eta_plus, &rb, OpKind::Create, &lc, OpKind::Create, FamilyTag::TierRaise),
                // + (η⁻)* ρ b̂ ĉ†
                (MINUS_I * lv.eta_minus.conj(), &rb, OpKind::Create, &rc, OpKind::Annihilate, FamilyTag::TierRaise),
            ];
            for (coeff, p1, k1, p2, k2, family) in terms {
                let Some((s1, sg1)) = p1.apply(st, k1) else {
                    continue;
                };
                let Some((s2, sg2)) = p2.apply(s1, k2) else {
                    continue;
                };
                if let Some(row) = basis.ordinal(BasisState(s2)) {
                    push(row, col, coeff * sg1 * sg2, family, alpha);
                }
            }
        }
    }

    // COO → CSR, stable in (row, col, insertion) order.
    coo.sort_by_key(|e| (e.row, e.col));
    let dim = basis.len();
    let mut row_ptr = vec![0usize; dim + 1];
    for e in &coo {
        row_ptr[e.row as usize + 1] += 1;
    }
    for r in 0..dim {
        row_ptr[r + 1] += row_ptr[r];
    }
    let cols: Vec<u32> = coo.iter().map(|e| e.col).collect();
    let vals: Vec<Complex64> = coo.iter().map(|e| e.val).collect();
    let families: Vec<FamilyTag> = coo.iter().map(|e| e.family).collect();
    let alphas: Vec<Option<u8>> = coo.iter().map(|e| e.alpha).collect();

    // Current functionals: I_α = tr_s[N̂_sys P₀ (L_α ρ)] folds the vacuum
    // projection and occupation weight into one row vector per reservoir.
    let mut current_rows = vec![vec![Complex64::new(0.0, 0.0); dim]; n_reservoirs];
    for e in &coo {
        let Some(a) = e.alpha else { continue };
        let out = basis.states[e.row as usize];
        if out.is_vacuum_diagonal(&l) {
            let n_sys = (out.0 & l.n_mask()).count_ones() as f64;
            if n_sys > 0.0 {
                current_rows[a as usize][e.col as usize] += n_sys * e.val;
            }
        }
    }

    Ok(Liouvillian {
        dim,
        n_reservoirs,
        row_ptr,
        cols,
        vals,
        families,
        alphas,
        current_rows,
    })
}

/// Assemble the generator and enforce the two algebraic arbiters (trace-row
/// nullity and block-swap conjugation covariance) on the result.
pub fn build_liouvillian(
    params: &ImpurityParams,
    levels: &[DissipatonLevel],
    basis: &RdtBasis,
    conv: &Convention,
) -> Result<Liouvillian, DqmeError> {
    let liou = assemble_raw(params, levels, basis, conv)?;
    let tr = liou.trace_row_residual(basis);
    if tr > 1e-12 {
        return Err(DqmeError::ConventionRejected(format!(
            "trace row functional leaks: max |Σ| = {tr:.3e}"
        )));
    }
    let cj = liou.conjugation_residual(basis);
    if cj > 1e-12 {
        return Err(DqmeError::ConventionRejected(format!(
            "block-swap conjugation broken: max residual = {cj:.3e}"
        )));
    }
    Ok(liou)
}

impl Liouvillian {
    /// ρ̇ = Lρ.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) -> Result<(), DqmeError> {
        if x.len() != self.dim || y.len() != self.dim {
            return Err(DqmeError::Dimension {
                got: x.len(),
                want: self.dim,
            });
        }
        for r in 0..self.dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            y[r] = acc;
        }
        Ok(())
    }

    /// y = L^H x (conjugate transpose), the adjoint pull-back used when
    /// differentiating ‖ρ̇ − Lρ‖² with respect to ρ.
    pub fn apply_adjoint(&self, x: &[Complex64], y: &mut [Complex64]) -> Result<(), DqmeError> {
        if x.len() != self.dim || y.len() != self.dim {
            return Err(DqmeError::Dimension {
                got: x.len(),
                want: self.dim,
            });
        }
        y.fill(Complex64::new(0.0, 0.0));
        for r in 0..self.dim {
            let xr = x[r];
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.cols[k] as usize] += self.vals[k].conj() * xr;
            }
        }
        Ok(())
    }

    /// Reservoir current I_α(t) = tr_s[N̂_sys P₀ (L_α ρ)].
    pub fn current_into(&self, alpha: usize, rho: &[Complex64]) -> Result<Complex64, DqmeError> {
        let w = self
            .current_rows
            .get(alpha)
            .ok_or(DqmeError::UnknownReservoir(alpha))?;
        if rho.len() != self.dim {
            return Err(DqmeError::Dimension {
                got: rho.len(),
                want: self.dim,
            });
        }
        Ok(w.iter().zip(rho).map(|(a, b)| a * b).sum())
    }

    /// Largest column sum over the trace rows (vacuum–diagonal states);
    /// exact trace preservation means this is numerically zero.
    pub fn trace_row_residual(&self, basis: &RdtBasis) -> f64 {
        let l = basis.layout;
        let mut acc = vec![Complex64::new(0.0, 0.0); self.dim];
        for r in 0..self.dim {
            if !basis.states[r].is_vacuum_diagonal(&l) {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc[self.cols[k] as usize] += self.vals[k];
            }
        }
        acc.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest violation of L[s,s′] = φ(s) φ(s′) L*[s^T, s′^T].
    pub fn conjugation_residual(&self, basis: &RdtBasis) -> f64 {
        let mut merged: HashMap<(u32, u32), Complex64> = HashMap::new();
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                *merged
                    .entry((r as u32, self.cols[k]))
                    .or_insert(Complex64::new(0.0, 0.0)) += self.vals[k];
            }
        }
        let mut worst: f64 = 0.0;
        for (&(r, c), &v) in &merged {
            let pr = basis.partner[r as usize];
            let pc = basis.partner[c as usize];
            let ph = basis.phase[r as usize] * basis.phase[c as usize];
            let mirror = merged
                .get(&(pr, pc))
                .copied()
                .unwrap_or(Complex64::new(0.0, 0.0));
            worst = worst.max((v - ph * mirror.conj()).norm());
        }
        worst
    }

    /// Dense rendering, for small-instance oracles and debugging.
    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let mut m = vec![vec![Complex64::new(0.0, 0.0); self.dim]; self.dim];
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[r][self.cols[k] as usize] += self.vals[k];
            }
        }
        m
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Triplet dump (row, col, re, im, family, alpha) for debugging.
    pub fn export_triplets<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "row,col,re,im,family,alpha")?;
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let fam = match self.families[k] {
                    FamilyTag::Hamiltonian => "H",
                    FamilyTag::Damping => "damping",
                    FamilyTag::TierLower => "tier-lower",
                    FamilyTag::TierRaise => "tier-raise",
                };
                let alpha = self.alphas[k]
                    .map(|a| a.to_string())
                    .unwrap_or_else(|| "-".into());
                writeln!(
                    w,
                    "{},{},{:.16e},{:.16e},{},{}",
                    r, self.cols[k], self.vals[k].re, self.vals[k].im, fam, alpha
                )?;
            }
        }
        Ok(())
    }
}

/// Convenience wrapper matching the operational shape ρ̇ = Lρ.
pub fn apply_liouvillian(l: &Liouvillian, x: &[Complex64]) -> Result<Vec<Complex64>, DqmeError> {
    let mut y = vec![Complex64::new(0.0, 0.0); l.dim];
    l.apply(x, &mut y)?;
    Ok(y)
}
