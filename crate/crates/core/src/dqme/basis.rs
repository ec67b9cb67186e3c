//! Configuration-space enumeration for the reduced density tensor.
//!
//! A state s = (n⃗, n⃗′; m⃗⁻, m⃗⁺) is packed into a u64, least-significant
//! field first: system ket bits n, system bra bits n′, electron-type
//! dissipaton bits m⁻, hole-type bits m⁺.  The global fermionic mode order
//! used by every Jordan–Wigner string is exactly this field order.
//!
//! The canonical basis ordering is lexicographic on the concatenated bit
//! string read n₁, n₂, …, m⁺_{N_E} — i.e. numeric order of the bit-reversed
//! packed word — so the all-zeros state is always first and the ordering is
//! reproducible across runs and machines.

use super::DqmeError;
use sha2::{Digest, Sha256};
use std::collections::HashMap;

/// Bit-field geometry of packed states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitLayout {
    pub n_s: usize,
    pub n_e: usize,
}

impl BitLayout {
    pub fn width(&self) -> usize {
        2 * self.n_s + 2 * self.n_e
    }
    pub fn bit_n(&self, u: usize) -> usize {
        u
    }
    pub fn bit_nprime(&self, u: usize) -> usize {
        self.n_s + u
    }
    pub fn bit_mminus(&self, j: usize) -> usize {
        2 * self.n_s + j
    }
    pub fn bit_mplus(&self, j: usize) -> usize {
        2 * self.n_s + self.n_e + j
    }
    pub fn n_mask(&self) -> u64 {
        ((1u64 << self.n_s) - 1) << 0
    }
    pub fn nprime_mask(&self) -> u64 {
        ((1u64 << self.n_s) - 1) << self.n_s
    }
    pub fn mminus_mask(&self) -> u64 {
        ((1u64 << self.n_e) - 1) << (2 * self.n_s)
    }
    pub fn mplus_mask(&self) -> u64 {
        ((1u64 << self.n_e) - 1) << (2 * self.n_s + self.n_e)
    }
}

/// One packed configuration (n⃗, n⃗′; m⃗⁻, m⃗⁺).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisState(pub u64);

impl BasisState {
    pub fn n_occupied(&self, l: &BitLayout, u: usize) -> bool {
        self.0 >> l.bit_n(u) & 1 == 1
    }
    pub fn nprime_occupied(&self, l: &BitLayout, u: usize) -> bool {
        self.0 >> l.bit_nprime(u) & 1 == 1
    }
    /// M⁻ = Σ_j m⁻_j.
    pub fn m_minus(&self, l: &BitLayout) -> u32 {
        (self.0 & l.mminus_mask()).count_ones()
    }
    /// M⁺ = Σ_j m⁺_j.
    pub fn m_plus(&self, l: &BitLayout) -> u32 {
        (self.0 & l.mplus_mask()).count_ones()
    }
    /// Total dissipaton excitation M(s).
    pub fn tier(&self, l: &BitLayout) -> u32 {
        self.m_minus(l) + self.m_plus(l)
    }
    /// Vacuum–diagonal states carry the physical density matrix.
    pub fn is_vacuum_diagonal(&self, l: &BitLayout) -> bool {
        self.tier(l) == 0
            && (self.0 & l.n_mask()) == (self.0 & l.nprime_mask()) >> l.n_s
    }

    /// s^T = (n⃗′, n⃗; m⃗⁺, m⃗⁻): exchange ket and bra fields.
    pub fn block_swap(&self, l: &BitLayout) -> BasisState {
        let n = self.0 & l.n_mask();
        let np = (self.0 & l.nprime_mask()) >> l.n_s;
        let mm = (self.0 & l.mminus_mask()) >> (2 * l.n_s);
        let mp = (self.0 & l.mplus_mask()) >> (2 * l.n_s + l.n_e);
        BasisState(
            np | (n << l.n_s) | (mp << (2 * l.n_s)) | (mm << (2 * l.n_s + l.n_e)),
        )
    }

    /// Phase (−1)^{⌊M⁻/2⌋ + ⌊M⁺/2⌋} attached to the block swap.
    pub fn swap_phase(&self, l: &BitLayout) -> f64 {
        let k = self.m_minus(l) / 2 + self.m_plus(l) / 2;
        if k % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Canonical sort key: the packed word bit-reversed to width, so numeric
    /// order equals lexicographic order on (n₁, n₂, …, m⁺_{N_E}).
    pub fn sort_key(&self, l: &BitLayout) -> u64 {
        self.0.reverse_bits() >> (64 - l.width())
    }
}

/// Enumerated, ordered state space with the block-swap pairing.
#[derive(Debug, Clone)]
pub struct RdtBasis {
    pub layout: BitLayout,
    pub m_max: u32,
    /// Packed states in canonical order.
    pub states: Vec<BasisState>,
    index: HashMap<u64, u32>,
    /// Ordinal of s^T for each state.
    pub partner: Vec<u32>,
    /// Block-swap phase of each state.
    pub phase: Vec<f64>,
}

impl RdtBasis {
    pub fn len(&self) -> usize {
        self.states.len()
    }
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
    pub fn ordinal(&self, s: BasisState) -> Option<u32> {
        self.index.get(&s.0).copied()
    }

    /// Content hash covering the geometry and every packed state, for run
    /// manifests and cross-run determinism checks.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"DQME-BASIS-v1");
        h.update((self.layout.n_s as u64).to_le_bytes());
        h.update((self.layout.n_e as u64).to_le_bytes());
        h.update((self.m_max as u64).to_le_bytes());
        for s in &self.states {
            h.update(s.0.to_le_bytes());
        }
        let out = h.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn from_states(
        layout: BitLayout,
        m_max: u32,
        mut states: Vec<BasisState>,
    ) -> Result<Self, DqmeError> {
        states.sort_by_key(|s| s.sort_key(&layout));
        states.dedup();
        let index: HashMap<u64, u32> = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.0, i as u32))
            .collect();
        let mut partner = Vec::with_capacity(states.len());
        let mut phase = Vec::with_capacity(states.len());
        for s in &states {
            let p = s.block_swap(&layout);
            let ord = index.get(&p.0).copied().ok_or_else(|| {
                DqmeError::InvalidSystem(format!(
                    "basis not closed under block swap at state {:#x}",
                    s.0
                ))
            })?;
            partner.push(ord);
            phase.push(s.swap_phase(&layout));
        }
        Ok(RdtBasis {
            layout,
            m_max,
            states,
            index,
            partner,
            phase,
        })
    }
}

/// Binomial coefficient, saturating; used only for the capacity pre-check.
fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut acc: usize = 1;
    for i in 0..k.min(n - k) {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// All m⃗-field masks (over `bits` bit positions) with popcount ≤ m_max,
/// generated size by size via the next-combination bit trick.
fn tier_masks(bits: usize, m_max: u32) -> Vec<u64> {
    let mut out = vec![0u64];
    let limit = 1u64 << bits;
    for k in 1..=(m_max as usize).min(bits) {
        let mut c = (1u64 << k) - 1;
        while c < limit {
            out.push(c);
            // Gosper's hack: next word with the same popcount.
            let lsb = c & c.wrapping_neg();
            let ripple = c + lsb;
            c = ripple | (((c ^ ripple) >> 2) / lsb);
        }
    }
    out
}

/// Enumerate every state with M(s) ≤ m_max in canonical order.
///
/// `n_e` is the number of dissipaton levels j; each contributes one m⁻ and
/// one m⁺ bit.  Errors if the state count would exceed `cap`.
pub fn enumerate_basis(
    n_s: usize,
    n_e: usize,
    m_max: u32,
    cap: usize,
) -> Result<RdtBasis, DqmeError> {
    if n_s == 0 || n_s > 2 {
        return Err(DqmeError::InvalidSystem(format!(
            "n_s must be 1 or 2, got {n_s}"
        )));
    }
    let layout = BitLayout { n_s, n_e };
    if layout.width() > 62 {
        return Err(DqmeError::InvalidSystem(format!(
            "packed width {} exceeds 62 bits",
            layout.width()
        )));
    }
    let m_configs: usize = (0..=(m_max as usize).min(2 * n_e))
        .map(|k| binomial(2 * n_e, k))
        .sum();
    let count = m_configs.saturating_mul(1 << (2 * n_s));
    if count > cap {
        return Err(DqmeError::Capacity { count, cap });
    }

    let sys_states = 1u64 << (2 * n_s);
    let mut states = Vec::with_capacity(count);
    for m in tier_masks(2 * n_e, m_max) {
        for sys in 0..sys_states {
            states.push(BasisState(sys | (m << (2 * n_s))));
        }
    }
    RdtBasis::from_states(layout, m_max, states)
}

/// Structural neighbors of s: every state one tier-coupling hop away.
///
/// Each dissipaton level j (with system orbital u) exchanges one quantum
/// between a system bit and one of its dissipaton bits: the coefficient-free
/// couplings annihilate a dissipaton while toggling a system bit, the
/// η-weighted ones create one.  Signs and amplitudes are irrelevant here —
/// only which configurations touch.
fn structural_neighbors(
    s: BasisState,
    l: &BitLayout,
    levels: &[(usize, usize)],
    out: &mut Vec<BasisState>,
) {
    out.clear();
    for &(j, u) in levels {
        let (left_bit, right_bit) = (l.bit_mminus(j), l.bit_mplus(j));
        // Left-sector exchanges pair with the ket bits, right with the bra.
        for (m_bit, sys_bit, anti) in [
            (left_bit, l.bit_n(u), true),
            (left_bit, l.bit_nprime(u), false),
            (right_bit, l.bit_n(u), false),
            (right_bit, l.bit_nprime(u), true),
        ] {
            let m_occ = s.0 >> m_bit & 1 == 1;
            let s_occ = s.0 >> sys_bit & 1 == 1;
            // anti: the two bits toggle in opposite senses (1,0)↔(0,1);
            // otherwise they move together (0,0)↔(1,1).
            if (anti && m_occ != s_occ) || (!anti && m_occ == s_occ) {
                out.push(BasisState(s.0 ^ (1 << m_bit) ^ (1 << sys_bit)));
            }
        }
    }
}

/// Closure of `seeds` under the structural entries of the generator, both
/// directions, re-enumerated in canonical order.
///
/// `levels` lists (dissipaton level j, system orbital u).  The filtered
/// space is invariant under the generator by construction: tier-raising
/// hops out of it land above M_max and are truncated in assembly exactly as
/// they are for the unfiltered basis.
pub fn reachability_filter(
    basis: &RdtBasis,
    levels: &[(usize, usize)],
    seeds: &[BasisState],
) -> Result<RdtBasis, DqmeError> {
    if seeds.is_empty() {
        return Err(DqmeError::EmptySeeds);
    }
    let l = basis.layout;
    let mut keep = vec![false; basis.len()];
    let mut queue: Vec<u32> = Vec::new();
    for s in seeds {
        let ord = basis
            .ordinal(*s)
            .ok_or_else(|| DqmeError::InvalidSystem(format!("seed {:#x} not in basis", s.0)))?;
        if !keep[ord as usize] {
            keep[ord as usize] = true;
            queue.push(ord);
        }
    }
    let mut nbrs = Vec::new();
    while let Some(ord) = queue.pop() {
        let s = basis.states[ord as usize];
        structural_neighbors(s, &l, levels, &mut nbrs);
        for nb in &nbrs {
            // Neighbors above the tier cap are not in the basis; skip them.
            if let Some(o) = basis.ordinal(*nb) {
                if !keep[o as usize] {
                    keep[o as usize] = true;
                    queue.push(o);
                }
            }
        }
    }
    let states: Vec<BasisState> = basis
        .states
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(s, _)| *s)
        .collect();
    RdtBasis::from_states(l, basis.m_max, states)
}

/// The vacuum-diagonal states (m⃗ = 0, n⃗ = n⃗′): the support of every
/// number-diagonal product initial condition, and of the trace, occupation,
/// and current functionals.
pub fn vacuum_diagonal_seeds(basis: &RdtBasis) -> Vec<BasisState> {
    basis
        .states
        .iter()
        .copied()
        .filter(|s| s.is_vacuum_diagonal(&basis.layout))
        .collect()
}
