//! Occupation-number states, truncated Fock bases and ladder operators.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use super::grid::ModeSpace;
use crate::error::{Error, Result};
use crate::linalg::SparseOperator;

/// Occupation numbers indexed by global mode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FockState(Vec<u16>);

impl FockState {
    pub fn vacuum(n_modes: usize) -> Self {
        Self(vec![0; n_modes])
    }

    pub fn from_occupations(occ: Vec<u16>) -> Self {
        Self(occ)
    }

    pub fn occupations(&self) -> &[u16] {
        &self.0
    }

    pub fn occupation(&self, mode: usize) -> u16 {
        self.0[mode]
    }

    pub fn total_quanta(&self) -> u32 {
        self.0.iter().map(|&n| n as u32).sum()
    }

    pub fn is_vacuum(&self) -> bool {
        self.0.iter().all(|&n| n == 0)
    }

    /// Number of occupied fermionic modes strictly before `mode`.
    fn fermions_before(&self, space: &ModeSpace, mode: usize) -> u32 {
        self.0[..mode]
            .iter()
            .enumerate()
            .filter(|&(i, &n)| n > 0 && space.is_fermionic(i))
            .count() as u32
    }

    /// Applies the annihilator of `mode` in place and returns its matrix
    /// element, or `None` when the result is the zero vector.
    pub fn lower(&mut self, space: &ModeSpace, mode: usize) -> Option<f64> {
        let n = self.0[mode];
        if n == 0 {
            return None;
        }
        if space.is_fermionic(mode) {
            let sign = if self.fermions_before(space, mode).is_multiple_of(2) { 1.0 } else { -1.0 };
            self.0[mode] = 0;
            Some(sign)
        } else {
            self.0[mode] = n - 1;
            Some((n as f64).sqrt())
        }
    }

    /// Applies the creator of `mode` in place; `None` for Pauli-blocked fermions.
    pub fn raise(&mut self, space: &ModeSpace, mode: usize) -> Option<f64> {
        let n = self.0[mode];
        if space.is_fermionic(mode) {
            if n > 0 {
                return None;
            }
            let sign = if self.fermions_before(space, mode).is_multiple_of(2) { 1.0 } else { -1.0 };
            self.0[mode] = 1;
            Some(sign)
        } else {
            self.0[mode] = n + 1;
            Some(((n + 1) as f64).sqrt())
        }
    }

    /// Free energy `sum_modes n * mu(mode)`, summed in mode order.
    pub fn free_energy(&self, space: &ModeSpace) -> f64 {
        self.0
            .iter()
            .enumerate()
            .filter(|&(_, &n)| n > 0)
            .map(|(i, &n)| n as f64 * space.energy(i))
            .sum()
    }
}

/// Direction of a ladder operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LadderKind {
    Raise,
    Lower,
}

impl fmt::Display for LadderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LadderKind::Raise => write!(f, "raise"),
            LadderKind::Lower => write!(f, "lower"),
        }
    }
}

/// Truncation parameters for basis enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisCutoffs {
    pub n_max_quanta: u32,
    pub energy_cap: Option<f64>,
    pub hard_limit: usize,
}

impl BasisCutoffs {
    pub fn new(n_max_quanta: u32) -> Self {
        Self {
            n_max_quanta,
            energy_cap: None,
            hard_limit: 200_000,
        }
    }

    pub fn with_energy_cap(mut self, cap: f64) -> Self {
        self.energy_cap = Some(cap);
        self
    }

    pub fn with_hard_limit(mut self, limit: usize) -> Self {
        self.hard_limit = limit;
        self
    }
}

/// Energy-sorted truncated occupation basis. Index 0 is the vacuum.
#[derive(Debug, Clone)]
pub struct FockBasis {
    space: Arc<ModeSpace>,
    states: Vec<FockState>,
    index: HashMap<FockState, usize>,
    energies: Vec<f64>,
    cutoffs: BasisCutoffs,
}

/// Resolution used when comparing free energies for ordering; differences
/// below it are rounding noise between degenerate states.
const ENERGY_ORDER_RESOLUTION: f64 = 1e-9;

impl FockBasis {
    /// Enumerates every occupation state within the cutoffs and sorts by
    /// (free energy, occupation vector).
    pub fn enumerate(space: Arc<ModeSpace>, cutoffs: BasisCutoffs) -> Result<Self> {
        let required = count_states(&space, &cutoffs);
        if required > cutoffs.hard_limit {
            return Err(Error::BasisTooLarge {
                required,
                limit: cutoffs.hard_limit,
            });
        }
        let mut states = Vec::with_capacity(required);
        let mut occ = vec![0u16; space.len()];
        enumerate_rec(&space, &cutoffs, 0, 0, 0.0, &mut occ, &mut states);

        let mut keyed: Vec<(i64, FockState, f64)> = states
            .into_iter()
            .map(|s| {
                let e = s.free_energy(&space);
                ((e / ENERGY_ORDER_RESOLUTION).round() as i64, s, e)
            })
            .collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));

        let energies: Vec<f64> = keyed.iter().map(|k| k.2).collect();
        let states: Vec<FockState> = keyed.into_iter().map(|k| k.1).collect();
        let index = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        Ok(Self {
            space,
            states,
            index,
            energies,
            cutoffs,
        })
    }

    pub fn space(&self) -> &ModeSpace {
        &self.space
    }

    pub fn space_arc(&self) -> Arc<ModeSpace> {
        Arc::clone(&self.space)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn cutoffs(&self) -> &BasisCutoffs {
        &self.cutoffs
    }

    pub fn n_max_quanta(&self) -> u32 {
        self.cutoffs.n_max_quanta
    }

    pub fn states(&self) -> &[FockState] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &FockState {
        &self.states[i]
    }

    pub fn index_of(&self, state: &FockState) -> Option<usize> {
        self.index.get(state).copied()
    }

    pub fn energy(&self, i: usize) -> f64 {
        self.energies[i]
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Basis state built from `(mode, occupation)` pairs.
    pub fn state_from_modes(&self, occupied: &[(usize, u16)]) -> FockState {
        let mut occ = vec![0u16; self.space.len()];
        for &(m, n) in occupied {
            occ[m] += n;
        }
        FockState(occ)
    }

    /// e.g. `|phi[0]^2 phi[1]>`, `|0>` for the vacuum.
    pub fn describe(&self, i: usize) -> String {
        let s = &self.states[i];
        if s.is_vacuum() {
            return "|0>".into();
        }
        let parts: Vec<String> = s
            .0
            .iter()
            .enumerate()
            .filter(|&(_, &n)| n > 0)
            .map(|(m, &n)| {
                let name = self.space.describe(m);
                if n == 1 {
                    name
                } else {
                    format!("{name}^{n}")
                }
            })
            .collect();
        format!("|{}>", parts.join(" "))
    }

    /// Matrix of a single ladder operator on this basis. Transitions leaving
    /// the basis are dropped.
    pub fn ladder_matrix(&self, mode: usize, kind: LadderKind) -> Result<SparseOperator> {
        if mode >= self.space.len() {
            return Err(Error::InvalidArgument(format!(
                "mode index {mode} out of range ({} modes)",
                self.space.len()
            )));
        }
        let mut triplets = Vec::new();
        for (col, state) in self.states.iter().enumerate() {
            let mut out = state.clone();
            let amp = match kind {
                LadderKind::Raise => out.raise(&self.space, mode),
                LadderKind::Lower => out.lower(&self.space, mode),
            };
            if let Some(amp) = amp {
                if let Some(row) = self.index_of(&out) {
                    triplets.push((row, col, Complex64::new(amp, 0.0)));
                }
            }
        }
        Ok(SparseOperator::from_triplets(self.len(), &triplets))
    }

    /// Ladder matrix addressed by particle name, momentum index and label.
    pub fn ladder_matrix_for(
        &self,
        particle: &str,
        momentum: &[i32],
        label: usize,
        kind: LadderKind,
    ) -> Result<SparseOperator> {
        let pid = self.space.system().id(particle)?;
        let mode = self.space.find(pid, momentum, label)?;
        self.ladder_matrix(mode, kind)
    }
}

fn energy_allowed(cutoffs: &BasisCutoffs, e: f64) -> bool {
    match cutoffs.energy_cap {
        Some(cap) => e <= cap + 1e-12 * cap.abs().max(1.0),
        None => true,
    }
}

fn enumerate_rec(
    space: &ModeSpace,
    cutoffs: &BasisCutoffs,
    mode: usize,
    quanta: u32,
    energy: f64,
    occ: &mut Vec<u16>,
    out: &mut Vec<FockState>,
) {
    if mode == space.len() {
        out.push(FockState(occ.clone()));
        return;
    }
    let remaining = cutoffs.n_max_quanta - quanta;
    let max_here = if space.is_fermionic(mode) { remaining.min(1) } else { remaining };
    for n in 0..=max_here {
        let e = energy + n as f64 * space.energy(mode);
        if n > 0 && !energy_allowed(cutoffs, e) {
            break;
        }
        occ[mode] = n as u16;
        enumerate_rec(space, cutoffs, mode + 1, quanta + n, e, occ, out);
    }
    occ[mode] = 0;
}

/// Exact number of states within the cutoffs, saturating at `usize::MAX`.
fn count_states(space: &ModeSpace, cutoffs: &BasisCutoffs) -> usize {
    if cutoffs.energy_cap.is_none() {
        // generating polynomial in the total quanta
        let nmax = cutoffs.n_max_quanta as usize;
        let mut poly = vec![0u128; nmax + 1];
        poly[0] = 1;
        for m in 0..space.len() {
            let max_occ = if space.is_fermionic(m) { 1 } else { nmax };
            let mut next = vec![0u128; nmax + 1];
            for (q, &c) in poly.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                for n in 0..=max_occ.min(nmax - q) {
                    next[q + n] = next[q + n].saturating_add(c);
                }
            }
            poly = next;
        }
        let total = poly.iter().fold(0u128, |a, &c| a.saturating_add(c));
        return usize::try_from(total).unwrap_or(usize::MAX);
    }
    fn rec(space: &ModeSpace, cutoffs: &BasisCutoffs, mode: usize, quanta: u32, energy: f64) -> usize {
        if mode == space.len() {
            return 1;
        }
        let remaining = cutoffs.n_max_quanta - quanta;
        let max_here = if space.is_fermionic(mode) { remaining.min(1) } else { remaining };
        let mut total = 0usize;
        for n in 0..=max_here {
            let e = energy + n as f64 * space.energy(mode);
            if n > 0 && !energy_allowed(cutoffs, e) {
                break;
            }
            total = total.saturating_add(rec(space, cutoffs, mode + 1, quanta + n, e));
        }
        total
    }
    rec(space, cutoffs, 0, 0, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::grid::ModeGrid;
    use crate::fock::particles::{ParticleSpec, ParticleSystem, Statistics};

    fn space(stat: Statistics, mass: f64, cutoff: f64) -> Arc<ModeSpace> {
        let sys = ParticleSystem::new(&[ParticleSpec::new("p", stat, mass, "p")]).unwrap();
        Arc::new(ModeSpace::new(sys, ModeGrid::new(1, cutoff, 1.0).unwrap()).unwrap())
    }

    #[test]
    fn boson_single_mode_counts() {
        let s = space(Statistics::Boson, 1.0, 0.5);
        let b = FockBasis::enumerate(s, BasisCutoffs::new(2)).unwrap();
        assert_eq!(b.len(), 3);
        assert!(b.state(0).is_vacuum());
        assert_eq!(b.describe(2), "|p[0]^2>");
    }

    #[test]
    fn fermion_two_modes_counts() {
        // modes k = 0, -1, 1: restrict to two modes with an energy cap
        let sys = ParticleSystem::new(&[ParticleSpec::new("f", Statistics::Fermion, 1.0, "f")])
            .unwrap();
        let grid = ModeGrid::new(1, 0.5, 1.0)
            .unwrap()
            .with_internal_labels("f", vec!["up".into(), "down".into()])
            .unwrap();
        let s = Arc::new(ModeSpace::new(sys, grid).unwrap());
        let b = FockBasis::enumerate(s, BasisCutoffs::new(2)).unwrap();
        assert_eq!(b.len(), 4);
    }

    #[test]
    fn stars_and_bars_three_modes() {
        let s = space(Statistics::Boson, 1.0, 1.0);
        let b = FockBasis::enumerate(s, BasisCutoffs::new(3)).unwrap();
        assert_eq!(b.len(), 20);
    }

    #[test]
    fn hard_limit_reports_required_size() {
        let s = space(Statistics::Boson, 1.0, 1.0);
        let err = FockBasis::enumerate(s.clone(), BasisCutoffs::new(3).with_hard_limit(10)).unwrap_err();
        match err {
            Error::BasisTooLarge { required, limit } => {
                assert_eq!((required, limit), (20, 10));
            }
            other => panic!("unexpected {other}"),
        }
        let err = FockBasis::enumerate(
            s,
            BasisCutoffs::new(3).with_energy_cap(2.5).with_hard_limit(3),
        )
        .unwrap_err();
        assert!(matches!(err, Error::BasisTooLarge { required: 7, .. }), "{err}");
    }

    #[test]
    fn energy_cap_and_ordering() {
        let s = space(Statistics::Boson, 1.0, 1.0);
        let b = FockBasis::enumerate(s, BasisCutoffs::new(3).with_energy_cap(2.5)).unwrap();
        // 0, 1, sqrt2 x2, 2, 1+sqrt2 x2
        assert_eq!(b.len(), 7);
        assert!(b.energies().windows(2).all(|w| w[0] <= w[1] + 1e-12));
        assert_eq!(b.energy(0), 0.0);
        for (i, s) in b.states().iter().enumerate() {
            assert_eq!(b.index_of(s), Some(i));
        }
    }

    #[test]
    fn boson_raise_normalization() {
        let s = space(Statistics::Boson, 1.0, 0.5);
        let b = FockBasis::enumerate(s, BasisCutoffs::new(2)).unwrap();
        let up = b.ladder_matrix(0, LadderKind::Raise).unwrap();
        assert!((up.get(2, 1).re - 2f64.sqrt()).abs() < 1e-15);
        // raising out of the truncation gives zero
        assert_eq!(up.entries().filter(|&(_, c, _)| c == 2).count(), 0);
        assert!(b.ladder_matrix(3, LadderKind::Raise).is_err());
    }

    #[test]
    fn pauli_blocking() {
        let s = space(Statistics::Fermion, 1.0, 0.5);
        let mut st = FockState::from_occupations(vec![1]);
        assert_eq!(st.raise(&s, 0), None);
        assert_eq!(st.lower(&s, 0), Some(1.0));
        assert!(st.is_vacuum());
    }
}
