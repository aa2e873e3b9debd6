//! Matrix assembly of `A_0` and the finite-rank `A_{n,r}`.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use super::vertex::{InteractionSpec, ResolvedVertex};
use crate::error::{Error, Result};
use crate::fock::{FockBasis, FockState, LadderKind, ModeSpace};
use crate::linalg::{CVector, HermitianEigen, SparseOperator};

/// Relative bound on `max|A - A^dag|` accepted at assembly.
pub const HERMITICITY_TOLERANCE: f64 = 1e-12;

/// Diagonal operator of free energies.
pub fn free_hamiltonian(basis: &FockBasis) -> SparseOperator {
    SparseOperator::from_diagonal(basis.energies())
}

type KernelCache = HashMap<(usize, Vec<usize>), Complex64>;

/// Expands `sum_vertices V |state>` into occupation states with amplitudes.
/// Legs act right to left, so lowering legs act first.
fn apply_vertices(
    vertices: &[ResolvedVertex],
    space: &ModeSpace,
    state: &FockState,
    cache: &mut KernelCache,
    out: &mut BTreeMap<FockState, Complex64>,
    n_max: u32,
) -> Result<()> {
    let mut modes = Vec::new();
    for (vi, v) in vertices.iter().enumerate() {
        let mut walker = Walker {
            vertex: v,
            index: vi,
            space,
            cache,
            out,
            n_max,
            modes: &mut modes,
        };
        let d = space.grid().dimension();
        walker.walk(v.legs.len(), state.clone(), 1.0, vec![0; d])?;
    }
    Ok(())
}

struct Walker<'a> {
    vertex: &'a ResolvedVertex,
    index: usize,
    space: &'a ModeSpace,
    cache: &'a mut KernelCache,
    out: &'a mut BTreeMap<FockState, Complex64>,
    n_max: u32,
    /// Modes chosen so far, from the last leg backwards.
    modes: &'a mut Vec<usize>,
}

impl Walker<'_> {
    /// `remaining` legs still to apply; `balance` is
    /// `sum(raise k) - sum(lower k)` over the legs applied so far.
    fn walk(&mut self, remaining: usize, state: FockState, factor: f64, balance: Vec<i32>) -> Result<()> {
        if remaining == 0 {
            return self.emit(state, factor);
        }
        let leg_idx = remaining - 1;
        let leg = &self.vertex.legs[leg_idx];
        let sign = if leg.kind == LadderKind::Raise { 1 } else { -1 };
        let candidates: Vec<usize> = if self.vertex.momentum_conserving && leg_idx == 0 {
            // the last leg is fixed by conservation: sign * k + balance = 0
            let k: Vec<i32> = balance.iter().map(|&b| -sign * b).collect();
            let labels = self.space.grid().labels_for(&self.space.system().particle(leg.particle).name);
            (0..labels.len())
                .filter(|&lab| leg.label.is_none_or(|l| l == lab))
                .filter_map(|lab| self.space.find(leg.particle, &k, lab).ok())
                .collect()
        } else {
            self.vertex.leg_modes(self.space, leg_idx).collect()
        };
        for m in candidates {
            let mut next = state.clone();
            let amp = match leg.kind {
                LadderKind::Raise => {
                    if next.total_quanta() >= self.n_max {
                        continue;
                    }
                    next.raise(self.space, m)
                }
                LadderKind::Lower => next.lower(self.space, m),
            };
            let Some(amp) = amp else { continue };
            let mut bal = balance.clone();
            for (b, &k) in bal.iter_mut().zip(&self.space.mode(m).momentum) {
                *b += sign * k;
            }
            self.modes.push(m);
            let r = self.walk(remaining - 1, next, factor * amp, bal);
            self.modes.pop();
            r?;
        }
        Ok(())
    }

    fn emit(&mut self, state: FockState, factor: f64) -> Result<()> {
        // `modes` holds the legs in reverse order
        let key: Vec<usize> = self.modes.iter().rev().copied().collect();
        let kernel = match self.cache.get(&(self.index, key.clone())) {
            Some(&k) => k,
            None => {
                let k = self.vertex.amplitude(self.space, &key)?;
                self.cache.insert((self.index, key), k);
                k
            }
        };
        if kernel != Complex64::default() {
            *self.out.entry(state).or_default() += kernel * factor;
        }
        Ok(())
    }
}

/// Matrix element `A_i(u, v)`, summed over every leg assignment.
pub fn interaction_matrix_element(
    spec: &InteractionSpec,
    space: &ModeSpace,
    u: &FockState,
    v: &FockState,
) -> Result<Complex64> {
    let vertices = spec.resolve(space)?;
    let mut out = BTreeMap::new();
    apply_vertices(&vertices, space, v, &mut HashMap::new(), &mut out, u32::MAX)?;
    Ok(out.get(u).copied().unwrap_or_default())
}

/// Interaction matrix `Pi_n A_i Pi_n` on the basis: columns and rows beyond
/// `rank` are never generated. `rank = basis.len()` gives the full matrix.
pub fn interaction_matrix(
    spec: &InteractionSpec,
    basis: &FockBasis,
    rank: usize,
) -> Result<SparseOperator> {
    if rank > basis.len() {
        return Err(Error::RankTooLarge {
            rank,
            basis_size: basis.len(),
        });
    }
    let space = basis.space();
    let vertices = spec.resolve(space)?;
    if vertices.is_empty() || rank == 0 {
        return Ok(SparseOperator::zeros(basis.len()));
    }
    let n_max = basis.n_max_quanta();
    let columns: Vec<Vec<(usize, Complex64)>> = (0..rank)
        .into_par_iter()
        .map_init(KernelCache::new, |cache, col| {
            let mut out = BTreeMap::new();
            apply_vertices(&vertices, space, basis.state(col), cache, &mut out, n_max)?;
            Ok(out
                .into_iter()
                .filter_map(|(s, a)| basis.index_of(&s).filter(|&r| r < rank).map(|r| (r, a)))
                .collect())
        })
        .collect::<Result<_>>()?;
    let triplets: Vec<(usize, usize, Complex64)> = columns
        .into_iter()
        .enumerate()
        .flat_map(|(c, col)| col.into_iter().map(move |(r, a)| (r, c, a)))
        .collect();
    Ok(SparseOperator::from_triplets(basis.len(), &triplets))
}

/// `A_{n,r} = A_0 + Pi_n A_i Pi_n` together with its pieces.
#[derive(Debug, Clone)]
pub struct RegularizedHamiltonian {
    pub basis: Arc<FockBasis>,
    pub a0: SparseOperator,
    /// `Pi_n A_i Pi_n`.
    pub interaction: SparseOperator,
    pub full: SparseOperator,
    pub rank: usize,
}

impl RegularizedHamiltonian {
    /// Builds from an already assembled interaction block, truncating it to
    /// the leading `rank` states. Lets one full assembly serve many ranks.
    pub fn from_interaction(
        basis: Arc<FockBasis>,
        interaction: &SparseOperator,
        rank: usize,
    ) -> Result<Self> {
        if rank > basis.len() {
            return Err(Error::RankTooLarge {
                rank,
                basis_size: basis.len(),
            });
        }
        if interaction.dim() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: interaction.dim(),
            });
        }
        let interaction = interaction.compress_leading(rank);
        let a0 = free_hamiltonian(&basis);
        let full = a0.add(&interaction);
        let defect = full.hermiticity_defect();
        if defect > HERMITICITY_TOLERANCE * full.max_abs().max(1.0) {
            return Err(Error::NonHermitian { defect });
        }
        Ok(Self {
            basis,
            a0,
            interaction,
            full,
            rank,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn energies(&self) -> &[f64] {
        self.basis.energies()
    }

    pub fn is_free(&self) -> bool {
        self.interaction.nnz() == 0
    }
}

/// Assembles `A_{n,r}` for interaction rank `n`.
pub fn assemble_regularized(
    spec: &InteractionSpec,
    basis: Arc<FockBasis>,
    rank: usize,
) -> Result<RegularizedHamiltonian> {
    let interaction = interaction_matrix(spec, &basis, rank)?;
    RegularizedHamiltonian::from_interaction(basis, &interaction, rank)
}

/// Vacuum diagnostics of an assembled Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundStateReport {
    /// `<w0|A|w0>`.
    pub vacuum_expectation: f64,
    /// `||(A - <w0|A|w0>) w0||`.
    pub vacuum_defect: f64,
    pub lowest_eigenvalue: f64,
    pub vacuum_is_eigenvector: bool,
}

/// Checks whether the free vacuum stays an eigenvector of `A_{n,r}`.
pub fn ground_state_check(
    h: &RegularizedHamiltonian,
    dense_limit: usize,
    tol: f64,
) -> Result<GroundStateReport> {
    let dim = h.dim();
    if dim > dense_limit {
        return Err(Error::DenseLimit {
            dim,
            limit: dense_limit,
        });
    }
    let mut w0 = CVector::zeros(dim);
    w0[0] = Complex64::new(1.0, 0.0);
    let hw = h.full.apply(&w0);
    let expectation = hw[0].re;
    let mut residual = hw;
    residual[0] -= expectation;
    let vacuum_defect = residual.norm();
    let eig = HermitianEigen::new(&h.full.to_dense())?;
    Ok(GroundStateReport {
        vacuum_expectation: expectation,
        vacuum_defect,
        lowest_eigenvalue: eig.values[0],
        vacuum_is_eigenvector: vacuum_defect <= tol,
    })
}
