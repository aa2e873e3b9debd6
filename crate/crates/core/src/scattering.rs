//! Moller wave operators, range projections and the scattering operator.
//!
//! A finite truncated space has pure point spectrum, so the strong limits
//! `t -> -inf` / `t -> +inf` do not exist literally. Two surrogates are
//! provided: a plateau of `exp(iHt) exp(-iA_0 t) P_ac` along a time grid
//! before recurrences set in, and Abel damping `eps * int exp(-eps s) ... ds`
//! extrapolated to `eps -> 0`. The vacuum column is always the vacuum.

use std::collections::VecDeque;
use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::Propagator;
use crate::fock::FockBasis;
use crate::hamiltonian::RegularizedHamiltonian;
use crate::linalg::{gauss_legendre, max_abs, CMatrix, CVector, SparseOperator, ONE, ZERO};

/// `W_+` uses `t -> -inf`, `W_-` uses `t -> +inf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Plus,
    Minus,
}

impl Direction {
    /// Sign of the physical time in `Omega(t)`.
    pub fn time_sign(self) -> f64 {
        match self {
            Direction::Plus => -1.0,
            Direction::Minus => 1.0,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Plus => "W+",
            Direction::Minus => "W-",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaveMethod {
    TimePlateau,
    Adiabatic,
}

impl fmt::Display for WaveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WaveMethod::TimePlateau => "time-plateau",
            WaveMethod::Adiabatic => "adiabatic",
        })
    }
}

/// `P_ac = I - |w0><w0|`.
pub fn ac_projection(basis: &FockBasis) -> SparseOperator {
    let mut diag = vec![1.0; basis.len()];
    if !diag.is_empty() {
        diag[0] = 0.0;
    }
    SparseOperator::from_diagonal(&diag)
}

/// `exp(iHt) exp(-iA_0 t) P_ac v` for an arbitrary vector.
pub fn omega_apply(prop: &Propagator, energies: &[f64], v: &CVector, t: f64) -> Result<CVector> {
    let mut x = crate::linalg::phase_evolve(energies, v, t);
    x[0] = ZERO;
    prop.evolve(&x, -t)
}

/// One wave operator, restricted to a set of basis columns.
#[derive(Debug, Clone)]
pub struct WaveOperatorResult {
    pub direction: Direction,
    pub method: WaveMethod,
    /// Basis indices of the computed columns, ascending.
    pub columns: Vec<usize>,
    /// `dim x columns.len()`; column `j` is `W u_{columns[j]}`.
    pub matrix: CMatrix,
    /// Plateau time `T` (time-plateau method).
    pub plateau_time: Option<f64>,
    /// Damping values used (adiabatic method).
    pub damping_sequence: Vec<f64>,
    pub converged: bool,
    pub recurrence_detected: bool,
    /// `(|t|, max windowed column drift)` per grid point, or
    /// `(eps, max|W(eps) - W(previous eps)|)` for the adiabatic method.
    pub drift_history: Vec<(f64, f64)>,
    /// Adiabatic only: disagreement between extrapolation estimates.
    pub extrapolation_disagreement: Option<f64>,
    /// `max |(W^dag W - I) P_ac|` over the computed columns.
    pub isometry_defect: f64,
    /// `max |(H W - W A_0) P_ac|` over the computed columns.
    pub intertwining_defect: f64,
    /// Intertwining defect of the iterate at half the plateau time.
    pub half_time_intertwining_defect: Option<f64>,
}

impl WaveOperatorResult {
    /// Whether every basis state has a column.
    pub fn is_complete(&self) -> bool {
        self.columns.len() == self.matrix.nrows()
    }

    /// Local position of basis state `u` among the columns.
    pub fn column_of(&self, u: usize) -> Option<usize> {
        self.columns.binary_search(&u).ok()
    }

    /// Zero operator check helper for reports: the dense square matrix when complete.
    pub fn square(&self) -> Option<&CMatrix> {
        self.is_complete().then_some(&self.matrix)
    }
}

/// Options of the time-plateau surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauOptions {
    /// Increasing positive times `|t|`.
    pub time_grid: Vec<f64>,
    /// Number of trailing grid points compared for drift.
    pub window: usize,
    pub tol: f64,
    /// Basis columns to compute; `None` means all.
    pub columns: Option<Vec<usize>>,
}

impl PlateauOptions {
    pub fn new(time_grid: Vec<f64>, window: usize, tol: f64) -> Self {
        Self {
            time_grid,
            window,
            tol,
            columns: None,
        }
    }

    /// `count` evenly spaced times `step, 2 step, ...`.
    pub fn uniform(step: f64, count: usize, window: usize, tol: f64) -> Self {
        Self::new((1..=count).map(|k| k as f64 * step).collect(), window, tol)
    }
}

fn resolve_columns(requested: &Option<Vec<usize>>, dim: usize) -> Result<Vec<usize>> {
    let mut cols = match requested {
        None => (0..dim).collect::<Vec<_>>(),
        Some(c) => c.clone(),
    };
    cols.sort_unstable();
    cols.dedup();
    if let Some(&bad) = cols.iter().find(|&&c| c >= dim) {
        return Err(Error::InvalidArgument(format!(
            "column {bad} outside basis of size {dim}"
        )));
    }
    Ok(cols)
}

fn check_propagator(h: &RegularizedHamiltonian, prop: &Propagator) -> Result<()> {
    if prop.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            got: prop.dim(),
        });
    }
    Ok(())
}

fn unit(dim: usize, i: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[i] = ONE;
    v
}

/// Columnwise `Omega(t) u`, stepped incrementally: for a free eigenvector
/// `u`, `Omega(t_k) u = exp(-i E_u dt) exp(iH dt) Omega(t_{k-1}) u`.
fn advance_columns(
    prop: &Propagator,
    energies: &[f64],
    columns: &[usize],
    current: &[CVector],
    dt: f64,
    free: bool,
) -> Result<Vec<CVector>> {
    columns
        .par_iter()
        .zip(current.par_iter())
        .map(|(&u, x)| {
            // without interaction Omega(t) = P_ac exactly
            if u == 0 || free {
                return Ok(x.clone());
            }
            let y = prop.evolve(x, -dt)?;
            Ok(y * Complex64::from_polar(1.0, -energies[u] * dt))
        })
        .collect()
}

fn assemble(dim: usize, columns: &[usize], vecs: &[CVector]) -> CMatrix {
    let mut m = CMatrix::zeros(dim, columns.len());
    for (j, (&u, v)) in columns.iter().zip(vecs).enumerate() {
        if u == 0 {
            m[(0, j)] = ONE;
        } else {
            m.set_column(j, v);
        }
    }
    m
}

/// Time-plateau wave operator: steps `Omega(t)` along the grid and stops at
/// the first grid time whose trailing window of iterates differs by less
/// than `tol` in every column.
pub fn wave_operator_time_plateau(
    h: &RegularizedHamiltonian,
    prop: &Propagator,
    direction: Direction,
    opts: &PlateauOptions,
) -> Result<WaveOperatorResult> {
    check_propagator(h, prop)?;
    if opts.time_grid.is_empty() {
        return Err(Error::InvalidArgument("time grid is empty".into()));
    }
    if opts.window < 2 {
        return Err(Error::InvalidArgument("plateau window must be at least 2".into()));
    }
    if opts.time_grid.windows(2).any(|w| w[1] <= w[0]) || opts.time_grid[0] <= 0.0 {
        return Err(Error::InvalidArgument(
            "time grid must be positive and strictly increasing".into(),
        ));
    }
    if opts.tol <= 0.0 {
        return Err(Error::InvalidArgument("plateau tolerance must be positive".into()));
    }
    let dim = h.dim();
    let energies = h.energies();
    let columns = resolve_columns(&opts.columns, dim)?;
    let sign = direction.time_sign();

    // Omega(0) = P_ac
    let mut current: Vec<CVector> = columns
        .iter()
        .map(|&u| if u == 0 { CVector::zeros(dim) } else { unit(dim, u) })
        .collect();
    let mut history: VecDeque<(f64, Vec<CVector>)> = VecDeque::new();
    let mut drift_history = Vec::new();
    let mut previous_t = 0.0;
    let mut best: Option<(f64, f64, Vec<CVector>)> = None;
    let mut min_drift = f64::INFINITY;
    let mut recurrence = false;
    let mut plateau = None;
    // kept for the half-time diagnostic
    let mut trajectory: Vec<(f64, Vec<CVector>)> = Vec::new();

    for &tau in &opts.time_grid {
        let dt = sign * (tau - previous_t);
        current = advance_columns(prop, energies, &columns, &current, dt, h.is_free())?;
        previous_t = tau;
        history.push_back((tau, current.clone()));
        trajectory.push((tau, current.clone()));
        if history.len() > opts.window {
            history.pop_front();
        }
        if history.len() < opts.window {
            continue;
        }
        let last = &history.back().unwrap().1;
        let drift = history
            .iter()
            .flat_map(|(_, vs)| vs.iter().zip(last).map(|(a, b)| (a - b).norm()))
            .fold(0.0, f64::max);
        drift_history.push((tau, drift));
        if drift < min_drift {
            min_drift = drift;
        } else if drift > 10.0 * min_drift && min_drift < drift_history[0].1 {
            recurrence = true;
        }
        if best.as_ref().is_none_or(|b| drift < b.1) {
            best = Some((tau, drift, current.clone()));
        }
        if drift < opts.tol {
            plateau = Some(tau);
            break;
        }
    }

    let (t_final, final_vecs) = match (plateau, best) {
        (Some(t), _) => (t, current),
        (None, Some((t, _, v))) => (t, v),
        // grid shorter than the window: last iterate, flagged unconverged
        (None, None) => (previous_t, current),
    };
    let matrix = assemble(dim, &columns, &final_vecs);
    let half = trajectory
        .iter()
        .min_by(|a, b| (a.0 - 0.5 * t_final).abs().total_cmp(&(b.0 - 0.5 * t_final).abs()))
        .map(|(_, v)| intertwining_defect_of(h, &columns, &assemble(dim, &columns, v)));
    let mut result = WaveOperatorResult {
        direction,
        method: WaveMethod::TimePlateau,
        columns,
        matrix,
        plateau_time: Some(t_final),
        damping_sequence: Vec::new(),
        converged: plateau.is_some(),
        recurrence_detected: recurrence,
        drift_history,
        extrapolation_disagreement: None,
        isometry_defect: 0.0,
        intertwining_defect: 0.0,
        half_time_intertwining_defect: half,
    };
    finish_diagnostics(h, &mut result);
    Ok(result)
}

/// Options of the adiabatic surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct AdiabaticOptions {
    /// Strictly decreasing damping values.
    pub eps_sequence: Vec<f64>,
    /// Quadrature accuracy per column and threshold for the extrapolation flag.
    pub tol: f64,
    pub columns: Option<Vec<usize>>,
}

impl AdiabaticOptions {
    pub fn new(eps_sequence: Vec<f64>, tol: f64) -> Self {
        Self {
            eps_sequence,
            tol,
            columns: None,
        }
    }
}

/// `eps * int_0^inf exp(-eps s) exp(i omega s) ds` by composite
/// Gauss-Legendre, each scalar `omega` integrated separately. Panels keep
/// the phase advance per panel below pi; the tail beyond `X/eps` is below
/// `exp(-X)`.
struct AbelQuadrature {
    /// `(s, weight)` with `eps * exp(-eps s)` folded into the weight.
    nodes: Vec<(f64, f64)>,
}

impl AbelQuadrature {
    fn new(eps: f64, max_rate: f64, tail: f64, per_panel: usize) -> Self {
        let s_max = tail / eps;
        let panel = std::f64::consts::PI / max_rate.max(eps);
        let panels = (s_max / panel).ceil().max(1.0) as usize;
        let width = s_max / panels as f64;
        let (x, w) = gauss_legendre(per_panel);
        let mut nodes = Vec::with_capacity(panels * per_panel);
        for p in 0..panels {
            let a = p as f64 * width;
            for (&xi, &wi) in x.iter().zip(&w) {
                let s = a + 0.5 * width * (xi + 1.0);
                nodes.push((s, 0.5 * width * wi * eps * (-eps * s).exp()));
            }
        }
        Self { nodes }
    }

    fn integrate(&self, omega: f64) -> Complex64 {
        self.nodes
            .iter()
            .map(|&(s, w)| Complex64::from_polar(w, omega * s))
            .sum()
    }
}

/// Adiabatic wave operator `W(eps) = eps int_0^inf exp(-eps s) Omega(-+s) ds`,
/// Richardson-extrapolated to `eps -> 0` from the last two damping values.
///
/// Uses the eigendecomposition cached in `prop`, so the dimension must be
/// within its dense limit. In eigen-coordinates the integrand of column
/// `u` is a sum of scalar exponentials `exp(i (s_sign)(E_u - lambda_j) s)`.
pub fn wave_operator_adiabatic(
    h: &RegularizedHamiltonian,
    prop: &Propagator,
    direction: Direction,
    opts: &AdiabaticOptions,
) -> Result<WaveOperatorResult> {
    check_propagator(h, prop)?;
    let eps = &opts.eps_sequence;
    if eps.is_empty() || eps.iter().any(|&e| e <= 0.0 || !e.is_finite()) {
        return Err(Error::InvalidArgument("damping values must be positive".into()));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("damping values must be decreasing".into()));
    }
    let dim = h.dim();
    let energies = h.energies();
    let columns = resolve_columns(&opts.columns, dim)?;
    let eig = prop.eigen()?;
    let lambda = &eig.values;
    let vecs = &eig.vectors;
    // Omega(t) with t = sign * s
    let sign = direction.time_sign();
    let tail = (1.0 / opts.tol).ln() + 3.0;

    let per_eps: Vec<CMatrix> = eps
        .iter()
        .map(|&e| -> Result<CMatrix> {
            let cols: Vec<CVector> = columns
                .par_iter()
                .map(|&u| -> Result<CVector> {
                    if u == 0 {
                        return Ok(unit(dim, 0));
                    }
                    // Omega(t) u = sum_j V[:,j] conj(V[u,j]) exp(i (lambda_j - E_u) t)
                    let rate = lambda
                        .iter()
                        .map(|&l| (l - energies[u]).abs())
                        .fold(0.0, f64::max);
                    let coarse = AbelQuadrature::new(e, rate, tail, 16);
                    let fine = AbelQuadrature::new(e, rate, tail, 24);
                    let mut coeff = CVector::zeros(dim);
                    let mut worst = 0.0f64;
                    for j in 0..dim {
                        let omega = sign * (lambda[j] - energies[u]);
                        let a = fine.integrate(omega);
                        worst = worst.max((a - coarse.integrate(omega)).norm());
                        coeff[j] = vecs[(u, j)].conj() * a;
                    }
                    if worst > opts.tol {
                        return Err(Error::Quadrature(format!(
                            "Abel integral for column {u} at eps {e}: node refinement changed it by {worst:e}"
                        )));
                    }
                    Ok(vecs * coeff)
                })
                .collect::<Result<_>>()?;
            Ok(assemble(dim, &columns, &cols))
        })
        .collect::<Result<_>>()?;

    let richardson = |i: usize, j: usize| -> CMatrix {
        let (e1, e2) = (eps[i], eps[j]);
        (&per_eps[j] * Complex64::new(e1, 0.0) - &per_eps[i] * Complex64::new(e2, 0.0))
            / Complex64::new(e1 - e2, 0.0)
    };
    let n = eps.len();
    let (matrix, disagreement) = if n >= 3 {
        let last = richardson(n - 2, n - 1);
        let prev = richardson(n - 3, n - 2);
        let d = max_abs(&(&last - &prev));
        (last, Some(d))
    } else if n == 2 {
        let last = richardson(0, 1);
        let d = max_abs(&(&last - &per_eps[1]));
        (last, Some(d))
    } else {
        (per_eps[0].clone(), None)
    };
    let mut matrix = matrix;
    if let Some(j) = columns.iter().position(|&u| u == 0) {
        matrix.set_column(j, &unit(dim, 0));
    }
    let drift_history = (1..n)
        .map(|k| (eps[k], max_abs(&(&per_eps[k] - &per_eps[k - 1]))))
        .collect();
    let converged = disagreement.is_none_or(|d| d <= opts.tol);
    let mut result = WaveOperatorResult {
        direction,
        method: WaveMethod::Adiabatic,
        columns,
        matrix,
        plateau_time: None,
        damping_sequence: eps.clone(),
        converged,
        recurrence_detected: false,
        drift_history,
        extrapolation_disagreement: disagreement,
        isometry_defect: 0.0,
        intertwining_defect: 0.0,
        half_time_intertwining_defect: None,
    };
    finish_diagnostics(h, &mut result);
    Ok(result)
}

fn finish_diagnostics(h: &RegularizedHamiltonian, w: &mut WaveOperatorResult) {
    w.isometry_defect = isometry_defect_of(&w.columns, &w.matrix);
    w.intertwining_defect = intertwining_defect_of(h, &w.columns, &w.matrix);
}

fn isometry_defect_of(columns: &[usize], m: &CMatrix) -> f64 {
    let gram = m.adjoint() * m;
    let mut worst = 0.0f64;
    for (j, &v) in columns.iter().enumerate() {
        if v == 0 {
            continue;
        }
        for (i, &u) in columns.iter().enumerate() {
            let target = if u == v { ONE } else { ZERO };
            worst = worst.max((gram[(i, j)] - target).norm());
        }
    }
    worst
}

fn intertwining_defect_of(h: &RegularizedHamiltonian, columns: &[usize], m: &CMatrix) -> f64 {
    let energies = h.energies();
    let mut worst = 0.0f64;
    for (j, &u) in columns.iter().enumerate() {
        if u == 0 {
            continue;
        }
        let col: CVector = m.column(j).into_owned();
        let hw = h.full.apply(&col);
        let d = hw - col * Complex64::new(energies[u], 0.0);
        worst = worst.max(d.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    worst
}

/// `max |(A W - W A_0) P_ac|` for a computed wave operator.
pub fn intertwining_defect(h: &RegularizedHamiltonian, w: &WaveOperatorResult) -> f64 {
    intertwining_defect_of(h, &w.columns, &w.matrix)
}

/// Orthogonal projection onto the span of the computed columns.
#[derive(Debug, Clone)]
pub struct RangeProjection {
    pub projector: SparseOperator,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    /// Numerical rank below the number of columns.
    pub rank_deficient: bool,
    /// Orthonormal basis of the range (columns).
    pub basis: CMatrix,
}

/// Projection onto `Ran W` from a singular value decomposition; singular
/// values below `rank_tol * s_max` are discarded.
pub fn range_projection(w: &WaveOperatorResult, rank_tol: f64) -> Result<RangeProjection> {
    let dim = w.matrix.nrows();
    let svd = w.matrix.clone().svd(true, false);
    let u = svd
        .u
        .ok_or_else(|| Error::Eigensolve("singular value decomposition failed".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let smax = singular_values.first().copied().unwrap_or(0.0);
    let rank = singular_values.iter().filter(|&&s| s > rank_tol * smax).count();
    let mut basis = CMatrix::zeros(dim, rank);
    for (dst, &src) in order.iter().take(rank).enumerate() {
        basis.set_column(dst, &u.column(src));
    }
    let p = &basis * basis.adjoint();
    Ok(RangeProjection {
        projector: SparseOperator::from_dense(&p, 0.0),
        rank,
        singular_values,
        rank_deficient: rank < w.columns.len(),
        basis,
    })
}

/// Principal angles (radians, ascending) between two ranges.
pub fn principal_angles(a: &RangeProjection, b: &RangeProjection) -> Vec<f64> {
    if a.rank == 0 || b.rank == 0 {
        return Vec::new();
    }
    let m = a.basis.adjoint() * &b.basis;
    let mut cosines: Vec<f64> = m.singular_values().iter().map(|&c| c.min(1.0)).collect();
    cosines.sort_by(|x, y| y.total_cmp(x));
    cosines.iter().map(|c| c.acos()).collect()
}

/// `S = W_-^dag W_+` with diagnostics.
#[derive(Debug, Clone)]
pub struct ScatteringReport {
    /// Rows are `W_-` columns (out states), columns are `W_+` columns (in states).
    pub s_matrix: CMatrix,
    pub out_states: Vec<usize>,
    pub in_states: Vec<usize>,
    /// `max |S^dag S - I|` on the AC block; `None` unless both wave operators are complete.
    pub unitarity_defect: Option<f64>,
    pub vacuum_persistence: Complex64,
    /// `(in, out, |<out|S|in>|^2)`, in row-major order.
    pub channel_probabilities: Vec<(usize, usize, f64)>,
    pub warnings: Vec<String>,
}

/// Builds `S` from both wave operators.
pub fn scattering_operator(
    wp: &WaveOperatorResult,
    wm: &WaveOperatorResult,
) -> Result<ScatteringReport> {
    if wp.matrix.nrows() != wm.matrix.nrows() {
        return Err(Error::DimensionMismatch {
            expected: wp.matrix.nrows(),
            got: wm.matrix.nrows(),
        });
    }
    if wp.direction != Direction::Plus || wm.direction != Direction::Minus {
        return Err(Error::InvalidArgument(
            "scattering operator needs W+ first and W- second".into(),
        ));
    }
    let mut warnings = Vec::new();
    if wp.method != wm.method {
        warnings.push(format!(
            "wave operators use different methods ({} and {})",
            wp.method, wm.method
        ));
    }
    if !wp.converged || !wm.converged {
        warnings.push("at least one wave operator did not converge".into());
    }
    let mut s = wm.matrix.adjoint() * &wp.matrix;
    // definitional vacuum extension
    for (i, &out) in wm.columns.iter().enumerate() {
        for (j, &inn) in wp.columns.iter().enumerate() {
            if out == 0 || inn == 0 {
                s[(i, j)] = if out == inn { ONE } else { ZERO };
            }
        }
    }
    let vacuum_persistence = match (wm.column_of(0), wp.column_of(0)) {
        (Some(i), Some(j)) => s[(i, j)],
        _ => ONE,
    };
    let unitarity_defect = (wp.is_complete() && wm.is_complete()).then(|| {
        let n = s.ncols();
        let ac = s.view((1, 1), (n - 1, n - 1)).into_owned();
        let g = ac.adjoint() * &ac;
        max_abs(&(g - CMatrix::identity(n - 1, n - 1)))
    });
    let mut channel_probabilities = Vec::new();
    for (i, &out) in wm.columns.iter().enumerate() {
        for (j, &inn) in wp.columns.iter().enumerate() {
            channel_probabilities.push((inn, out, s[(i, j)].norm_sqr()));
        }
    }
    Ok(ScatteringReport {
        s_matrix: s,
        out_states: wm.columns.clone(),
        in_states: wp.columns.clone(),
        unitarity_defect,
        vacuum_persistence,
        channel_probabilities,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::fock::{BasisCutoffs, ModeGrid, ModeSpace, ParticleSpec, ParticleSystem, Statistics};
    use crate::hamiltonian::{assemble_regularized, InteractionSpec, Kernel, Leg, Term, Vertex};
    use crate::evolution::Method;

    fn phi_basis() -> Arc<FockBasis> {
        let sys = ParticleSystem::new(&[ParticleSpec::new("phi", Statistics::Boson, 1.0, "phi")])
            .unwrap();
        let space = ModeSpace::new(sys, ModeGrid::new(1, 1.0, 1.0).unwrap()).unwrap();
        Arc::new(FockBasis::enumerate(Arc::new(space), BasisCutoffs::new(2)).unwrap())
    }

    #[test]
    fn projector_algebra() {
        let b = phi_basis();
        let p = ac_projection(&b);
        assert_eq!(p.get(0, 0), ZERO);
        assert!((1..b.len()).all(|i| p.get(i, i) == ONE));
        assert_eq!(p.matmul(&p), p);
    }

    #[test]
    fn free_theory_gives_identity() {
        let b = phi_basis();
        let h = assemble_regularized(&InteractionSpec::empty(), b.clone(), b.len()).unwrap();
        let prop = Propagator::new(h.full.clone(), 1e-12).with_method(Method::DenseExponential);
        let id = CMatrix::identity(b.len(), b.len());
        for dir in [Direction::Plus, Direction::Minus] {
            let w = wave_operator_time_plateau(&h, &prop, dir, &PlateauOptions::uniform(1.0, 5, 2, 1e-8))
                .unwrap();
            assert!(w.converged);
            assert_eq!(w.plateau_time, Some(2.0));
            assert!(max_abs(&(&w.matrix - &id)) < 1e-15);
            assert_eq!(w.intertwining_defect, 0.0);
            let a = wave_operator_adiabatic(&h, &prop, dir, &AdiabaticOptions::new(vec![0.5, 0.25], 1e-10))
                .unwrap();
            assert!(max_abs(&(&a.matrix - &id)) < 1e-9);
        }
        let wp = wave_operator_time_plateau(&h, &prop, Direction::Plus, &PlateauOptions::uniform(1.0, 3, 2, 1e-8)).unwrap();
        let wm = wave_operator_time_plateau(&h, &prop, Direction::Minus, &PlateauOptions::uniform(1.0, 3, 2, 1e-8)).unwrap();
        let s = scattering_operator(&wp, &wm).unwrap();
        assert_eq!(s.s_matrix, id);
        assert_eq!(s.unitarity_defect, Some(0.0));
        assert_eq!(s.vacuum_persistence, ONE);
        let r = range_projection(&wp, 1e-10).unwrap();
        assert_eq!(r.rank, b.len());
        assert!(max_abs(&(r.projector.to_dense() - &id)) < 1e-12);
    }

    #[test]
    fn commuting_perturbation_gives_phases_only() {
        // a^dag a shifts every level but commutes with A_0
        let b = phi_basis();
        let number = Vertex::new(
            "n",
            vec![Leg::raise("phi"), Leg::lower("phi")],
            Kernel::Constant(Complex64::new(1e-5, 0.0)),
        );
        let spec = InteractionSpec::empty().with_term(Term::Custom(number));
        let h = assemble_regularized(&spec, b.clone(), b.len()).unwrap();
        let prop = Propagator::new(h.full.clone(), 1e-12).with_method(Method::DenseExponential);
        let w = wave_operator_adiabatic(
            &h,
            &prop,
            Direction::Plus,
            &AdiabaticOptions::new(vec![4.0, 2.0, 1.0], 1e-10),
        )
        .unwrap();
        for i in 0..b.len() {
            for j in 0..b.len() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((w.matrix[(i, j)].norm() - expected).abs() < 1e-8, "({i},{j})");
            }
        }
        // A W - W A_0 = V W: the level shifts times unimodular diagonal entries
        let max_shift = (0..b.len())
            .map(|u| 1e-5 * b.state(u).total_quanta() as f64)
            .fold(0.0, f64::max);
        assert!((w.intertwining_defect - max_shift).abs() < 1e-9 * max_shift.max(1.0));
    }

    #[test]
    fn rejects_bad_options() {
        let b = phi_basis();
        let h = assemble_regularized(&InteractionSpec::empty(), b.clone(), b.len()).unwrap();
        let prop = Propagator::new(h.full.clone(), 1e-12);
        let bad_window = PlateauOptions::uniform(1.0, 5, 1, 1e-3);
        assert!(wave_operator_time_plateau(&h, &prop, Direction::Plus, &bad_window).is_err());
        let empty = PlateauOptions::new(vec![], 2, 1e-3);
        assert!(wave_operator_time_plateau(&h, &prop, Direction::Plus, &empty).is_err());
        let rising = AdiabaticOptions::new(vec![0.1, 0.2], 1e-6);
        assert!(wave_operator_adiabatic(&h, &prop, Direction::Plus, &rising).is_err());
    }
}
