//! Interaction-picture generator, Dyson series and damped scattering matrices.
//!
//! `A_i(t) = exp(iA_0 t) (A_{n,r} - A_0) exp(-iA_0 t)` lives on the leading
//! `n x n` block, so every Dyson term is computed on that block and
//! embedded afterwards.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evolution::Propagator;
use crate::hamiltonian::RegularizedHamiltonian;
use crate::linalg::{gauss_legendre_on, max_abs, CMatrix, CVector, HermitianEigen, ONE, ZERO};

/// Dense dimension limit for Dyson matrices.
pub const DYSON_DENSE_LIMIT: usize = 400;

/// `A_i(t)[u,v] = V[u,v] exp(i (E_u - E_v) t)` on the rank block.
#[derive(Debug, Clone)]
pub struct InteractionPictureGenerator {
    dim: usize,
    block: CMatrix,
    energies: Vec<f64>,
}

impl InteractionPictureGenerator {
    pub fn new(h: &RegularizedHamiltonian) -> Result<Self> {
        let dim = h.dim();
        if dim > DYSON_DENSE_LIMIT {
            return Err(Error::DenseLimit {
                dim,
                limit: DYSON_DENSE_LIMIT,
            });
        }
        let n = h.rank;
        let mut block = CMatrix::zeros(n, n);
        for (r, c, v) in h.interaction.entries() {
            block[(r, c)] = v;
        }
        Ok(Self {
            dim,
            block,
            energies: h.energies()[..n].to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.block.nrows()
    }

    /// The generator on the rank block only.
    pub fn block_at(&self, t: f64) -> CMatrix {
        let n = self.rank();
        let phases: Vec<Complex64> = self
            .energies
            .iter()
            .map(|&e| Complex64::from_polar(1.0, e * t))
            .collect();
        CMatrix::from_fn(n, n, |u, v| self.block[(u, v)] * phases[u] * phases[v].conj())
    }

    /// Full `dim x dim` generator.
    pub fn generator_at(&self, t: f64) -> CMatrix {
        self.embed(&self.block_at(t))
    }

    fn embed(&self, block: &CMatrix) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        let n = self.rank();
        m.view_mut((0, 0), (n, n)).copy_from(block);
        m
    }
}

/// Gauss-Legendre node count per nesting level.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSpec {
    pub nodes_per_level: usize,
}

impl QuadratureSpec {
    pub fn new(nodes_per_level: usize) -> Self {
        Self {
            nodes_per_level: nodes_per_level.max(1),
        }
    }
}

/// `int_{t'}^{t} A_i(s) ds` on the block with `n` nodes.
fn first_order_block(g: &InteractionPictureGenerator, t: f64, t0: f64, n: usize) -> CMatrix {
    let k = g.rank();
    gauss_legendre_on(n, t0, t)
        .into_iter()
        .fold(CMatrix::zeros(k, k), |acc, (s, w)| acc + g.block_at(s) * Complex64::new(w, 0.0))
}

/// Doubles the node count from 8 until the first-order term changes by
/// less than `tol` (max norm); returns the larger count.
pub fn choose_nodes(g: &InteractionPictureGenerator, t: f64, t0: f64, tol: f64) -> Result<QuadratureSpec> {
    let mut n = 8;
    let mut prev = first_order_block(g, t, t0, n);
    while n <= 4096 {
        let next = first_order_block(g, t, t0, 2 * n);
        if max_abs(&(&next - &prev)) < tol {
            return Ok(QuadratureSpec::new(2 * n));
        }
        n *= 2;
        prev = next;
    }
    Err(Error::Quadrature(format!(
        "first-order term not resolved with {n} nodes on [{t0}, {t}]"
    )))
}

/// Estimated quadrature error of a node count: the change of the
/// first-order term when the count is doubled.
pub fn node_error_estimate(g: &InteractionPictureGenerator, t: f64, t0: f64, spec: &QuadratureSpec) -> f64 {
    let a = first_order_block(g, t, t0, spec.nodes_per_level);
    let b = first_order_block(g, t, t0, 2 * spec.nodes_per_level);
    max_abs(&(a - b))
}

/// `G_m(tau) = int_{t'}^{tau} A(s) G_{m-1}(s) ds`, `G_0 = I`, by iterated
/// Gauss-Legendre on each nested interval.
fn nested_block(g: &InteractionPictureGenerator, m: usize, tau: f64, t0: f64, n: usize) -> CMatrix {
    let k = g.rank();
    if m == 0 {
        return CMatrix::identity(k, k);
    }
    let rule = gauss_legendre_on(n, t0, tau);
    let inner = |&(s, w): &(f64, f64)| -> CMatrix {
        let a = g.block_at(s) * Complex64::new(w, 0.0);
        if m == 1 {
            a
        } else {
            a * nested_block(g, m - 1, s, t0, n)
        }
    };
    if m >= 3 {
        // outer levels carry most of the work
        let parts: Vec<CMatrix> = rule.par_iter().map(inner).collect();
        parts.into_iter().fold(CMatrix::zeros(k, k), |acc, p| acc + p)
    } else {
        rule.iter().map(inner).fold(CMatrix::zeros(k, k), |acc, p| acc + p)
    }
}

fn minus_i_pow(m: usize) -> Complex64 {
    match m % 4 {
        0 => ONE,
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    }
}

/// Order-`m` Dyson term `(-i)^m int_{t'}^{t} dt_1 ... int_{t'}^{t_{m-1}} dt_m
/// A_i(t_1) ... A_i(t_m)` as a full matrix.
pub fn dyson_term(
    g: &InteractionPictureGenerator,
    m: usize,
    t: f64,
    t0: f64,
    quad: &QuadratureSpec,
) -> Result<CMatrix> {
    check_times(m, t, t0)?;
    let block = nested_block(g, m, t, t0, quad.nodes_per_level) * minus_i_pow(m);
    Ok(g.embed(&block))
}

/// `<u| term_m |v>` by contracting the nested integral with a vector;
/// cost grows like `nodes^m * n^2` instead of `nodes^m * n^3`.
pub fn dyson_term_applied(
    g: &InteractionPictureGenerator,
    m: usize,
    t: f64,
    t0: f64,
    quad: &QuadratureSpec,
    v: &CVector,
) -> Result<CVector> {
    check_times(m, t, t0)?;
    if v.len() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            got: v.len(),
        });
    }
    let k = g.rank();
    let head: CVector = v.rows(0, k).into_owned();
    fn rec(g: &InteractionPictureGenerator, m: usize, tau: f64, t0: f64, n: usize, v: &CVector) -> CVector {
        if m == 0 {
            return v.clone();
        }
        gauss_legendre_on(n, t0, tau)
            .into_iter()
            .fold(CVector::zeros(v.len()), |acc, (s, w)| {
                acc + g.block_at(s) * rec(g, m - 1, s, t0, n, v) * Complex64::new(w, 0.0)
            })
    }
    let out = rec(g, m, t, t0, quad.nodes_per_level, &head) * minus_i_pow(m);
    let mut full = CVector::zeros(g.dim());
    full.rows_mut(0, k).copy_from(&out);
    Ok(full)
}

fn check_times(m: usize, t: f64, t0: f64) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidArgument("Dyson order must be at least 1".into()));
    }
    if !(t >= t0) || !t.is_finite() || !t0.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Dyson terms need finite t >= t' (got t = {t}, t' = {t0})"
        )));
    }
    Ok(())
}

/// The same term written as `(-i)^m/m! int_{[t',t]^m} T(A_i(t_1) ... A_i(t_m))`,
/// for `m <= 2`. The square is cut into `panels^2` cells: off-diagonal cells
/// have a fixed time order and use a tensor rule, diagonal cells are split
/// along `t_1 = t_2` into two triangles, each mapped from the unit square.
pub fn dyson_term_cube(
    g: &InteractionPictureGenerator,
    m: usize,
    t: f64,
    t0: f64,
    panels: usize,
    nodes: usize,
) -> Result<CMatrix> {
    check_times(m, t, t0)?;
    let k = g.rank();
    let panels = panels.max(1);
    let width = (t - t0) / panels as f64;
    let edges: Vec<(f64, f64)> = (0..panels)
        .map(|p| (t0 + p as f64 * width, t0 + (p + 1) as f64 * width))
        .collect();
    let block = match m {
        1 => edges
            .iter()
            .flat_map(|&(a, b)| gauss_legendre_on(nodes, a, b))
            .fold(CMatrix::zeros(k, k), |acc, (s, w)| acc + g.block_at(s) * Complex64::new(w, 0.0)),
        2 => {
            let ordered = |t1: f64, t2: f64| -> CMatrix {
                // time ordering puts the later time on the left
                if t1 >= t2 {
                    g.block_at(t1) * g.block_at(t2)
                } else {
                    g.block_at(t2) * g.block_at(t1)
                }
            };
            let cells: Vec<CMatrix> = (0..panels * panels)
                .into_par_iter()
                .map(|cell| {
                    let (i, j) = (cell / panels, cell % panels);
                    let (a1, b1) = edges[i];
                    let (a2, b2) = edges[j];
                    let mut acc = CMatrix::zeros(k, k);
                    if i != j {
                        for (s1, w1) in gauss_legendre_on(nodes, a1, b1) {
                            for (s2, w2) in gauss_legendre_on(nodes, a2, b2) {
                                acc += ordered(s1, s2) * Complex64::new(w1 * w2, 0.0);
                            }
                        }
                    } else {
                        // triangle s2 <= s1: s1 = a + h x, s2 = a + h x y, jacobian h^2 x;
                        // the other triangle is its mirror image
                        let h = b1 - a1;
                        for (x, wx) in gauss_legendre_on(nodes, 0.0, 1.0) {
                            for (y, wy) in gauss_legendre_on(nodes, 0.0, 1.0) {
                                let s1 = a1 + h * x;
                                let s2 = a1 + h * x * y;
                                let w = wx * wy * h * h * x;
                                acc += (ordered(s1, s2) + ordered(s2, s1)) * Complex64::new(w, 0.0);
                            }
                        }
                    }
                    acc
                })
                .collect();
            cells.into_iter().fold(CMatrix::zeros(k, k), |acc, c| acc + c) * Complex64::new(0.5, 0.0)
        }
        _ => {
            return Err(Error::InvalidArgument(
                "the time-ordered cube form is implemented for orders 1 and 2".into(),
            ))
        }
    };
    Ok(g.embed(&(block * minus_i_pow(m))))
}

/// Partial sums of the Dyson series.
#[derive(Debug, Clone)]
pub struct DysonExpansion {
    pub order: usize,
    /// `partial_sums[k] = U^(k) = sum_{m <= k} term_m`, with `term_0 = I`.
    pub partial_sums: Vec<CMatrix>,
    pub terms: Vec<CMatrix>,
    pub quadrature: QuadratureSpec,
    /// `(m, max |simplex - cube|)` for the cross-checked order.
    pub cube_check: Option<(usize, f64)>,
    pub warnings: Vec<String>,
}

/// `T exp(-i int_{t'}^{t} A_i)` truncated at `order`. The order-2 term (or
/// order 1 when `order == 1`) is also evaluated in the time-ordered cube
/// form and the discrepancy recorded.
pub fn time_ordered_exponential(
    g: &InteractionPictureGenerator,
    t: f64,
    t0: f64,
    order: usize,
    quad: &QuadratureSpec,
    tol: f64,
) -> Result<DysonExpansion> {
    if !(t >= t0) {
        return Err(Error::InvalidArgument(format!("need t >= t' (got {t} < {t0})")));
    }
    let mut warnings = Vec::new();
    if g.rank() > 0 && t > t0 {
        let est = node_error_estimate(g, t, t0, quad);
        if est > tol {
            warnings.push(format!(
                "{} nodes per level leave an estimated first-order error of {est:e} (target {tol:e})",
                quad.nodes_per_level
            ));
        }
    }
    let id = CMatrix::identity(g.dim(), g.dim());
    let mut terms = vec![id.clone()];
    let mut partial_sums = vec![id];
    for m in 1..=order {
        let term = if t == t0 {
            CMatrix::zeros(g.dim(), g.dim())
        } else {
            dyson_term(g, m, t, t0, quad)?
        };
        let next = partial_sums.last().unwrap() + &term;
        terms.push(term);
        partial_sums.push(next);
    }
    let cube_check = if order >= 1 && t > t0 {
        let m = order.min(2);
        let panels = ((t - t0) / 0.5).ceil().max(1.0) as usize;
        let cube = dyson_term_cube(g, m, t, t0, panels, quad.nodes_per_level.clamp(8, 24))?;
        Some((m, max_abs(&(cube - &terms[m]))))
    } else {
        None
    };
    Ok(DysonExpansion {
        order,
        partial_sums,
        terms,
        quadrature: quad.clone(),
        cube_check,
        warnings,
    })
}

/// `U(t,t') = exp(iA_0 t) exp(-iA_{n,r}(t - t')) exp(-iA_0 t')` by direct
/// propagation of every basis column.
pub fn propagator_interaction_picture(
    h: &RegularizedHamiltonian,
    prop: &Propagator,
    t: f64,
    t0: f64,
) -> Result<CMatrix> {
    let dim = h.dim();
    if prop.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: prop.dim(),
        });
    }
    let e = h.energies();
    let cols: Vec<CVector> = (0..dim)
        .into_par_iter()
        .map(|u| -> Result<CVector> {
            let mut v = CVector::zeros(dim);
            v[u] = Complex64::from_polar(1.0, -e[u] * t0);
            let w = prop.evolve(&v, t - t0)?;
            Ok(CVector::from_iterator(
                dim,
                w.iter().zip(e).map(|(x, &eu)| x * Complex64::from_polar(1.0, eu * t)),
            ))
        })
        .collect::<Result<_>>()?;
    let mut m = CMatrix::zeros(dim, dim);
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    Ok(m)
}

/// First-order Born term of the damped scattering matrix,
/// `-i V[u,v] * 2 eps / ((E_u - E_v)^2 + eps^2)`; the analytic value of
/// `-i int exp(-eps |s|) A_i(s)[u,v] ds`. The full first-order S is the
/// identity plus this matrix.
pub fn smatrix_first_order(h: &RegularizedHamiltonian, eps: f64) -> Result<CMatrix> {
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("damping must be positive, got {eps}")));
    }
    let dim = h.dim();
    let e = h.energies();
    let mut m = CMatrix::zeros(dim, dim);
    for (u, v, a) in h.interaction.entries() {
        let de = e[u] - e[v];
        m[(u, v)] = Complex64::new(0.0, -1.0) * a * (2.0 * eps / (de * de + eps * eps));
    }
    Ok(m)
}

/// Default damping: four times the mean gap between distinct free energies
/// of the basis (energies closer than 1e-9 count as one level).
pub fn default_damping(h: &RegularizedHamiltonian) -> f64 {
    let mut levels: Vec<f64> = h.energies().to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if levels.len() < 2 {
        return 1.0;
    }
    let span = levels[levels.len() - 1] - levels[0];
    4.0 * span / (levels.len() - 1) as f64
}

/// Options of the damped scattering-matrix surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct DampedOptions {
    pub eps: f64,
    /// Half-width `T`; defaults to `23 / eps` (damping factor `e^-23`).
    pub half_time: Option<f64>,
    /// Magnus step; defaults to 0.5, shrunk to fit whole steps in `[0, T]`.
    pub step: f64,
}

impl DampedOptions {
    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            half_time: None,
            step: 0.5,
        }
    }
}

/// `U_eps(T, -T)` in the interaction picture for
/// `H_eps(t) = A_0 + exp(-eps |t|) (A_{n,r} - A_0)`, by fourth-order Magnus
/// steps in the Schroedinger picture. `t = 0` is a step boundary so no step
/// straddles the kink of the switching function.
pub fn damped_scattering_matrix(h: &RegularizedHamiltonian, opts: &DampedOptions) -> Result<CMatrix> {
    let eps = opts.eps;
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("damping must be positive, got {eps}")));
    }
    let dim = h.dim();
    if dim > DYSON_DENSE_LIMIT {
        return Err(Error::DenseLimit {
            dim,
            limit: DYSON_DENSE_LIMIT,
        });
    }
    let big_t = opts.half_time.unwrap_or(23.0 / eps);
    let steps_per_side = (big_t / opts.step).ceil().max(1.0) as usize;
    let dt = big_t / steps_per_side as f64;
    let a0 = h.a0.to_dense();
    let v = h.interaction.to_dense();
    let at = |t: f64| -> CMatrix { &a0 + &v * Complex64::new((-eps * t.abs()).exp(), 0.0) };
    let c = 3f64.sqrt() / 6.0;
    let mut u = CMatrix::identity(dim, dim);
    for k in 0..2 * steps_per_side {
        let t = -big_t + k as f64 * dt;
        let h1 = at(t + (0.5 - c) * dt);
        let h2 = at(t + (0.5 + c) * dt);
        let comm = &h1 * &h2 - &h2 * &h1;
        // exp(Omega_4) = exp(-i K) with K hermitian
        let kmat = (&h1 + &h2) * Complex64::new(0.5 * dt, 0.0)
            + comm * Complex64::new(0.0, 3f64.sqrt() / 12.0 * dt * dt);
        let eig = HermitianEigen::new(&kmat)?;
        u = eig.apply_function(|x| Complex64::from_polar(1.0, -x)) * u;
    }
    // interaction picture: exp(iA_0 T) U exp(iA_0 T)
    let e = h.energies();
    for r in 0..dim {
        for col in 0..dim {
            u[(r, col)] *= Complex64::from_polar(1.0, (e[r] + e[col]) * big_t);
        }
    }
    Ok(u)
}

/// Embeds a vacuum-preserving convention: row and column 0 of `s` set to the unit vector.
pub fn force_vacuum(s: &mut CMatrix) {
    let n = s.nrows();
    for i in 0..n {
        s[(0, i)] = ZERO;
        s[(i, 0)] = ZERO;
    }
    if n > 0 {
        s[(0, 0)] = ONE;
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::fock::{BasisCutoffs, FockBasis, ModeGrid, ModeSpace, ParticleSpec, ParticleSystem, Statistics};
    use crate::hamiltonian::{assemble_regularized, InteractionSpec, Kernel, Leg, Term, Vertex};

    fn instance(g: f64, kernel: Kernel) -> RegularizedHamiltonian {
        let sys = ParticleSystem::new(&[ParticleSpec::new("phi", Statistics::Boson, 1.0, "phi")])
            .unwrap();
        let space = ModeSpace::new(sys, ModeGrid::new(1, 1.0, 1.0).unwrap()).unwrap();
        let basis = Arc::new(FockBasis::enumerate(Arc::new(space), BasisCutoffs::new(2)).unwrap());
        let hop = Vertex::new("hop", vec![Leg::raise("phi"), Leg::lower("phi")], kernel)
            .conserving(false)
            .with_coupling("g");
        let spec = InteractionSpec::empty().with_term(Term::Custom(hop)).with_coupling("g", g);
        assemble_regularized(&spec, basis.clone(), basis.len()).unwrap()
    }

    #[test]
    fn generator_phases() {
        let h = instance(0.3, Kernel::Constant(Complex64::new(1.0, 0.0)));
        let g = InteractionPictureGenerator::new(&h).unwrap();
        assert_eq!(g.generator_at(0.0), h.interaction.to_dense());
        let t = 0.7;
        let a = g.generator_at(t);
        let e = h.energies();
        for (u, v, x) in h.interaction.entries() {
            let expected = x * Complex64::from_polar(1.0, (e[u] - e[v]) * t);
            assert!((a[(u, v)] - expected).norm() < 1e-15);
        }
        assert!(crate::linalg::dense_hermiticity_defect(&a) < 1e-15);
    }

    #[test]
    fn constant_generator_closed_forms() {
        // a momentum-diagonal a^dag a kernel commutes with A_0
        let mut table = std::collections::BTreeMap::new();
        for k in -1..=1 {
            table.insert(vec![vec![k], vec![k]], Complex64::new(0.02 + 0.01 * k as f64, 0.0));
        }
        let h = instance(1.0, Kernel::Table(table));
        let g = InteractionPictureGenerator::new(&h).unwrap();
        let a = h.interaction.to_dense();
        let quad = QuadratureSpec::new(6);
        let (t, t0) = (1.5, -0.5);
        let d = t - t0;
        let one = dyson_term(&g, 1, t, t0, &quad).unwrap();
        assert!(max_abs(&(one - &a * Complex64::new(0.0, -d))) < 1e-14);
        let two = dyson_term(&g, 2, t, t0, &quad).unwrap();
        assert!(max_abs(&(two - &a * &a * Complex64::new(-d * d / 2.0, 0.0))) < 1e-14);
        let exp = time_ordered_exponential(&g, t, t0, 6, &quad, 1e-10).unwrap();
        let exact = HermitianEigen::new(&a).unwrap().apply_function(|x| Complex64::from_polar(1.0, -x * d));
        assert!(max_abs(&(&exp.partial_sums[6] - &exact)) < 1e-6);
        assert_eq!(exp.partial_sums[0], CMatrix::identity(g.dim(), g.dim()));
    }

    #[test]
    fn born_term_lorentzian() {
        let h = instance(0.1, Kernel::Constant(Complex64::new(1.0, 0.0)));
        let eps = 0.5;
        let born = smatrix_first_order(&h, eps).unwrap();
        let e = h.energies();
        for (u, v, a) in h.interaction.entries() {
            let de = e[u] - e[v];
            let peak = a.norm() * 2.0 / eps;
            if de.abs() < 1e-12 {
                assert!((born[(u, v)] - Complex64::new(0.0, -1.0) * a * (2.0 / eps)).norm() < 1e-14);
            } else if (de.abs() - eps).abs() < 1e-12 {
                assert!((born[(u, v)].norm() - 0.5 * peak).abs() < 1e-14);
            }
        }
        assert!(smatrix_first_order(&h, 0.0).is_err());
    }
}
