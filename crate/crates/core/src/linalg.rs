//! Sparse and dense complex linear algebra used by every other module.
//!
//! Operators on the truncated Fock space are stored in compressed sparse row
//! form. Dense work (oracles, wave operators, Dyson terms) uses `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Square complex operator in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
}

impl SparseOperator {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: vec![0; dim + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![1.0; dim])
    }

    /// Diagonal operator; zero entries are not stored.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let rows = diag
            .iter()
            .enumerate()
            .map(|(i, &d)| vec![(i, Complex64::new(d, 0.0))])
            .collect();
        Self::from_rows(diag.len(), rows)
    }

    /// Builds from `(row, col, value)` triplets. Duplicates are summed in
    /// the order given; exact zeros are dropped.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, Complex64)]) -> Self {
        let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); dim];
        for &(r, c, v) in triplets {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) out of range for dim {dim}");
            rows[r].push((c, v));
        }
        Self::from_rows(dim, rows)
    }

    /// Builds from per-row `(col, value)` lists.
    pub fn from_rows(dim: usize, rows: Vec<Vec<(usize, Complex64)>>) -> Self {
        assert_eq!(rows.len(), dim);
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            // stable sort keeps duplicate summation order deterministic
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.into_iter().peekable();
            while let Some((c, mut v)) = iter.next() {
                while let Some(&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                if v != ZERO {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Sparse copy of a dense matrix keeping entries with `|a| > drop_tol`.
    pub fn from_dense(m: &CMatrix, drop_tol: f64) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        let dim = m.nrows();
        let rows = (0..dim)
            .map(|r| {
                (0..dim)
                    .filter_map(|c| {
                        let v = m[(r, c)];
                        (v.norm() > drop_tol).then_some((c, v))
                    })
                    .collect()
            })
            .collect();
        Self::from_rows(dim, rows)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates over the stored entries of `row`.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// Iterates over all stored `(row, col, value)` entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.col_idx[span.clone()].binary_search(&col) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => ZERO,
        }
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn is_diagonal(&self) -> bool {
        self.entries().all(|(r, c, _)| r == c)
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        let mut out = CVector::zeros(self.dim);
        self.apply_into(v.as_slice(), out.as_mut_slice());
        out
    }

    pub fn apply_into(&self, v: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(v.len(), self.dim);
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * v[self.col_idx[k]];
            }
            *o = acc;
        }
    }

    pub fn adjoint(&self) -> Self {
        let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); self.dim];
        for (r, c, v) in self.entries() {
            rows[c].push((r, v.conj()));
        }
        Self::from_rows(self.dim, rows)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let rows = (0..self.dim)
            .map(|r| self.row(r).chain(other.row(r)).collect())
            .collect();
        Self::from_rows(self.dim, rows)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-ONE))
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let rows = (0..self.dim)
            .map(|r| {
                let mut acc: Vec<(usize, Complex64)> = Vec::new();
                for (k, a) in self.row(r) {
                    acc.extend(other.row(k).map(|(c, b)| (c, a * b)));
                }
                acc
            })
            .collect();
        Self::from_rows(self.dim, rows)
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.entries() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `max |A - A†|` over all entries.
    pub fn hermiticity_defect(&self) -> f64 {
        self.sub(&self.adjoint()).max_abs()
    }

    /// Upper bound on the spectral radius from Gershgorin discs.
    pub fn gershgorin_radius(&self) -> f64 {
        (0..self.dim)
            .map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Restriction to the leading `n` rows and columns (entries outside are dropped).
    pub fn compress_leading(&self, n: usize) -> Self {
        let rows = (0..self.dim)
            .map(|r| {
                if r >= n {
                    Vec::new()
                } else {
                    self.row(r).filter(|&(c, _)| c < n).collect()
                }
            })
            .collect();
        Self::from_rows(self.dim, rows)
    }
}

/// Largest entry modulus of a dense matrix.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub fn max_abs_vec(v: &CVector) -> f64 {
    v.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

pub fn dense_hermiticity_defect(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// `‖U†U − I‖_max`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.ncols();
    max_abs(&(u.adjoint() * u - CMatrix::identity(n, n)))
}

/// Eigendecomposition of a dense hermitian matrix, ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Columns are the orthonormal eigenvectors.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn new(h: &CMatrix) -> Result<Self> {
        let n = h.nrows();
        if n != h.ncols() {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: h.ncols(),
            });
        }
        if n == 0 {
            return Ok(Self {
                values: Vec::new(),
                vectors: CMatrix::zeros(0, 0),
            });
        }
        if h.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Eigensolve("matrix has non-finite entries".into()));
        }
        // symmetrize so rounding asymmetry cannot leak into the solver
        let sym = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = sym
            .try_symmetric_eigen(f64::EPSILON, 0)
            .ok_or_else(|| Error::Eigensolve("symmetric eigensolver did not converge".into()))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut vectors = CMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        Ok(Self { values, vectors })
    }

    /// `f(H) = V f(Λ) V†` for a complex-valued spectral function.
    pub fn apply_function(&self, f: impl Fn(f64) -> Complex64) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for (j, &lam) in self.values.iter().enumerate() {
            let fj = f(lam);
            scaled.column_mut(j).iter_mut().for_each(|x| *x *= fj);
        }
        scaled * self.vectors.adjoint()
    }

    /// `f(H) v` without forming the matrix.
    pub fn apply_function_to(&self, f: impl Fn(f64) -> Complex64, v: &CVector) -> CVector {
        let mut coeffs = self.vectors.adjoint() * v;
        for (c, &lam) in coeffs.iter_mut().zip(&self.values) {
            *c *= f(lam);
        }
        &self.vectors * coeffs
    }
}

/// `exp(-i t diag(energies)) v`.
pub fn phase_evolve(energies: &[f64], v: &CVector, t: f64) -> CVector {
    CVector::from_iterator(
        v.len(),
        v.iter()
            .zip(energies)
            .map(|(x, &e)| x * Complex64::from_polar(1.0, -e * t)),
    )
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(x), p0 = P_{n-1}(x)
            let (pn, pn1) = (p1, p0);
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss-Legendre rule mapped onto `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter()
        .zip(&w)
        .map(|(&xi, &wi)| (mid + half * xi, half * wi))
        .collect()
}
