//! Unitary propagation `exp(-iHt) v` for sparse hermitian generators.
//!
//! Three interchangeable methods: adaptive Lanczos (Krylov) stepping, a
//! Chebyshev expansion over an estimated spectral interval, and the dense
//! exponential through a cached eigendecomposition. The dense path doubles
//! as the verification oracle.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::FockBasis;
use crate::linalg::{phase_evolve, CMatrix, CVector, HermitianEigen, SparseOperator, ZERO};

/// Default dimension limit for dense eigendecompositions.
pub const DEFAULT_DENSE_LIMIT: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    KrylovStep,
    Chebyshev,
    DenseExponential,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::KrylovStep => "krylov-step",
            Method::Chebyshev => "chebyshev",
            Method::DenseExponential => "dense-exponential",
        })
    }
}

/// `exp(-iHt)` as an action on vectors.
#[derive(Debug)]
pub struct Propagator {
    h: SparseOperator,
    method: Method,
    tolerance: f64,
    step_cap: f64,
    krylov_dim: usize,
    dense_limit: usize,
    interval: OnceLock<(f64, f64)>,
    eigen: OnceLock<HermitianEigen>,
}

impl Clone for Propagator {
    fn clone(&self) -> Self {
        Self {
            h: self.h.clone(),
            method: self.method,
            tolerance: self.tolerance,
            step_cap: self.step_cap,
            krylov_dim: self.krylov_dim,
            dense_limit: self.dense_limit,
            interval: self.interval.clone(),
            eigen: self.eigen.clone(),
        }
    }
}

impl Propagator {
    /// Krylov stepping with the given global error target.
    pub fn new(h: SparseOperator, tolerance: f64) -> Self {
        Self {
            h,
            method: Method::KrylovStep,
            tolerance,
            step_cap: f64::INFINITY,
            krylov_dim: 30,
            dense_limit: DEFAULT_DENSE_LIMIT,
            interval: OnceLock::new(),
            eigen: OnceLock::new(),
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    /// Largest time advanced by a single Krylov step.
    pub fn with_step_cap(mut self, cap: f64) -> Self {
        self.step_cap = cap;
        self
    }

    pub fn with_krylov_dim(mut self, m: usize) -> Self {
        self.krylov_dim = m.max(2);
        self
    }

    pub fn with_dense_limit(mut self, limit: usize) -> Self {
        self.dense_limit = limit;
        self
    }

    pub fn hamiltonian(&self) -> &SparseOperator {
        &self.h
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    /// `exp(-iHt) v`.
    pub fn evolve(&self, v: &CVector, t: f64) -> Result<CVector> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        if !t.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite time {t}")));
        }
        if t == 0.0 || v.norm() == 0.0 {
            return Ok(v.clone());
        }
        if self.h.is_diagonal() {
            let e: Vec<f64> = self.h.diagonal().iter().map(|z| z.re).collect();
            return Ok(phase_evolve(&e, v, t));
        }
        match self.method {
            Method::KrylovStep => self.krylov(v, t),
            Method::Chebyshev => self.chebyshev(v, t),
            Method::DenseExponential => {
                let eig = self.eigen()?;
                Ok(eig.apply_function_to(|x| Complex64::from_polar(1.0, -x * t), v))
            }
        }
    }

    /// Evolves several states in parallel; output order matches input.
    pub fn evolve_many(&self, states: &[CVector], t: f64) -> Result<Vec<CVector>> {
        states.par_iter().map(|v| self.evolve(v, t)).collect()
    }

    /// Cached dense eigendecomposition of `H`.
    pub fn eigen(&self) -> Result<&HermitianEigen> {
        if let Some(e) = self.eigen.get() {
            return Ok(e);
        }
        if self.dim() > self.dense_limit {
            return Err(Error::DenseLimit {
                dim: self.dim(),
                limit: self.dense_limit,
            });
        }
        let e = HermitianEigen::new(&self.h.to_dense())?;
        Ok(self.eigen.get_or_init(|| e))
    }

    fn krylov(&self, v: &CVector, t: f64) -> Result<CVector> {
        let total = t.abs();
        let dir = t.signum();
        let mut w = v.clone();
        let mut done = 0.0;
        let mut tau = total.min(self.step_cap);
        let mut steps = 0usize;
        let mut last_err = 0.0;
        while done < total {
            steps += 1;
            if steps > 100_000 {
                return Err(Error::Propagation {
                    residual: last_err,
                    iterations: steps,
                });
            }
            let beta = w.norm();
            let lanczos = Lanczos::build(&self.h, &w, self.krylov_dim.min(self.dim()));
            tau = tau.min(total - done);
            loop {
                let (step, err) = lanczos.step(dir * tau);
                last_err = err * beta;
                let allowed = self.tolerance * tau / total;
                if last_err <= allowed || lanczos.exact {
                    w = lanczos.lift(&step);
                    done += tau;
                    if last_err < 0.1 * allowed {
                        tau = (tau * 2.0).min(self.step_cap);
                    }
                    break;
                }
                tau *= 0.5;
                if tau < 1e-12 * total {
                    return Err(Error::Propagation {
                        residual: last_err,
                        iterations: steps,
                    });
                }
            }
        }
        Ok(w)
    }

    /// Spectral interval estimate; see [`estimate_interval`].
    pub fn spectral_interval(&self) -> (f64, f64) {
        *self.interval.get_or_init(|| estimate_interval(&self.h))
    }

    fn chebyshev(&self, v: &CVector, t: f64) -> Result<CVector> {
        let (mut lo, mut hi) = self.spectral_interval();
        for _ in 0..20 {
            match chebyshev_expand(&self.h, v, t, lo, hi, self.tolerance) {
                Some(out) => return Ok(out),
                None => {
                    // the recurrence grew: the estimate missed part of the spectrum
                    let c = 0.5 * (lo + hi);
                    let r = 0.5 * (hi - lo);
                    lo = c - 2.0 * r;
                    hi = c + 2.0 * r;
                }
            }
        }
        Err(Error::Propagation {
            residual: f64::INFINITY,
            iterations: 20,
        })
    }
}

/// `exp(-iEt)` per basis component; the exact free propagation.
pub fn evolve_free_diagonal(basis: &FockBasis, state: &CVector, t: f64) -> Result<CVector> {
    if state.len() != basis.len() {
        return Err(Error::DimensionMismatch {
            expected: basis.len(),
            got: state.len(),
        });
    }
    Ok(phase_evolve(basis.energies(), state, t))
}

/// Dense `V exp(-i Lambda t) V^dag` from a full eigendecomposition.
pub fn dense_oracle_exponential(h: &CMatrix, t: f64, limit: usize) -> Result<CMatrix> {
    if h.nrows() > limit {
        return Err(Error::DenseLimit {
            dim: h.nrows(),
            limit,
        });
    }
    let eig = HermitianEigen::new(h)?;
    Ok(eig.apply_function(|x| Complex64::from_polar(1.0, -x * t)))
}

/// Lanczos basis of a Krylov space with full reorthogonalization.
struct Lanczos {
    norm: f64,
    basis: Vec<CVector>,
    alpha: Vec<f64>,
    /// Coupling out of the space; zero on breakdown.
    residual: f64,
    exact: bool,
    eig: nalgebra::SymmetricEigen<f64, nalgebra::Dyn>,
}

impl Lanczos {
    fn build(h: &SparseOperator, w: &CVector, m: usize) -> Self {
        let beta0 = w.norm();
        let mut basis = vec![w / Complex64::new(beta0, 0.0)];
        let mut alpha = Vec::new();
        let mut beta = Vec::new();
        let scale = h.gershgorin_radius().max(1.0);
        let mut residual = 0.0;
        let mut exact = false;
        for j in 0..m {
            let mut u = h.apply(&basis[j]);
            let a = basis[j].dotc(&u).re;
            alpha.push(a);
            for _ in 0..2 {
                for b in &basis {
                    let c = b.dotc(&u);
                    u.axpy(-c, b, Complex64::new(1.0, 0.0));
                }
            }
            let nb = u.norm();
            if nb <= 1e-13 * scale {
                exact = true;
                residual = 0.0;
                break;
            }
            if j + 1 == m {
                residual = nb;
                break;
            }
            beta.push(nb);
            basis.push(u / Complex64::new(nb, 0.0));
        }
        let k = alpha.len();
        let mut tri = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            tri[(i, i)] = alpha[i];
            if i + 1 < k {
                tri[(i, i + 1)] = beta[i];
                tri[(i + 1, i)] = beta[i];
            }
        }
        let eig = tri.symmetric_eigen();
        basis.truncate(k);
        Self {
            norm: beta0,
            basis,
            alpha,
            residual,
            exact,
            eig,
        }
    }

    /// `exp(-i tau T) e_1` in Krylov coordinates and the error estimate
    /// per unit start norm,
    /// `|tau| * residual * |e_m^T phi_1(-i tau T) e_1|`.
    fn step(&self, tau: f64) -> (DVector<Complex64>, f64) {
        let k = self.alpha.len();
        let q = &self.eig.eigenvectors;
        let mut y = DVector::from_element(k, ZERO);
        let mut phi_last = ZERO;
        for (j, &theta) in self.eig.eigenvalues.iter().enumerate() {
            let z = Complex64::new(0.0, -tau * theta);
            let e = z.exp();
            let phi1 = if z.norm() < 1e-8 {
                Complex64::new(1.0, 0.0) + z * 0.5
            } else {
                (e - 1.0) / z
            };
            let w = q[(0, j)];
            for i in 0..k {
                y[i] += q[(i, j)] * w * e;
            }
            phi_last += q[(k - 1, j)] * w * phi1;
        }
        let err = if self.exact {
            0.0
        } else {
            tau.abs() * self.residual * phi_last.norm()
        };
        (y, err)
    }

    fn lift(&self, y: &DVector<Complex64>) -> CVector {
        let beta0 = Complex64::new(self.norm, 0.0);
        let mut out = CVector::zeros(self.basis[0].len());
        for (b, &c) in self.basis.iter().zip(y.iter()) {
            out.axpy(c * beta0, b, Complex64::new(1.0, 0.0));
        }
        out
    }
}

/// Spectral interval of a hermitian operator from two short power
/// iterations: the dominant eigenvalue, then the dominant eigenvalue of the
/// operator shifted by it. Widened by 5% of its width plus an absolute
/// margin; Chebyshev propagation widens further if its recurrence grows.
pub fn estimate_interval(h: &SparseOperator) -> (f64, f64) {
    let n = h.dim();
    if n == 0 {
        return (-1.0, 1.0);
    }
    let start = CVector::from_iterator(
        n,
        (0..n).map(|i| Complex64::new(1.0 + (i as f64 * 0.618).fract(), 0.3 * (i as f64).sin())),
    );
    let power = |shift: f64| -> f64 {
        let mut v = start.normalize();
        let mut lambda = 0.0;
        for _ in 0..60 {
            let mut u = h.apply(&v);
            u.axpy(Complex64::new(-shift, 0.0), &v, Complex64::new(1.0, 0.0));
            lambda = v.dotc(&u).re;
            let nu = u.norm();
            if nu == 0.0 {
                break;
            }
            v = u / Complex64::new(nu, 0.0);
        }
        lambda + shift
    };
    let first = power(0.0);
    let second = power(first);
    let (lo, hi) = if first <= second {
        (first, second)
    } else {
        (second, first)
    };
    let pad = 0.05 * (hi - lo) + 1e-3 * (1.0 + hi.abs().max(lo.abs()));
    (lo - pad, hi + pad)
}

/// Bessel functions `J_0..J_kmax` at `x` by Miller's backward recurrence,
/// normalized with `J_0 + 2 sum J_2k = 1`.
pub fn bessel_j_sequence(x: f64, kmax: usize) -> Vec<f64> {
    if x == 0.0 {
        let mut out = vec![0.0; kmax + 1];
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let start = kmax + 20 + (ax + 10.0 * ax.cbrt()) as usize;
    let mut j = vec![0.0; start + 2];
    j[start] = 1e-300;
    for k in (1..=start).rev() {
        j[k - 1] = 2.0 * k as f64 / ax * j[k] - j[k + 1];
        if j[k - 1].abs() > 1e250 {
            for v in j[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let norm: f64 = j[0] + 2.0 * j.iter().skip(2).step_by(2).sum::<f64>();
    let mut out: Vec<f64> = j[..=kmax].iter().map(|v| v / norm).collect();
    if x < 0.0 {
        for (k, v) in out.iter_mut().enumerate() {
            if k % 2 == 1 {
                *v = -*v;
            }
        }
    }
    out
}

/// Chebyshev series for `exp(-iHt) v` on `[lo, hi]`; `None` if the
/// recurrence grows, i.e. the spectrum leaks out of the interval.
fn chebyshev_expand(
    h: &SparseOperator,
    v: &CVector,
    t: f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Option<CVector> {
    let c = 0.5 * (hi + lo);
    let r = 0.5 * (hi - lo);
    let x = r * t;
    let kmax = (x.abs() + 12.0 * x.abs().cbrt() + 40.0) as usize;
    let jk = bessel_j_sequence(x, kmax);
    let vnorm = v.norm();
    // scaled generator (H - c)/r
    let apply = |u: &CVector| -> CVector {
        let mut out = h.apply(u);
        out.axpy(Complex64::new(-c / r, 0.0), u, Complex64::new(1.0 / r, 0.0));
        out
    };
    let mut t_prev = v.clone();
    let mut t_cur = apply(v);
    let mut acc = v * Complex64::new(jk[0], 0.0);
    let minus_i = Complex64::new(0.0, -1.0);
    acc.axpy(minus_i * 2.0 * jk[1], &t_cur, Complex64::new(1.0, 0.0));
    let mut coeff_phase = minus_i;
    let mut small_run = 0;
    for (k, &jkk) in jk.iter().enumerate().skip(2) {
        let mut t_next = apply(&t_cur);
        t_next.axpy(Complex64::new(-1.0, 0.0), &t_prev, Complex64::new(2.0, 0.0));
        if t_next.norm() > 1.5 * vnorm {
            return None;
        }
        coeff_phase *= minus_i;
        acc.axpy(coeff_phase * 2.0 * jkk, &t_next, Complex64::new(1.0, 0.0));
        t_prev = t_cur;
        t_cur = t_next;
        if (k as f64) > x.abs() && 2.0 * jkk.abs() < 1e-3 * tol {
            small_run += 1;
            if small_run >= 3 {
                break;
            }
        } else {
            small_run = 0;
        }
    }
    Some(acc * Complex64::from_polar(1.0, -c * t))
}
