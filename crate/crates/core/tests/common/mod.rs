//! Shared instances and independent oracles for the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fockscatter::fock::{
    BasisCutoffs, FockBasis, LadderKind, ModeGrid, ModeSpace, ParticleSpec, ParticleSystem,
    Statistics,
};
use fockscatter::hamiltonian::{assemble_regularized, InteractionSpec, RegularizedHamiltonian, Term};
use fockscatter::linalg::{CMatrix, SparseOperator};

pub fn scalar_system(mass: f64) -> ParticleSystem {
    ParticleSystem::new(&[ParticleSpec::new("phi", Statistics::Boson, mass, "phi")]).unwrap()
}

/// Boson `a`, fermion `b` and its antiparticle `d`.
pub fn yukawa_system(boson_mass: f64, fermion_mass: f64) -> ParticleSystem {
    ParticleSystem::new(&[
        ParticleSpec::new("a", Statistics::Boson, boson_mass, "a"),
        ParticleSpec::new("b", Statistics::Fermion, fermion_mass, "d"),
        ParticleSpec::new("d", Statistics::Fermion, fermion_mass, "b"),
    ])
    .unwrap()
}

pub fn basis(
    system: ParticleSystem,
    dimension: usize,
    cutoff: f64,
    spacing: f64,
    n_max: u32,
    energy_cap: Option<f64>,
) -> Arc<FockBasis> {
    let space = ModeSpace::new(system, ModeGrid::new(dimension, cutoff, spacing).unwrap()).unwrap();
    let mut c = BasisCutoffs::new(n_max);
    if let Some(cap) = energy_cap {
        c = c.with_energy_cap(cap);
    }
    Arc::new(FockBasis::enumerate(Arc::new(space), c).unwrap())
}

/// The 30-state phi^4 instance: modes k = -1, 0, 1, at most 4 quanta, energy <= 5.5.
pub fn phi4_basis() -> Arc<FockBasis> {
    basis(scalar_system(1.0), 1, 1.0, 1.0, 4, Some(5.5))
}

pub fn phi_power(power: usize, g: f64) -> InteractionSpec {
    InteractionSpec::empty()
        .with_term(Term::PhiPower {
            particle: "phi".into(),
            power,
            coupling: "g".into(),
        })
        .with_coupling("g", g)
}

pub fn yukawa(g: f64) -> InteractionSpec {
    InteractionSpec::empty()
        .with_term(Term::Yukawa {
            boson: "a".into(),
            fermion: "b".into(),
            coupling: "g".into(),
        })
        .with_coupling("g", g)
}

pub fn counterterm(delta: f64) -> InteractionSpec {
    InteractionSpec::empty()
        .with_counterterm(Term::MassCounterterm {
            particle: "phi".into(),
            coupling: "delta".into(),
        })
        .with_coupling("delta", delta)
}

pub fn phi4_instance(g: f64) -> RegularizedHamiltonian {
    let b = phi4_basis();
    let n = b.len();
    assemble_regularized(&phi_power(4, g), b, n).unwrap()
}

pub fn ladder(b: &FockBasis, mode: usize, kind: LadderKind) -> CMatrix {
    b.ladder_matrix(mode, kind).unwrap().to_dense()
}

fn particle_modes(b: &FockBasis, name: &str) -> Vec<usize> {
    let id = b.space().system().id(name).unwrap();
    b.space().modes_of(id).to_vec()
}

fn momentum(b: &FockBasis, m: usize) -> Vec<i32> {
    b.space().mode(m).momentum.clone()
}

fn mode_with_momentum(b: &FockBasis, name: &str, k: &[i32]) -> Option<usize> {
    particle_modes(b, name).into_iter().find(|&m| momentum(b, m) == k)
}

/// `g/N! * sum over box modes of :prod_i phi_i:` built from dense ladder
/// matrices, where each field factor is `(a_k + a^dag_{-k}) / sqrt(2 mu_k)`,
/// the whole product carries `V^(1 - N/2)`, and `sum k_i = 0`. Every one of
/// the `2^N` raise/lower choices is expanded separately.
pub fn oracle_phi_power(b: &FockBasis, power: usize, g: f64) -> CMatrix {
    let dim = b.len();
    let space = b.space();
    let modes = particle_modes(b, "phi");
    let volume = space.grid().volume();
    let mut total = CMatrix::zeros(dim, dim);
    let factorial: f64 = (1..=power).map(|i| i as f64).product();
    let mut assignment = vec![0usize; power];
    loop {
        let ks: Vec<Vec<i32>> = assignment.iter().map(|&i| momentum(b, modes[i])).collect();
        let d = space.grid().dimension();
        let conserved = (0..d).all(|c| ks.iter().map(|k| k[c] as i64).sum::<i64>() == 0);
        if conserved {
            let norm: f64 = assignment
                .iter()
                .map(|&i| (2.0 * space.energy(modes[i])).sqrt())
                .product();
            let amp = g / factorial * volume.powf(1.0 - power as f64 / 2.0) / norm;
            for subset in 0..(1u32 << power) {
                // creators to the left, annihilators to the right
                let mut op = CMatrix::identity(dim, dim);
                for leg in 0..power {
                    if subset & (1 << leg) != 0 {
                        let minus_k: Vec<i32> = ks[leg].iter().map(|x| -x).collect();
                        let m = mode_with_momentum(b, "phi", &minus_k).unwrap();
                        op *= ladder(b, m, LadderKind::Raise);
                    }
                }
                for leg in 0..power {
                    if subset & (1 << leg) == 0 {
                        op *= ladder(b, modes[assignment[leg]], LadderKind::Lower);
                    }
                }
                total += op * Complex64::new(amp, 0.0);
            }
        }
        // next assignment
        let mut i = 0;
        loop {
            if i == power {
                return total;
            }
            assignment[i] += 1;
            if assignment[i] < modes.len() {
                break;
            }
            assignment[i] = 0;
            i += 1;
        }
    }
}

/// `g sum (b^dag_p d^dag_q a_k + a^dag_k d_q b_p)` over `p + q = k`, with
/// amplitude `g V^(-1/2) / sqrt(8 mu_a mu_b mu_d)`.
pub fn oracle_yukawa(b: &FockBasis, g: f64) -> CMatrix {
    let dim = b.len();
    let space = b.space();
    let volume = space.grid().volume();
    let mut total = CMatrix::zeros(dim, dim);
    for &ma in &particle_modes(b, "a") {
        for &mb in &particle_modes(b, "b") {
            for &md in &particle_modes(b, "d") {
                let (ka, kb, kd) = (momentum(b, ma), momentum(b, mb), momentum(b, md));
                if ka.iter().zip(&kb).zip(&kd).any(|((a, p), q)| p + q != *a) {
                    continue;
                }
                let amp = g / volume.sqrt()
                    / (8.0 * space.energy(ma) * space.energy(mb) * space.energy(md)).sqrt();
                let create = ladder(b, mb, LadderKind::Raise)
                    * ladder(b, md, LadderKind::Raise)
                    * ladder(b, ma, LadderKind::Lower);
                let annihilate = ladder(b, ma, LadderKind::Raise)
                    * ladder(b, md, LadderKind::Lower)
                    * ladder(b, mb, LadderKind::Lower);
                total += (create + annihilate) * Complex64::new(amp, 0.0);
            }
        }
    }
    total
}

/// `Pi_n M Pi_n`.
pub fn compress(m: &CMatrix, rank: usize) -> CMatrix {
    let mut out = m.clone();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i >= rank || j >= rank {
                out[(i, j)] = Complex64::new(0.0, 0.0);
            }
        }
    }
    out
}

pub fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn spectral_norm(m: &CMatrix) -> f64 {
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Sparse random hermitian matrix with about `per_row` off-diagonal entries per row.
pub fn random_hermitian(dim: usize, per_row: usize, seed: u64) -> SparseOperator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    for i in 0..dim {
        m[(i, i)] = Complex64::new(rng.random_range(-3.0..3.0), 0.0);
        for _ in 0..per_row / 2 {
            let j = rng.random_range(0..dim);
            if j == i {
                continue;
            }
            let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            m[(i, j)] += z;
            m[(j, i)] += z.conj();
        }
    }
    SparseOperator::from_dense(&m, 0.0)
}

pub fn random_state(dim: usize, seed: u64) -> fockscatter::linalg::CVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = fockscatter::linalg::CVector::from_fn(dim, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let n = v.norm();
    v / Complex64::new(n, 0.0)
}
