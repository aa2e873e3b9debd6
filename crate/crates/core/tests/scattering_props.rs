mod common;

use num_complex::Complex64;
use proptest::prelude::*;

use common::*;
use fockscatter::evolution::{dense_oracle_exponential, Propagator};
use fockscatter::hamiltonian::{assemble_regularized, InteractionSpec};
use fockscatter::linalg::{max_abs, CMatrix, CVector};
use fockscatter::scattering::*;

fn diag_phase(e: &[f64], t: f64) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(
        e.len(),
        e.iter().map(|&x| Complex64::from_polar(1.0, x * t)),
    ))
}

#[test]
fn zero_coupling_gives_identity_scattering() {
    let b = phi4_basis();
    let h = assemble_regularized(&InteractionSpec::empty(), b.clone(), b.len()).unwrap();
    let p = Propagator::new(h.full.clone(), 1e-12);
    let opts = PlateauOptions::uniform(1.0, 10, 3, 1e-8);
    let wp = wave_operator_time_plateau(&h, &p, Direction::Plus, &opts).unwrap();
    let wm = wave_operator_time_plateau(&h, &p, Direction::Minus, &opts).unwrap();
    let id = CMatrix::identity(b.len(), b.len());
    assert_eq!(wp.matrix, id);
    assert!(wp.converged && wp.isometry_defect == 0.0 && wp.intertwining_defect == 0.0);
    let s = scattering_operator(&wp, &wm).unwrap();
    assert_eq!(s.s_matrix, id);
    assert_eq!(s.unitarity_defect, Some(0.0));
    assert_eq!(s.vacuum_persistence, Complex64::new(1.0, 0.0));

    let wa = wave_operator_adiabatic(&h, &p, Direction::Plus, &AdiabaticOptions::new(vec![0.5, 0.25], 1e-10)).unwrap();
    assert!(max_abs(&(wa.matrix - id)) < 1e-9);
}

#[test]
fn plateau_scattering_matches_closed_form() {
    // With both plateaus at the same T, W-^dag W+ = e^{iA0 T} e^{-2iHT} e^{iA0 T}.
    let h = phi4_instance(0.05);
    let p = Propagator::new(h.full.clone(), 1e-13);
    let mut opts = PlateauOptions::uniform(1.5, 4, 4, 1e-12);
    opts.tol = 1e-30;
    let wp = wave_operator_time_plateau(&h, &p, Direction::Plus, &opts).unwrap();
    let wm = wave_operator_time_plateau(&h, &p, Direction::Minus, &opts).unwrap();
    assert!(!wp.converged);
    let t = wp.plateau_time.unwrap();
    assert_eq!(Some(t), wm.plateau_time);
    let s = scattering_operator(&wp, &wm).unwrap().s_matrix;
    let e = h.energies();
    let mut closed = diag_phase(e, t) * dense_oracle_exponential(&h.full.to_dense(), 2.0 * t, 1000).unwrap() * diag_phase(e, t);
    for i in 0..h.dim() {
        for j in 0..h.dim() {
            if i == 0 || j == 0 {
                closed[(i, j)] = Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0);
            }
        }
    }
    assert!(max_abs(&(s - closed)) < 1e-9);
}

#[test]
fn single_damping_matches_abel_closed_form() {
    // eps int_0^inf e^{-eps s} e^{i w s} ds = eps / (eps - i w)
    let h = phi4_instance(0.3);
    let p = Propagator::new(h.full.clone(), 1e-12);
    let eps = 0.3;
    let w = wave_operator_adiabatic(&h, &p, Direction::Minus, &AdiabaticOptions::new(vec![eps], 1e-11)).unwrap();
    let eig = p.eigen().unwrap();
    let e = h.energies();
    for u in 1..h.dim() {
        let mut col = CVector::zeros(h.dim());
        for j in 0..h.dim() {
            let omega = eig.values[j] - e[u];
            let weight = Complex64::new(eps, 0.0) / Complex64::new(eps, -omega);
            col += eig.vectors.column(j) * (eig.vectors[(u, j)].conj() * weight);
        }
        let diff = (w.matrix.column(u) - col).map(|z| z.norm()).max();
        assert!(diff < 1e-9, "column {u}: {diff:e}");
    }
}

#[test]
fn column_subsets_agree_with_full_operator() {
    let h = phi4_instance(0.01);
    let p = Propagator::new(h.full.clone(), 1e-12);
    // two grid points, one drift value: both runs stop at the same time
    let grid = PlateauOptions::new(vec![1.0, 2.5], 2, 1e-20);
    let full = wave_operator_time_plateau(&h, &p, Direction::Plus, &grid).unwrap();
    let mut opts = grid.clone();
    opts.columns = Some(vec![9, 0, 4]);
    let part = wave_operator_time_plateau(&h, &p, Direction::Plus, &opts).unwrap();
    assert_eq!(part.columns, vec![0, 4, 9]);
    for (j, &u) in part.columns.iter().enumerate() {
        assert!((part.matrix.column(j) - full.matrix.column(u)).map(|z| z.norm()).max() < 1e-12);
    }
    let bad = PlateauOptions { columns: Some(vec![30]), ..PlateauOptions::uniform(1.0, 3, 2, 1e-5) };
    assert!(wave_operator_time_plateau(&h, &p, Direction::Plus, &bad).is_err());
    let s = scattering_operator(&part, &wave_operator_time_plateau(&h, &p, Direction::Minus, &opts).unwrap()).unwrap();
    assert_eq!(s.unitarity_defect, None);
}

#[test]
fn omega_apply_reproduces_plateau_columns() {
    let h = phi4_instance(0.02);
    let p = Propagator::new(h.full.clone(), 1e-13);
    let w = wave_operator_time_plateau(&h, &p, Direction::Minus, &PlateauOptions::uniform(0.5, 6, 3, 1e-20)).unwrap();
    let t = w.plateau_time.unwrap();
    for u in [1, 5, 17] {
        let mut v = CVector::zeros(h.dim());
        v[u] = Complex64::new(1.0, 0.0);
        let x = omega_apply(&p, h.energies(), &v, t).unwrap();
        assert!((x - w.matrix.column(u)).map(|z| z.norm()).max() < 1e-11);
    }
}

#[test]
fn range_projection_is_an_orthogonal_projector() {
    let h = phi4_instance(0.2);
    let p = Propagator::new(h.full.clone(), 1e-12);
    let w = wave_operator_time_plateau(&h, &p, Direction::Plus, &PlateauOptions::uniform(1.0, 5, 2, 1e-3)).unwrap();
    let r = range_projection(&w, 1e-10).unwrap();
    let pm = r.projector.to_dense();
    assert!(max_abs(&(&pm * &pm - &pm)) < 1e-10);
    assert!(max_abs(&(pm.adjoint() - &pm)) < 1e-12);
    assert_eq!(r.rank, h.dim());
    let angles = principal_angles(&r, &r);
    assert!(angles.iter().all(|&a| a < 1e-6));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn plateau_operators_are_partial_isometries_off_the_vacuum(g in 1e-3f64..0.5, t in 0.5f64..6.0) {
        // Omega(t) is exactly isometric on P_ac; the only Gram defect is the vacuum row.
        let h = phi4_instance(g);
        let p = Propagator::new(h.full.clone(), 1e-12);
        let w = wave_operator_time_plateau(&h, &p, Direction::Plus, &PlateauOptions::new(vec![t], 2, 1e-3)).unwrap();
        let gram = w.matrix.adjoint() * &w.matrix;
        for i in 1..h.dim() {
            for j in 1..h.dim() {
                let target = if i == j { 1.0 } else { 0.0 };
                prop_assert!((gram[(i, j)] - Complex64::new(target, 0.0)).norm() < 1e-10);
            }
        }
        let vacuum_row = (1..h.dim()).map(|j| gram[(0, j)].norm()).fold(0.0, f64::max);
        prop_assert!((w.isometry_defect - vacuum_row).abs() < 1e-10);
    }

    #[test]
    fn intertwining_defect_is_time_independent(g in 1e-3f64..0.5, t1 in 0.5f64..6.0, t2 in 0.5f64..6.0) {
        // (A W - W A0) u = e^{iHt} V e^{-iA0 t} u has the norm of V u at every t.
        let h = phi4_instance(g);
        let p = Propagator::new(h.full.clone(), 1e-12);
        let at = |t: f64| wave_operator_time_plateau(&h, &p, Direction::Plus, &PlateauOptions::new(vec![t], 2, 1e-3)).unwrap();
        let (w1, w2) = (at(t1), at(t2));
        let v = h.interaction.to_dense();
        let e = h.energies();
        for u in 1..h.dim() {
            let d1 = h.full.to_dense() * w1.matrix.column(u) - w1.matrix.column(u) * Complex64::new(e[u], 0.0);
            let d2 = h.full.to_dense() * w2.matrix.column(u) - w2.matrix.column(u) * Complex64::new(e[u], 0.0);
            prop_assert!((d1.norm() - v.column(u).norm()).abs() < 1e-10);
            prop_assert!((d2.norm() - v.column(u).norm()).abs() < 1e-10);
        }
    }
}
