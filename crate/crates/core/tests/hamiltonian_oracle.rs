mod common;

use num_complex::Complex64;
use proptest::prelude::*;

use common::*;
use fockscatter::fock::{LadderKind, Statistics};
use fockscatter::hamiltonian::{
    assemble_regularized, free_hamiltonian, interaction_matrix, InteractionSpec, Kernel, Leg, Term,
    Vertex,
};
use fockscatter::linalg::CMatrix;
use fockscatter::Error;

#[test]
fn phi_powers_match_field_products() {
    let b = basis(scalar_system(0.8), 1, 1.0, 1.0, 4, None);
    assert!(b.len() <= 50);
    for power in [2usize, 3, 4] {
        let v = interaction_matrix(&phi_power(power, 0.7), &b, b.len()).unwrap().to_dense();
        let oracle = oracle_phi_power(&b, power, 0.7);
        assert!(max_diff(&v, &oracle) < 1e-12, "phi^{power}");
    }
}

#[test]
fn counterterm_matches_phi_squared() {
    let b = basis(scalar_system(1.3), 1, 1.0, 0.5, 3, None);
    let v = interaction_matrix(&counterterm(-0.05), &b, b.len()).unwrap().to_dense();
    assert!(max_diff(&v, &oracle_phi_power(&b, 2, -0.05)) < 1e-12);
}

#[test]
fn yukawa_matches_ladder_products() {
    let b = basis(yukawa_system(1.0, 1.5), 1, 1.0, 1.0, 2, None);
    assert!(b.len() <= 50);
    let v = interaction_matrix(&yukawa(0.3), &b, b.len()).unwrap().to_dense();
    let oracle = oracle_yukawa(&b, 0.3);
    assert!(max_diff(&v, &oracle) < 1e-12);
    assert!(oracle.iter().any(|z| z.norm() > 1e-3));
}

#[test]
fn rank_compression_matches_projected_oracle() {
    let b = phi4_basis();
    let oracle = oracle_phi_power(&b, 4, 0.2);
    for rank in [1, 7, 18, 30] {
        let h = assemble_regularized(&phi_power(4, 0.2), b.clone(), rank).unwrap();
        assert!(max_diff(&h.interaction.to_dense(), &compress(&oracle, rank)) < 1e-12);
        assert!(max_diff(&(h.full.to_dense() - h.a0.to_dense()), &compress(&oracle, rank)) < 1e-12);
    }
}

#[test]
fn free_hamiltonian_is_sum_of_number_operators() {
    let b = basis(yukawa_system(0.9, 1.2), 1, 1.0, 1.0, 2, None);
    let mut h = CMatrix::zeros(b.len(), b.len());
    for m in 0..b.space().len() {
        let n = ladder(&b, m, LadderKind::Raise) * ladder(&b, m, LadderKind::Lower);
        h += n * Complex64::new(b.space().energy(m), 0.0);
    }
    assert!(max_diff(&free_hamiltonian(&b).to_dense(), &h) < 1e-12);
}

#[test]
fn zero_interaction_is_free() {
    let b = phi4_basis();
    let h = assemble_regularized(&InteractionSpec::empty(), b.clone(), b.len()).unwrap();
    assert!(h.is_free());
    assert_eq!(h.full, free_hamiltonian(&b));
}

#[test]
fn custom_table_vertex_and_errors() {
    let b = basis(scalar_system(1.0), 1, 1.0, 1.0, 2, None);
    let mut table = std::collections::BTreeMap::new();
    table.insert(vec![vec![1], vec![-1]], Complex64::new(0.0, 0.25));
    table.insert(vec![vec![-1], vec![1]], Complex64::new(0.0, -0.25));
    let hop = Vertex::new("hop", vec![Leg::raise("phi"), Leg::lower("phi")], Kernel::Table(table))
        .conserving(false);
    let v = interaction_matrix(&InteractionSpec::empty().with_term(Term::Custom(hop)), &b, b.len())
        .unwrap()
        .to_dense();
    let space = b.space();
    let id = space.system().id("phi").unwrap();
    let (plus, minus) = (space.find(id, &[1], 0).unwrap(), space.find(id, &[-1], 0).unwrap());
    let oracle = (ladder(&b, plus, LadderKind::Raise) * ladder(&b, minus, LadderKind::Lower))
        * Complex64::new(0.0, 0.25)
        + (ladder(&b, minus, LadderKind::Raise) * ladder(&b, plus, LadderKind::Lower))
            * Complex64::new(0.0, -0.25);
    assert!(max_diff(&v, &oracle) < 1e-14);

    // not normal ordered
    let bad = Vertex::new("bad", vec![Leg::lower("phi"), Leg::raise("phi")], Kernel::Constant(Complex64::new(1.0, 0.0)));
    let err = interaction_matrix(&InteractionSpec::empty().with_term(Term::Custom(bad)), &b, b.len());
    assert!(matches!(err, Err(Error::InvalidVertex { .. })));

    // a^dag alone is not hermitian
    let lone = Vertex::new("lone", vec![Leg::raise("phi")], Kernel::Constant(Complex64::new(1.0, 0.0))).conserving(false);
    let err = assemble_regularized(&InteractionSpec::empty().with_term(Term::Custom(lone)), b.clone(), b.len());
    assert!(matches!(err, Err(Error::NonHermitian { .. })));

    // massless zero mode
    let massless = basis(scalar_system(0.0), 1, 1.0, 1.0, 2, None);
    assert!(massless.space().system().particle(0).statistics == Statistics::Boson);
    let err = interaction_matrix(&phi_power(4, 1.0), &massless, massless.len());
    assert!(matches!(err, Err(Error::KernelEvaluation { .. })));

    let err = assemble_regularized(&phi_power(4, 1.0), b.clone(), b.len() + 1);
    assert!(matches!(err, Err(Error::RankTooLarge { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn assembly_is_linear_in_couplings(g1 in -2.0f64..2.0, g2 in -2.0f64..2.0) {
        let b = phi4_basis();
        let both = InteractionSpec::empty()
            .with_term(Term::PhiPower { particle: "phi".into(), power: 4, coupling: "g".into() })
            .with_counterterm(Term::MassCounterterm { particle: "phi".into(), coupling: "delta".into() })
            .with_coupling("g", g1)
            .with_coupling("delta", g2);
        let v = interaction_matrix(&both, &b, b.len()).unwrap().to_dense();
        let parts = interaction_matrix(&phi_power(4, 1.0), &b, b.len()).unwrap().to_dense() * Complex64::new(g1, 0.0)
            + interaction_matrix(&counterterm(1.0), &b, b.len()).unwrap().to_dense() * Complex64::new(g2, 0.0);
        prop_assert!(max_diff(&v, &parts) < 1e-12);
    }

    #[test]
    fn assembled_operators_are_hermitian(g in -3.0f64..3.0, power in 2usize..=4, rank in 0usize..=30) {
        let h = assemble_regularized(&phi_power(power, g), phi4_basis(), rank).unwrap();
        let scale = h.full.max_abs().max(1.0);
        prop_assert!(h.full.hermiticity_defect() <= 1e-12 * scale);
    }

    #[test]
    fn rank_refinement_only_adds_entries(g in 0.01f64..1.0, n in 1usize..29) {
        let b = phi4_basis();
        let small = assemble_regularized(&phi_power(4, g), b.clone(), n).unwrap();
        let large = assemble_regularized(&phi_power(4, g), b, n + 1).unwrap();
        for (r, c, z) in small.interaction.entries() {
            prop_assert!((large.interaction.get(r, c) - z).norm() == 0.0);
        }
        prop_assert!(large.interaction.nnz() >= small.interaction.nnz());
    }
}
