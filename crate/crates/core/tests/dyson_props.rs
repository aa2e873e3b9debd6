mod common;

use num_complex::Complex64;
use proptest::prelude::*;

use common::*;
use fockscatter::dyson::*;
use fockscatter::evolution::{Method, Propagator};
use fockscatter::hamiltonian::assemble_regularized;
use fockscatter::linalg::{max_abs, unitarity_defect, CMatrix};

fn exact(h: &fockscatter::hamiltonian::RegularizedHamiltonian, t: f64, t0: f64) -> CMatrix {
    let p = Propagator::new(h.full.clone(), 1e-13).with_method(Method::DenseExponential);
    propagator_interaction_picture(h, &p, t, t0).unwrap()
}

#[test]
fn first_order_term_matches_closed_form_integral() {
    // -i V[u,v] int_{t0}^{t} e^{i w s} ds with w = E_u - E_v
    let h = phi4_instance(0.4);
    let g = InteractionPictureGenerator::new(&h).unwrap();
    let (t, t0) = (1.7, -0.4);
    let term = dyson_term(&g, 1, t, t0, &QuadratureSpec::new(32)).unwrap();
    let e = h.energies();
    let v = h.interaction.to_dense();
    let mut closed = CMatrix::zeros(h.dim(), h.dim());
    for u in 0..h.dim() {
        for w in 0..h.dim() {
            let omega = e[u] - e[w];
            let integral = if omega.abs() < 1e-12 {
                Complex64::new(t - t0, 0.0)
            } else {
                (Complex64::new(0.0, omega * t).exp() - Complex64::new(0.0, omega * t0).exp())
                    / Complex64::new(0.0, omega)
            };
            closed[(u, w)] = Complex64::new(0.0, -1.0) * v[(u, w)] * integral;
        }
    }
    assert!(max_abs(&(term - closed)) < 1e-13);
}

#[test]
fn partial_sums_converge_to_the_propagator() {
    let h = phi4_instance(0.3);
    let g = InteractionPictureGenerator::new(&h).unwrap();
    let series = time_ordered_exponential(&g, 1.0, 0.0, 5, &QuadratureSpec::new(20), 1e-10).unwrap();
    let u = exact(&h, 1.0, 0.0);
    let errors: Vec<f64> = series.partial_sums.iter().map(|s| max_abs(&(s - &u))).collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    assert!(errors[5] < 1e-6);
    let (m, diff) = series.cube_check.unwrap();
    assert_eq!(m, 2);
    assert!(diff < 1e-10);
}

#[test]
fn rank_zero_and_empty_interval_are_trivial() {
    let b = phi4_basis();
    let h = assemble_regularized(&phi_power(4, 1.0), b.clone(), 0).unwrap();
    let g = InteractionPictureGenerator::new(&h).unwrap();
    let series = time_ordered_exponential(&g, 2.0, 0.0, 3, &QuadratureSpec::new(8), 1e-10).unwrap();
    let id = CMatrix::identity(b.len(), b.len());
    assert!(series.partial_sums.iter().all(|s| *s == id));
    let h = phi4_instance(1.0);
    let g = InteractionPictureGenerator::new(&h).unwrap();
    let series = time_ordered_exponential(&g, 0.5, 0.5, 3, &QuadratureSpec::new(8), 1e-10).unwrap();
    assert_eq!(series.partial_sums[3], id);
    assert!(time_ordered_exponential(&g, 0.0, 0.5, 3, &QuadratureSpec::new(8), 1e-10).is_err());
}

#[test]
fn damped_matrix_is_unitary_and_born_dominated_at_weak_coupling() {
    let b = basis(yukawa_system(1.0, 1.5), 1, 1.0, 1.0, 3, Some(5.0));
    let h = assemble_regularized(&yukawa(0.02), b.clone(), b.len()).unwrap();
    let eps = 0.5;
    let mut s = damped_scattering_matrix(&h, &DampedOptions::new(eps)).unwrap();
    assert!(unitarity_defect(&s) < 1e-10);
    force_vacuum(&mut s);
    let born = smatrix_first_order(&h, eps).unwrap();
    let e = h.energies();
    let mut checked = 0;
    for (r, c, _) in h.interaction.entries() {
        if r == 0 || c == 0 || (e[r] - e[c]).abs() < 1.0 {
            continue;
        }
        let ratio = s[(r, c)].norm() / born[(r, c)].norm();
        assert!((ratio - 1.0).abs() < 0.05, "({r},{c}) ratio {ratio}");
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn default_damping_follows_the_level_spacing() {
    let h = phi4_instance(0.1);
    let mut levels = h.energies().to_vec();
    levels.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let mean_gap = (levels[levels.len() - 1] - levels[0]) / (levels.len() - 1) as f64;
    assert!((default_damping(&h) - 4.0 * mean_gap).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn first_order_error_scales_quadratically(seed in 0u64..100) {
        // ||U - U^(1)|| at g and g/2 differ by a factor near 4
        let g0 = 0.05 + (seed as f64) * 1e-3;
        let err = |g: f64| {
            let h = phi4_instance(g);
            let gen = InteractionPictureGenerator::new(&h).unwrap();
            let series = time_ordered_exponential(&gen, 1.0, 0.0, 1, &QuadratureSpec::new(24), 1e-12).unwrap();
            spectral_norm(&(exact(&h, 1.0, 0.0) - &series.partial_sums[1]))
        };
        let ratio = err(g0) / err(g0 / 2.0);
        prop_assert!((ratio - 4.0).abs() < 0.4, "ratio {}", ratio);
    }
}
