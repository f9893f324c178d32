use lattice_nls::classical::{self, ClassicalField, ClassicalModel};
use lattice_nls::su2rep::verify_representation;
use lattice_nls::ybe_verify::{check_rtt, excluded_difference};
use lattice_nls::{bethe, ModelParams, QuantumChain};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn complex() -> impl Strategy<Value = C64> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| C64::new(a, b))
}

/// Components in the unit box; rounding in the monodromy grows with |χ|².
fn field(sites: usize) -> impl Strategy<Value = ClassicalField> {
    proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| C64::new(a, b)), sites)
        .prop_map(|chi| ClassicalField::new(chi).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn classical_determinant_is_field_free(f in field(3), l in complex(), kappa in 0.0..3.0f64, delta in 0.1..1.0f64) {
        let m = ClassicalModel::new(kappa, delta).unwrap();
        let r = classical::check_cl_det(&m, &f, l);
        prop_assert!(r.passed(), "{:?}", r);
    }

    #[test]
    fn hamiltonian_invariant_under_phase_and_translation(f in field(5), theta in 0.0..6.3f64, shift in 1usize..5) {
        let m = ClassicalModel::new(1.0, 0.5).unwrap();
        let small = ClassicalField::new(f.chi.iter().map(|z| z * 0.5).collect()).unwrap();
        let h = classical::build_hc(&m, &small).unwrap();
        let mut rolled = small.chi.clone();
        rolled.rotate_left(shift);
        let h_roll = classical::build_hc(&m, &ClassicalField::new(rolled).unwrap()).unwrap();
        let h_rot = classical::build_hc(&m, &small.rotated(theta)).unwrap();
        prop_assert!((h - h_roll).abs() < 1e-10 * h.abs().max(1.0));
        prop_assert!((h - h_rot).abs() < 1e-10 * h.abs().max(1.0));
    }

    #[test]
    fn rtt_holds_for_random_pairs(l in complex(), mu in complex(), kappa in 0.2..2.0f64) {
        prop_assume!(!excluded_difference(l, mu, kappa, 0.1));
        let c = QuantumChain::new(&ModelParams::new(kappa, 0.5, 2, 3).unwrap()).unwrap();
        let r = check_rtt(&c, l, mu, 1).unwrap();
        prop_assert!(r.passed(), "{:?}", r);
    }

    #[test]
    fn casimir_matches_lowest_weight(kappa in 0.2..3.0f64, delta in 0.2..1.5f64) {
        let v = verify_representation(&ModelParams::new(kappa, delta, 1, 6).unwrap()).unwrap();
        prop_assert!(v.passed(), "{:?}", v);
        let s = -2.0 / (kappa * delta);
        prop_assert!((v.spin - s).abs() < 1e-14);
    }

    #[test]
    fn symmetric_quantum_numbers_give_symmetric_roots(kappa in 0.3..3.0f64) {
        // I = ±1/2 is always admissible for two roots
        let p = ModelParams::new(kappa, 0.5, 5, 2).unwrap();
        let r = bethe::solve_bethe(&p, &[-0.5, 0.5]).unwrap();
        prop_assert!((r.roots[0] + r.roots[1]).norm() < 1e-10);
        prop_assert!(r.final_residual < bethe::TOL_BETHE);
    }
}
