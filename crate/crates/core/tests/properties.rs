//! Randomised invariants of fidelity, partial trace and the fixed-point solvers.

use ctc_clone::brun::{build_ensemble, DEFAULT_MAX_RETRIES, DEFAULT_OVERLAP_FLOOR};
use ctc_clone::ctc::{clone_input, CloneKernel};
use ctc_clone::qmath::{
    fidelity, haar_unitary, is_density, kron, max_abs, partial_trace, random_density_matrix, random_state,
    DensityMatrix, StateVector, CHECK_TOL, FIXED_POINT_TOL,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-8;

fn density(d: usize, rank: usize, seed: u64) -> DensityMatrix {
    DensityMatrix::new(random_density_matrix(d, rank.clamp(1, d), &mut ChaCha8Rng::seed_from_u64(seed))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn fidelity_is_symmetric(d in 1usize..6, r1 in 1usize..6, r2 in 1usize..6, s in any::<u64>()) {
        let (rho, sigma) = (density(d, r1, s), density(d, r2, s ^ 1));
        let (a, b) = (fidelity(&rho, &sigma).unwrap(), fidelity(&sigma, &rho).unwrap());
        prop_assert!((a - b).abs() <= TOL, "{a} vs {b}");
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn fidelity_is_unitarily_invariant(d in 1usize..6, r1 in 1usize..6, r2 in 1usize..6, s in any::<u64>()) {
        let (rho, sigma) = (density(d, r1, s), density(d, r2, s ^ 2));
        let u = haar_unitary(d, &mut ChaCha8Rng::seed_from_u64(s ^ 3));
        let rotate = |m: &DensityMatrix| DensityMatrix::from_noisy(&(&u * m.matrix() * u.adjoint()), 1e-9).unwrap();
        let before = fidelity(&rho, &sigma).unwrap();
        let after = fidelity(&rotate(&rho), &rotate(&sigma)).unwrap();
        prop_assert!((before - after).abs() <= TOL, "{before} vs {after}");
    }

    #[test]
    fn fidelity_is_multiplicative(d1 in 1usize..4, d2 in 1usize..4, ranks in (1usize..4, 1usize..4, 1usize..4, 1usize..4), s in any::<u64>()) {
        let (r1, r2, r3, r4) = ranks;
        let (a1, b1) = (density(d1, r1, s), density(d1, r2, s ^ 4));
        let (a2, b2) = (density(d2, r3, s ^ 5), density(d2, r4, s ^ 6));
        let joint = fidelity(&a1.tensor(&a2), &b1.tensor(&b2)).unwrap();
        let product = fidelity(&a1, &b1).unwrap() * fidelity(&a2, &b2).unwrap();
        prop_assert!((joint - product).abs() <= TOL, "{joint} vs {product}");
    }

    #[test]
    fn partial_trace_never_lowers_fidelity(d1 in 1usize..4, d2 in 1usize..4, r1 in 1usize..10, r2 in 1usize..10, s in any::<u64>()) {
        let d = d1 * d2;
        let (rho, sigma) = (density(d, r1, s), density(d, r2, s ^ 7));
        let full = fidelity(&rho, &sigma).unwrap();
        for keep in [[0usize], [1]] {
            let a = partial_trace(&rho, &[d1, d2], &keep).unwrap();
            let b = partial_trace(&sigma, &[d1, d2], &keep).unwrap();
            prop_assert!(fidelity(&a, &b).unwrap() >= full - TOL);
        }
    }

    #[test]
    fn partial_trace_recovers_product_factors(d1 in 1usize..4, d2 in 1usize..4, d3 in 1usize..3, s in any::<u64>()) {
        let (a, b, c) = (density(d1, d1, s), density(d2, 1, s ^ 8), density(d3, d3, s ^ 9));
        let joint = DensityMatrix::new(kron(&kron(a.matrix(), b.matrix()), c.matrix())).unwrap();
        let dims = [d1, d2, d3];
        prop_assert!(max_abs(&(partial_trace(&joint, &dims, &[1]).unwrap().matrix() - b.matrix())) <= 1e-12);
        let ac = partial_trace(&joint, &dims, &[0, 2]).unwrap();
        prop_assert!(max_abs(&(ac.matrix() - kron(a.matrix(), c.matrix()))) <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solved_fixed_points_are_self_consistent(n in 2usize..7, s in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let states: Vec<StateVector> = (0..n).map(|_| StateVector::new(random_state(n, &mut rng)).unwrap()).collect();
        let ens = build_ensemble(&states, s, DEFAULT_OVERLAP_FLOOR, DEFAULT_MAX_RETRIES).unwrap();
        let psi = StateVector::new(random_state(n, &mut rng)).unwrap();
        let out = clone_input(&ens, &psi, FIXED_POINT_TOL).unwrap();
        let kernel = CloneKernel::new(&ens, &psi).unwrap();
        let rho = out.fixed_point.rho_ctc.matrix();
        prop_assert!(kernel.residual(rho) <= FIXED_POINT_TOL);
        prop_assert!(out.fixed_point.residual <= FIXED_POINT_TOL);
        prop_assert!(is_density(rho, CHECK_TOL));
        prop_assert!(out.f1 <= 1.0 + 1e-9 && out.f2 <= 1.0 + 1e-9);
    }
}
