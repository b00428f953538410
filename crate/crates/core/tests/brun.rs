use ctc_clone::brun::*;
use ctc_clone::qmath::{
    basis_vector, outer_basis, random_state, unitarity_defect, ComplexMatrix, StateVector, C64, ZERO,
};
use ctc_clone::sphere::{bloch_ket, embed, sample_haar_point, solve_thomson, SpherePoint, DEFAULT_MAX_ITERS};
use ctc_clone::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_states(n: usize, seed: u64) -> Vec<StateVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StateVector::new(random_state(n, &mut rng)).unwrap()).collect()
}

fn qubit_states(n: usize, seed: u64) -> Vec<StateVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| embed(&bloch_ket(sample_haar_point(&mut rng)), n).unwrap()).collect()
}

/// `<j|U|psi>` computed entry by entry.
fn amplitude(u: &ComplexMatrix, j: usize, psi: &StateVector) -> C64 {
    (0..psi.dim()).map(|c| u[(j, c)] * psi.amplitudes()[c]).sum()
}

#[test]
fn orthogonal_basis_pair() {
    let states = vec![StateVector::basis(2, 0), StateVector::basis(2, 1)];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let u0 = build_u_k(&states, 0, &mut rng).unwrap();
    assert!((&u0 * basis_vector(2, 0) - basis_vector(2, 0)).norm() < 1e-15);
}

#[test]
fn defining_constraint_and_unitarity() {
    for n in [2, 3, 5, 10, 20] {
        let states = random_states(n, n as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + n as u64);
        for k in 0..n {
            let u = build_u_k(&states, k, &mut rng).unwrap();
            assert!(unitarity_defect(&u) <= 1e-12, "n = {n}, k = {k}");
            assert!((amplitude(&u, k, &states[k]) - C64::new(1.0, 0.0)).norm() <= 1e-12);
        }
    }
}

#[test]
fn single_state_ensemble() {
    let psi = StateVector::from_slice(&[C64::from_polar(1.0, 0.7)]).unwrap();
    let ens = build_ensemble(&[psi], 3, DEFAULT_OVERLAP_FLOOR, 1).unwrap();
    assert!((verify_overlap_condition(&ens) - 1.0).abs() < 1e-15);
}

#[test]
fn hand_built_violation_has_zero_overlap() {
    // U_0 fixes |0> but swaps |1> and |2>, so <1|U_0|psi_1> = <1|2> = 0.
    let states: Vec<StateVector> = (0..3).map(|k| StateVector::basis(3, k)).collect();
    let swap12 = outer_basis(3, 0, 0) + outer_basis(3, 1, 2) + outer_basis(3, 2, 1);
    let unitaries = vec![swap12, ComplexMatrix::identity(3, 3), ComplexMatrix::identity(3, 3)];
    let ens = UnitaryEnsemble::from_parts_unchecked(states.clone(), unitaries.clone(), 0);
    assert!(verify_overlap_condition(&ens).abs() < 1e-12);
    assert!(UnitaryEnsemble::from_parts(states, unitaries, 0).is_err());
}

#[test]
fn zero_and_plus_form_a_valid_ensemble() {
    let zero = StateVector::basis(2, 0);
    let plus = bloch_ket(SpherePoint::new(std::f64::consts::FRAC_PI_2, 0.0).unwrap());
    let ens = build_ensemble(&[zero, plus], 5, DEFAULT_OVERLAP_FLOOR, DEFAULT_MAX_RETRIES).unwrap();
    assert!(ens.min_overlap > 0.0);
    assert_eq!(ens.min_overlap, verify_overlap_condition(&ens));
    assert!(UnitaryEnsemble::from_parts(ens.states.clone(), ens.unitaries.clone(), ens.seed).is_ok());
}

#[test]
fn ensembles_are_deterministic_in_the_seed() {
    let states = qubit_states(6, 2);
    let a = build_ensemble(&states, 11, DEFAULT_OVERLAP_FLOOR, DEFAULT_MAX_RETRIES).unwrap();
    let b = build_ensemble(&states, 11, DEFAULT_OVERLAP_FLOOR, DEFAULT_MAX_RETRIES).unwrap();
    assert_eq!(a, b);
    let c = build_ensemble(&states, 12, DEFAULT_OVERLAP_FLOOR, DEFAULT_MAX_RETRIES).unwrap();
    assert_ne!(a.unitaries, c.unitaries);
}

#[test]
fn impossible_floor_reports_best_overlap() {
    let states = qubit_states(4, 9);
    match build_ensemble(&states, 1, 0.999, 3) {
        Err(Error::OverlapConditionUnsatisfied { best, floor }) => {
            assert!(best > 0.0 && best < 0.999);
            assert_eq!(floor, 0.999);
        }
        other => panic!("expected overlap failure, got {other:?}"),
    }
}

#[test]
fn coincident_or_misshapen_states_are_rejected() {
    let s = StateVector::basis(2, 0);
    assert!(build_ensemble(&[s.clone(), s.clone()], 0, DEFAULT_OVERLAP_FLOOR, 1).is_err());
    assert!(matches!(
        build_ensemble(&[StateVector::basis(3, 0), StateVector::basis(3, 1)], 0, DEFAULT_OVERLAP_FLOOR, 1),
        Err(Error::DimensionMismatch(_))
    ));
}

#[test]
fn relabelling_states_permutes_the_ensemble() {
    let n = 5;
    let ens = build_ensemble(&qubit_states(n, 4), 8, DEFAULT_OVERLAP_FLOOR, DEFAULT_MAX_RETRIES).unwrap();
    let perm = [3, 0, 4, 1, 2];
    // P|perm[j]> = |j>
    let mut p = ComplexMatrix::from_element(n, n, ZERO);
    for (j, &pj) in perm.iter().enumerate() {
        p[(j, pj)] = C64::new(1.0, 0.0);
    }
    let states: Vec<StateVector> = perm.iter().map(|&i| ens.states[i].clone()).collect();
    let unitaries: Vec<ComplexMatrix> = perm.iter().map(|&i| &p * &ens.unitaries[i]).collect();
    let permuted = UnitaryEnsemble::from_parts(states, unitaries, ens.seed).unwrap();
    assert!((permuted.min_overlap - ens.min_overlap).abs() < 1e-14);
}

#[test]
fn thomson_alphabet_at_n65_clears_the_floor() {
    let mut rng = ChaCha8Rng::seed_from_u64(65);
    let set = solve_thomson(65, &mut rng, 1, DEFAULT_MAX_ITERS).unwrap();
    let ens = build_ensemble(&set.embedded_states(), 65, DEFAULT_OVERLAP_FLOOR, DEFAULT_MAX_RETRIES).unwrap();
    assert!(ens.min_overlap >= DEFAULT_OVERLAP_FLOOR);
    for (k, u) in ens.unitaries.iter().enumerate() {
        assert!(unitarity_defect(u) <= 1e-10);
        assert!((amplitude(u, k, &ens.states[k]) - C64::new(1.0, 0.0)).norm() <= 1e-10);
    }
}

#[test]
fn cache_round_trip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ensemble.json");
    let ens = build_ensemble(&qubit_states(4, 1), 21, DEFAULT_OVERLAP_FLOOR, DEFAULT_MAX_RETRIES).unwrap();
    ens.save(&path, DEFAULT_OVERLAP_FLOOR).unwrap();
    let (back, floor) = UnitaryEnsemble::load(&path).unwrap();
    assert_eq!(back, ens);
    assert_eq!(floor, DEFAULT_OVERLAP_FLOOR);

    let mut json: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    json["unitaries"][1][0] = serde_json::json!(json["unitaries"][1][0].as_f64().unwrap() + 1e-3);
    std::fs::write(&path, json.to_string()).unwrap();
    assert!(matches!(UnitaryEnsemble::load(&path), Err(Error::InvalidCache { .. })));
    std::fs::write(&path, "{}").unwrap();
    assert!(matches!(UnitaryEnsemble::load(&path), Err(Error::InvalidCache { .. })));
}
