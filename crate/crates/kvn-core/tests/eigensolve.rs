//! Eigensolver checks against independently constructed references: FFT
//! symbols worked out by hand, frequency-lattice combinations, and dense
//! factorizations of explicitly materialized matrices.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use kvn_core::{
    dense_oracle, hausdorff_distance, joint_eigenstate, krylov_eigensolve, HamiltonianSystem,
    JointOptions, KvnError, PhaseOperator, PhaseSpaceGrid, ScalarField,
    SpectralOrdering, SpectrumOptions, StateFunction,
};

/// One rotor: a periodic angle axis paired with a truncated action axis.
fn rotor_grid(angle_points: usize, action_points: usize) -> Arc<PhaseSpaceGrid> {
    PhaseSpaceGrid::action_angle(&[angle_points], &[(0.2, 1.8)], &[action_points]).unwrap()
}

/// Discrete frequencies of the spectral derivative on an even-length
/// periodic axis: integer modes with the unmatched Nyquist mode projected
/// out, so its slot contributes a second zero.
fn derivative_modes(points: usize) -> Vec<f64> {
    let half = points / 2;
    let mut modes = Vec::with_capacity(points);
    for k in 0..points {
        let signed = if k < half {
            k as i64
        } else if k == half {
            0 // Nyquist
        } else {
            k as i64 - points as i64
        };
        modes.push(signed as f64);
    }
    modes.sort_by(f64::total_cmp);
    modes
}

#[test]
fn dense_oracle_reproduces_the_fft_symbol_on_a_circle() {
    let grid = rotor_grid(16, 5);
    let op = PhaseOperator::derivative(&grid, 0, C64::new(0.0, -1.0)).unwrap();
    let spectrum = dense_oracle(&op, &grid, None).unwrap();
    assert!(!spectrum.used_general_path);
    assert_eq!(spectrum.pairs.len(), 16 * 5);

    let mut expected = Vec::new();
    for _ in 0..5 {
        expected.extend(derivative_modes(16));
    }
    expected.sort_by(f64::total_cmp);
    let mut got: Vec<f64> = spectrum.pairs.iter().map(|p| p.value.re).collect();
    got.sort_by(f64::total_cmp);
    for (g, e) in got.iter().zip(&expected) {
        assert!((g - e).abs() < 1e-12, "eigenvalue {g} vs mode {e}");
    }
    for p in &spectrum.pairs {
        assert!(p.value.im.abs() < 1e-12);
        assert!(p.residual < 1e-10);
    }
}

#[test]
fn dense_oracle_returns_grid_samples_for_multiplication() {
    let grid = PhaseSpaceGrid::cartesian_box(&[3.0, 2.0], &[6, 5]).unwrap();
    let f = ScalarField::from_fn(&grid, |x| x[0] * x[0] + 0.5 * x[1]);
    let op = PhaseOperator::multiply(&f).unwrap();
    let spectrum = dense_oracle(&op, &grid, None).unwrap();
    assert!(!spectrum.used_general_path);

    let mut samples: Vec<f64> = f.values().to_vec();
    samples.sort_by(f64::total_cmp);
    let mut got: Vec<f64> = spectrum.pairs.iter().map(|p| p.value.re).collect();
    got.sort_by(f64::total_cmp);
    for (g, e) in got.iter().zip(&samples) {
        assert!((g - e).abs() < 1e-12);
    }
}

#[test]
fn dense_oracle_states_its_size_limit() {
    let grid = PhaseSpaceGrid::periodic_box(&[6.0, 6.0], &[128, 128]).unwrap();
    let f = ScalarField::from_fn(&grid, |x| x[0]);
    let op = PhaseOperator::multiply(&f).unwrap();
    match dense_oracle(&op, &grid, None) {
        Err(KvnError::DenseTooLarge { points, cap }) => {
            assert_eq!(points, 128 * 128);
            assert_eq!(cap, 4096);
        }
        other => panic!("expected a size-cap error, got {:?}", other.map(|_| ())),
    }
    let small = PhaseSpaceGrid::cartesian_box(&[1.0, 1.0], &[6, 5]).unwrap();
    let g = ScalarField::from_fn(&small, |x| x[1]);
    let op_small = PhaseOperator::multiply(&g).unwrap();
    match dense_oracle(&op_small, &small, Some(16)) {
        Err(KvnError::DenseTooLarge { points, cap }) => {
            assert_eq!(points, 30);
            assert_eq!(cap, 16);
        }
        other => panic!("expected the custom cap to bind, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn liouville_spectrum_pairs_under_negation() {
    let grid = PhaseSpaceGrid::periodic_box(&[6.0, 6.0], &[24, 24]).unwrap();
    let system = HamiltonianSystem::harmonic_oscillator(1.0, 1.0).unwrap();
    let op = system.liouvillian(&grid).unwrap();
    let spectrum = dense_oracle(&op, &grid, None).unwrap();
    assert!(!spectrum.used_general_path);

    let mut values: Vec<f64> = spectrum.pairs.iter().map(|p| p.value.re).collect();
    values.sort_by(f64::total_cmp);
    let n = values.len();
    for i in 0..n {
        let mirror = -values[n - 1 - i];
        assert!(
            (values[i] - mirror).abs() < 1e-10,
            "negation pairing broke: {} vs {}",
            values[i],
            mirror
        );
    }
}

#[test]
fn krylov_ladder_on_an_action_angle_circle() {
    let grid = rotor_grid(64, 5);
    let omega = 1.3;
    let system = HamiltonianSystem::linear_actions(&[omega]).unwrap();
    let op = system.liouvillian(&grid).unwrap();
    let opts = SpectrumOptions::new(35);
    let spectrum = krylov_eigensolve(&op, &grid, &opts).unwrap();
    assert!(spectrum.converged);
    assert_eq!(spectrum.pairs.len(), 35);

    let mut seen = vec![0usize; 7];
    for p in &spectrum.pairs {
        let ratio = p.value.re / omega;
        let k = ratio.round();
        assert!((ratio - k).abs() * omega < 1e-10, "value {} off-ladder", p.value.re);
        assert!(p.value.im.abs() < 1e-10);
        assert!(k.abs() <= 3.0);
        seen[(k as i64 + 3) as usize] += 1;
    }
    // Ranked by distance from zero: k = 0 carries ten copies (the matched
    // zero mode plus the projected-out unmatched one, times five action
    // lines), |k| = 1 and 2 carry five per sign, and the 35-pair cut lands
    // inside the |k| = 3 tie.
    assert_eq!(seen[3], 10);
    for k in [1usize, 2, 4, 5] {
        assert_eq!(seen[k], 5, "multiplicity at slot {k}");
    }
    assert_eq!(seen[0] + seen[6], 5);
}

#[test]
fn restarted_solver_finds_the_frequency_lattice_top() {
    // Two incommensurate rotors, large enough to force restarted cycles.
    let grid =
        PhaseSpaceGrid::action_angle(&[8, 8], &[(0.2, 1.8), (0.2, 1.8)], &[5, 5]).unwrap();
    let omegas = [1.0, std::f64::consts::SQRT_2];
    let system = HamiltonianSystem::linear_actions(&omegas).unwrap();
    let op = system.liouvillian(&grid).unwrap();
    let mut opts = SpectrumOptions::new(5);
    opts.shift = C64::new(100.0, 0.0);
    let spectrum = krylov_eigensolve(&op, &grid, &opts).unwrap();
    assert!(spectrum.converged);

    // 8-point angle axes carry modes |k| <= 3, so the top of the lattice is
    // 3*omega_1 + 3*omega_2, with a 25-fold action degeneracy above how_many.
    let top = 3.0 * omegas[0] + 3.0 * omegas[1];
    for p in &spectrum.pairs {
        assert!(
            (p.value.re - top).abs() < 1e-8,
            "value {} is not the lattice top {top}",
            p.value.re
        );
        assert!(p.residual < opts.tolerance);
    }
}

#[test]
fn zero_operator_fills_the_request_with_nulls() {
    let grid = rotor_grid(16, 5);
    let f = ScalarField::from_fn(&grid, |_| 0.0);
    let op = PhaseOperator::multiply(&f).unwrap();
    let spectrum = krylov_eigensolve(&op, &grid, &SpectrumOptions::new(5)).unwrap();
    assert!(spectrum.converged);
    assert_eq!(spectrum.pairs.len(), 5);
    for p in &spectrum.pairs {
        assert_eq!(p.value, C64::new(0.0, 0.0));
        assert!(p.residual < 1e-14);
    }
}

#[test]
fn non_self_adjoint_operators_are_rejected_without_the_flag() {
    let grid = rotor_grid(16, 5);
    // A plain angle derivative is anti-self-adjoint.
    let op = PhaseOperator::derivative(&grid, 0, C64::new(1.0, 0.0)).unwrap();
    match krylov_eigensolve(&op, &grid, &SpectrumOptions::new(3)) {
        Err(KvnError::NotSelfAdjoint { residual, tolerance }) => {
            assert!(residual > 0.1, "asymmetry should be order one, got {residual}");
            assert!((tolerance - 1e-6).abs() < 1e-18);
        }
        other => panic!("expected the precheck to fail, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn general_path_recovers_an_anti_self_adjoint_ladder() {
    let grid = rotor_grid(16, 5);
    let op = PhaseOperator::derivative(&grid, 0, C64::new(1.0, 0.0)).unwrap();
    let mut opts = SpectrumOptions::new(4);
    opts.accept_general = true;
    opts.ordering = SpectralOrdering::LargestMagnitude;
    let spectrum = krylov_eigensolve(&op, &grid, &opts).unwrap();
    assert!(spectrum.used_general_path);
    assert_eq!(spectrum.pairs.len(), 4);

    // The symbol is i*k with |k| <= 7: the largest-modulus eigenvalues sit
    // on the imaginary axis at |k| = 7.
    let dense = dense_oracle(&op, &grid, None).unwrap();
    for p in &spectrum.pairs {
        assert!(p.value.re.abs() < 1e-8);
        assert!((p.value.im.abs() - 7.0).abs() < 1e-7, "got {}", p.value);
        let nearest = dense
            .pairs
            .iter()
            .map(|d| (d.value - p.value).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(nearest < 1e-8, "no dense counterpart near {}", p.value);
    }
}

#[test]
fn full_sweep_and_dense_oracle_agree_everywhere() {
    let grid = PhaseSpaceGrid::periodic_box(&[6.0, 6.0], &[24, 24]).unwrap();
    let system = HamiltonianSystem::harmonic_oscillator(1.0, 1.0).unwrap();
    let op = system.liouvillian(&grid).unwrap();
    let dense = dense_oracle(&op, &grid, None).unwrap();
    let mut opts = SpectrumOptions::new(grid.len());
    opts.tolerance = 1e-9;
    let krylov = krylov_eigensolve(&op, &grid, &opts).unwrap();
    assert!(krylov.converged);
    assert_eq!(krylov.pairs.len(), grid.len());
    let d = hausdorff_distance(&krylov.values(), &dense.values());
    assert!(d < 1e-8, "two-route spectral distance {d}");
}

#[test]
fn interior_shift_engages_the_polynomial_filter() {
    // Large enough that the full-dimension path is off; the shift sits deep
    // inside the symmetric mode ladder.
    let grid = rotor_grid(64, 25);
    let system = HamiltonianSystem::linear_actions(&[1.0]).unwrap();
    let op = system.liouvillian(&grid).unwrap();
    let mut opts = SpectrumOptions::new(4);
    opts.shift = C64::new(10.3, 0.0);
    let spectrum = krylov_eigensolve(&op, &grid, &opts).unwrap();
    assert!(spectrum.converged);
    for p in &spectrum.pairs {
        assert!(
            (p.value.re - 10.0).abs() < 1e-8,
            "closest ladder rung to 10.3 is 10, got {}",
            p.value.re
        );
        assert!(p.residual < opts.tolerance);
    }
}

#[test]
fn eigenpair_certificates_hold() {
    let grid = rotor_grid(64, 5);
    let system = HamiltonianSystem::linear_actions(&[1.3]).unwrap();
    let op = system.liouvillian(&grid).unwrap();
    let spectrum = krylov_eigensolve(&op, &grid, &SpectrumOptions::new(10)).unwrap();
    for p in &spectrum.pairs {
        assert!((p.state.norm() - 1.0).abs() < 1e-12);
        let image = op.apply(&p.state).unwrap();
        let mut diff = image.values().to_vec();
        for (d, x) in diff.iter_mut().zip(p.state.values()) {
            *d -= p.value * x;
        }
        let recomputed = StateFunction::from_values(&grid, diff).unwrap().norm();
        assert!(
            (recomputed - p.residual).abs() < 1e-12,
            "stored residual {} vs fresh {}",
            p.residual,
            recomputed
        );
    }
}

#[test]
fn joint_state_picks_the_requested_winding() {
    let grid = PhaseSpaceGrid::periodic_box(&[6.0, 6.0], &[128, 128]).unwrap();
    let system = HamiltonianSystem::harmonic_oscillator(1.0, 1.0).unwrap();
    let flow = system.liouvillian(&grid).unwrap();
    let h = system.hamiltonian_field(&grid).unwrap();
    let angle = ScalarField::from_fn(&grid, |x| x[0].atan2(x[1]));

    let mut opts = JointOptions::new(0.4);
    opts.winding = 1;
    opts.angle = Some(angle.clone());
    let found = joint_eigenstate(&flow, &h, 1.0, 1.0, &opts).unwrap();
    assert!(found.lambda_residual < 1e-5);
    assert!((found.energy - 1.0).abs() < 0.1);

    // Reference: the same mollified shell painted with one unit of winding.
    let shell = StateFunction::mollified_delta_shell(&h, 1.0, 0.4).unwrap();
    let mut vals = shell.state.values().to_vec();
    for (v, a) in vals.iter_mut().zip(angle.values()) {
        *v *= C64::from_polar(1.0, *a);
    }
    let reference = StateFunction::from_values(&grid, vals).unwrap();
    let overlap = reference.inner_product(&found.pair.state).unwrap().norm()
        / (reference.norm() * found.pair.state.norm());
    assert!(overlap > 0.98, "winding-one overlap {overlap}");
}

#[test]
fn joint_state_accepts_the_stationary_shell() {
    let grid = PhaseSpaceGrid::periodic_box(&[6.0, 6.0], &[128, 128]).unwrap();
    let system = HamiltonianSystem::harmonic_oscillator(1.0, 1.0).unwrap();
    let flow = system.liouvillian(&grid).unwrap();
    let h = system.hamiltonian_field(&grid).unwrap();
    let found = joint_eigenstate(&flow, &h, 0.0, 1.0, &JointOptions::new(0.4)).unwrap();
    assert!(found.lambda_residual < 1e-5);
    assert!(found.energy_residual < 0.5);
    let shell = StateFunction::mollified_delta_shell(&h, 1.0, 0.4).unwrap();
    let overlap = shell.state.inner_product(&found.pair.state).unwrap().norm()
        / (shell.state.norm() * found.pair.state.norm());
    assert!(overlap > 0.99, "stationary-shell overlap {overlap}");
}

#[test]
fn joint_state_refuses_an_off_ladder_eigenvalue() {
    let grid = PhaseSpaceGrid::periodic_box(&[6.0, 6.0], &[128, 128]).unwrap();
    let system = HamiltonianSystem::harmonic_oscillator(1.0, 1.0).unwrap();
    let flow = system.liouvillian(&grid).unwrap();
    let h = system.hamiltonian_field(&grid).unwrap();
    match joint_eigenstate(&flow, &h, 0.5, 1.0, &JointOptions::new(0.4)) {
        Err(KvnError::NoJointEigenstate { lambda_residual, .. }) => {
            assert!(
                lambda_residual > 0.05,
                "half-integer flow residual should be stuck, got {lambda_residual}"
            );
        }
        other => panic!("expected no joint eigenstate, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn hausdorff_distance_measures_set_disagreement() {
    let a = [C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
    let b = [C64::new(0.0, 0.0), C64::new(1.0, 0.5)];
    assert_eq!(hausdorff_distance(&a, &a), 0.0);
    assert!((hausdorff_distance(&a, &b) - 0.5).abs() < 1e-15);
    assert_eq!(hausdorff_distance(&a, &b), hausdorff_distance(&b, &a));
    assert_eq!(hausdorff_distance(&[], &[]), 0.0);
    assert!(hausdorff_distance(&a, &[]).is_infinite());
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn hausdorff_is_symmetric_and_detects_identity(
            xs in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..8),
            ys in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..8),
        ) {
            let a: Vec<C64> = xs.iter().map(|&(r, i)| C64::new(r, i)).collect();
            let b: Vec<C64> = ys.iter().map(|&(r, i)| C64::new(r, i)).collect();
            prop_assert_eq!(hausdorff_distance(&a, &b), hausdorff_distance(&b, &a));
            prop_assert_eq!(hausdorff_distance(&a, &a), 0.0);
            // Zero distance means each set is contained in the other.
            if hausdorff_distance(&a, &b) == 0.0 {
                for x in &a {
                    prop_assert!(b.iter().any(|y| (x - y).norm() == 0.0));
                }
            }
        }
    }
}
