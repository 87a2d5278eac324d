use mpoverify::circuit::{circuit_to_dense, Angle, Circuit, Gate};
use mpoverify::depth::{depth_verifier_2d, find_crossover, CircuitKind, DepthModel};
use mpoverify::mpo::{mpo_to_dense, operator_fidelity, zip_up};
use mpoverify::noise::{amplitude_damping_kraus, depolarizing_channel, dephasing_kraus, Channel};
use mpoverify::qem::{objective, sample_trial_state};
use mpoverify::noise::NoiseModel;
use mpoverify::tensor::{is_isometry, polar_unitary, svd_split, Tensor, C64};
use mpoverify::verifier::{build_verifier, build_verifier_with, VerifierKind};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn circuit_strategy() -> impl Strategy<Value = Circuit> {
    (2usize..=5).prop_flat_map(|n| {
        prop::collection::vec((0u8..6, 0..n, 1..n, -3.0f64..3.0), 1..14).prop_map(move |ops| {
            let mut c = Circuit::new(n);
            for (k, a, off, t) in ops {
                let b = (a + off) % n;
                let g = match k {
                    0 => Gate::h(a),
                    1 => Gate::rz(a, Angle::Value(t)),
                    2 => Gate::ry(a, Angle::Value(t)),
                    3 => Gate::cnot(a, b),
                    4 => Gate::cp(a, b, Angle::Value(t)),
                    _ => Gate::swap(a, b),
                };
                c.push(g).unwrap();
            }
            c
        })
    })
}

fn matrix_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), rows * cols)
        .prop_map(move |v| Tensor::new(vec![rows, cols], v.into_iter().map(|(a, b)| C64::new(a, b)).collect()).unwrap())
}

fn frobenius(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn svd_reconstructs_and_obeys_eckart_young(m in matrix_strategy(6, 8), keep in 1usize..6) {
        let full = svd_split(&m, &[0], None, 0.0).unwrap();
        prop_assert!(full.reconstruct().max_abs_diff(&m) <= 1e-10);
        prop_assert!(is_isometry(&full.left_isometry, &[0], 1e-10).is_isometry);
        let cut = svd_split(&m, &[0], Some(keep), 0.0).unwrap();
        let dropped: f64 = full.singular_values[cut.kept()..].iter().map(|s| s * s).sum::<f64>().sqrt();
        prop_assert!((frobenius(&cut.reconstruct(), &m) - dropped).abs() <= 1e-8);
    }

    #[test]
    fn polar_recovers_unitary_factor(a in matrix_strategy(4, 4), b in matrix_strategy(4, 4)) {
        let u = polar_unitary(&a).unwrap();
        // P = B†B + I is positive definite
        let p = b.adjoint().matmul(&b).unwrap();
        let p = Tensor::from_fn(4, 4, |i, j| p.at(i, j) + if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
        let back = polar_unitary(&u.matmul(&p).unwrap()).unwrap();
        prop_assert!(back.max_abs_diff(&u) <= 1e-8);
    }

    #[test]
    fn dense_circuits_are_unitary(c in circuit_strategy()) {
        let u = circuit_to_dense(&c).unwrap();
        prop_assert!(is_isometry(&u, &[1], 1e-10).is_isometry);
    }

    #[test]
    fn uncapped_mpo_is_exact(c in circuit_strategy()) {
        let m = zip_up(&c, usize::MAX, 1e-14).unwrap();
        let f = operator_fidelity(&mpo_to_dense(&m).unwrap(), &circuit_to_dense(&c).unwrap()).unwrap();
        prop_assert!((f - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn verifier_structure_and_matched_acceptance(c in circuit_strategy(), seed in 0u64..1000) {
        let m = zip_up(&c, usize::MAX, 1e-14).unwrap();
        let n = c.n_qubits();
        let u = circuit_to_dense(&c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for kind in [VerifierKind::Staircase, VerifierKind::Flagged] {
            let vc = build_verifier_with(&m, kind).unwrap();
            prop_assert_eq!(vc.gates().len(), n);
            for g in vc.gates() {
                prop_assert!(is_isometry(&g.matrix, &[1], 1e-10).is_isometry);
            }
            let psi = sample_trial_state(n, &mut rng);
            let r = vc.verify_pair(&psi, &u.apply(&psi)).unwrap();
            prop_assert!(r.impossible || r.output_fidelity >= 1.0 - 1e-8, "{:?}", r);
        }
        let _ = build_verifier(&m).unwrap();
    }

    #[test]
    fn objective_is_a_probability(c in circuit_strategy(), seed in 0u64..1000) {
        let vc = build_verifier_with(&zip_up(&c, usize::MAX, 1e-14).unwrap(), VerifierKind::Flagged).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch: Vec<_> = (0..4).map(|_| sample_trial_state(c.n_qubits(), &mut rng)).collect();
        if let Ok(v) = objective(&c, &vc, &batch, &NoiseModel::noiseless()) {
            prop_assert!((0.0..=1.0 + 1e-9).contains(&v));
            prop_assert!(v >= 1.0 - 1e-8);
        }
    }

    #[test]
    fn composed_channels_stay_tp_and_cp(p in 0.0f64..1.0, g in 0.0f64..1.0, l in 0.0f64..1.0) {
        let ch = depolarizing_channel(1, p)
            .then(&Channel::from_kraus(&amplitude_damping_kraus(g)))
            .then(&Channel::from_kraus(&dephasing_kraus(l)));
        prop_assert!(ch.is_trace_preserving(1e-8));
        prop_assert!(ch.is_completely_positive(1e-8));
    }

    #[test]
    fn verifier_depth_linear_for_any_model(d1 in 0.0f64..4.0, d2 in 0.01f64..4.0, swap in 1u32..5, n in 2usize..500) {
        let m = DepthModel { d1, d2, swap_cost: swap, ..Default::default() };
        for chi in [2, 4, 8] {
            let d = |k| depth_verifier_2d(CircuitKind::Qft, k, chi, &m).unwrap();
            let second = d(n + 2) - 2.0 * d(n + 1) + d(n);
            prop_assert!(second.abs() <= 1e-9 * d(n + 2));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn qft_crossover_ordering_under_any_positive_model(d1 in 0.0f64..3.0, d2 in 0.1f64..3.0, swap in 1u32..5) {
        let m = DepthModel { d1, d2, swap_cost: swap, ..Default::default() };
        let stars: Vec<usize> = [2, 4, 8]
            .iter()
            .map(|&chi| find_crossover(CircuitKind::Qft, chi, &m, 2000).unwrap().n_star.unwrap())
            .collect();
        prop_assert!(stars[0] < stars[1] && stars[1] < stars[2], "{:?}", stars);
    }
}
