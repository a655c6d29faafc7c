//! Property tests of the standing invariants over randomized model
//! parameters: detailed balance, vectorization consistency, stationarity
//! and physicality of propagated states.

use num_complex::Complex64 as C64;
use proptest::prelude::*;
use qmarkov::davies::{build_davies, Superoperator};
use qmarkov::dynamics::propagate;
use qmarkov::equilibrium::gibbs;
use qmarkov::linalg::CMat;
use qmarkov::model::{BathSpec, SystemSpec};
use qmarkov::resonance::{bohr_decompose, level_shift, multiset_match_dev, resonance_energies};
use qmarkov::util::{random_density, random_hermitian, SplitMix64};

fn arb_bath() -> impl Strategy<Value = BathSpec> {
    (0.2f64..5.0, 0u32..3, prop_oneof![Just(1u32), Just(2u32)], 0.1f64..10.0)
        .prop_map(|(beta, n, m, c1)| BathSpec::new_analytic(beta, n, m, c1).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn detailed_balance_holds_across_the_family(bath in arb_bath(), u in 0.01f64..5.0) {
        let h_plus = bath.h_hat(u);
        let h_minus = bath.h_hat(-u);
        prop_assert!(h_plus >= 0.0 && h_minus >= 0.0);
        if h_plus > 0.0 {
            let dev = (h_minus - (-bath.beta() * u).exp() * h_plus).abs();
            prop_assert!(dev <= 1e-10 * h_plus, "dev {dev} at u {u}");
        }
    }

    #[test]
    fn correlation_function_has_conjugation_symmetry(bath in arb_bath(), t in 0.05f64..6.0) {
        let cp = bath.correlation_function(t).unwrap();
        let cm = bath.correlation_function(-t).unwrap();
        prop_assert!((cm - cp.conj()).norm() <= 1e-10 * (1.0 + cp.norm()));
    }

    #[test]
    fn vectorized_action_matches_direct_action(seed in any::<u64>(), n in 2usize..5) {
        let mut rng = SplitMix64::new(seed);
        let a = CMat::from_fn(n, n, |_, _| rng.next_c64());
        let b = CMat::from_fn(n, n, |_, _| rng.next_c64());
        let rho = CMat::from_fn(n, n, |_, _| rng.next_c64());
        let s = Superoperator::left_right(&a, &b);
        let direct = a.matmul(&rho).matmul(&b);
        let via_vec = s.apply_to(&rho);
        prop_assert!(direct.sub(&via_vec).max_abs() <= 1e-12 * (1.0 + direct.max_abs()));
    }

    #[test]
    fn heisenberg_dual_respects_the_trace_pairing(seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let n = 3;
        let s = Superoperator::from_matrix(n, CMat::from_fn(n * n, n * n, |_, _| rng.next_c64()));
        let d = s.heisenberg_dual();
        let rho = CMat::from_fn(n, n, |_, _| rng.next_c64());
        let x = CMat::from_fn(n, n, |_, _| rng.next_c64());
        let lhs = s.apply_to(&rho).matmul(&x).trace();
        let rhs = rho.matmul(&d.apply_to(&x)).trace();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gibbs_state_is_stationary_for_random_qubits(
        delta in 0.3f64..3.0,
        beta in 0.3f64..3.0,
        c1 in 0.2f64..5.0,
        seed in any::<u64>(),
    ) {
        let mut rng = SplitMix64::new(seed);
        let g = random_hermitian(2, &mut rng);
        let sys = SystemSpec::qubit(delta, g).unwrap();
        let bath = BathSpec::new_analytic(beta, 0, 1, c1).unwrap();
        let dav = build_davies(&sys, &bath, 0.1).unwrap();
        let rho0 = gibbs(sys.h_sys(), beta).unwrap();
        let res = dav.k_super().apply_to(rho0.rho()).fro_norm();
        let kf = dav.k_super().matrix().fro_norm();
        prop_assert!(res <= 1e-9 * kf.max(1e-9), "residual {res} vs {kf}");
    }

    #[test]
    fn resonance_spectrum_reassembles_the_generator(
        delta in 0.5f64..2.5,
        beta in 0.4f64..2.0,
        lambda in 0.01f64..0.3,
        seed in any::<u64>(),
    ) {
        let mut rng = SplitMix64::new(seed);
        let g = random_hermitian(2, &mut rng);
        let sys = SystemSpec::qubit(delta, g).unwrap();
        let bath = BathSpec::new_analytic(beta, 0, 1, 1.0).unwrap();
        let dav = build_davies(&sys, &bath, lambda).unwrap();
        let sectors = bohr_decompose(&sys, qmarkov::resonance::BOHR_TOL).unwrap();
        let ls = level_shift(&dav, &sectors).unwrap();
        let rd = resonance_energies(&dav, &ls, lambda).unwrap();
        let (gen_evals, _) = dav.generator().matrix().eig().unwrap();
        let dev = multiset_match_dev(&rd.generator_spectrum(), &gen_evals);
        let scale = dav.generator().matrix().max_abs().max(1.0);
        prop_assert!(dev <= 1e-8 * scale, "spectrum mismatch {dev}");
    }

    #[test]
    fn propagated_states_stay_physical(
        seed in any::<u64>(),
        lambda in 0.05f64..0.4,
        t in 0.0f64..50.0,
    ) {
        let mut rng = SplitMix64::new(seed);
        let sys = SystemSpec::qubit(1.0, qmarkov::model::sigma_x()).unwrap();
        let bath = BathSpec::new_analytic(1.0, 0, 1, 1.0).unwrap();
        let dav = build_davies(&sys, &bath, lambda).unwrap();
        let rho0 = random_density(2, &mut rng);
        let traj = propagate(&dav.generator(), &rho0, &[0.0, t, 2.0 * t + 1.0]).unwrap();
        let (trace_dev, herm_dev, min_eig) = traj.state_quality();
        prop_assert!(trace_dev <= 1e-10);
        prop_assert!(herm_dev <= 1e-10);
        prop_assert!(min_eig >= -1e-9);
    }

    #[test]
    fn w_map_composes_as_a_semigroup(
        t in 0.0f64..6.0,
        s in 0.0f64..6.0,
        lambda in 0.02f64..0.2,
    ) {
        let sys = SystemSpec::qubit(1.0, qmarkov::model::sigma_x()).unwrap();
        let bath = BathSpec::new_analytic(1.0, 0, 1, 1.0).unwrap();
        let dav = build_davies(&sys, &bath, lambda).unwrap();
        let sectors = bohr_decompose(&sys, qmarkov::resonance::BOHR_TOL).unwrap();
        let ls = level_shift(&dav, &sectors).unwrap();
        let rd = resonance_energies(&dav, &ls, lambda).unwrap();
        let lhs = rd.w_map(t + s);
        let rhs = rd.w_map(t).compose(&rd.w_map(s));
        prop_assert!(lhs.matrix().sub(rhs.matrix()).max_abs() <= 1e-9);
    }
}

#[test]
fn choi_of_random_cpt_exponentials_is_psd() {
    // deterministic sweep rather than proptest: eigensolves dominate runtime
    let sys = SystemSpec::qubit(1.3, qmarkov::model::sigma_x()).unwrap();
    let bath = BathSpec::new_analytic(0.8, 1, 2, 2.0).unwrap();
    let dav = build_davies(&sys, &bath, 0.25).unwrap();
    let prop = qmarkov::dynamics::Propagator::new(&dav.generator()).unwrap();
    for &t in &[0.1, 1.0, 8.0, 50.0] {
        let rep = qmarkov::davies::cpt_report(&prop.exp_t(t), 3);
        assert!(rep.min_choi_eig >= -1e-9, "t={t}: {}", rep.min_choi_eig);
        assert!(rep.trace_dev <= 1e-10);
    }
    let _ = C64::new(0.0, 0.0);
}
