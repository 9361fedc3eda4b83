//! Property-based checks over randomized inputs: validation invariants,
//! flow feasibility, conjugate identities, and projection laws.

mod common;

use common::garnet;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use reps_core::agd::project_linf;
use reps_core::diagnostics::random_policy;
use reps_core::mdp::{
    flow_residual, policy_from_visitation, validate_mdp, visitation_of_policy,
    ReferenceDistribution, ValueVector,
};
use reps_core::regularizers::{
    kl_conjugate, kl_value, tsallis_conjugate, tsallis_value, KlSpec, TsallisSpec,
};
use reps_core::mdp::Visitation;

fn shape() -> impl Strategy<Value = (u64, usize, usize)> {
    (0u64..5000, 2usize..5, 1usize..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_mdps_validate_and_break_detectably(
        (seed, s, a) in shape(),
        corrupt_row in 0usize..5,
    ) {
        let m = garnet(seed, s, a, 2.min(s), 0.9);
        prop_assert!(validate_mdp(&m).is_ok());
        // Breaking one row's normalization is always caught.
        let mut bad = m.clone();
        let row = corrupt_row % s;
        bad.transition[[row, 0, 0]] += 0.25;
        prop_assert!(validate_mdp(&bad).is_err());
    }

    #[test]
    fn policy_visitations_are_flow_feasible(
        (seed, s, a) in shape(),
        policy_seed in 0u64..1000,
    ) {
        let m = garnet(seed, s, a, 2.min(s), 0.85);
        let pi = random_policy(s, a, policy_seed, "prop-policy", 0);
        let lam = visitation_of_policy(&m, &pi).unwrap();
        let res = flow_residual(&m, &lam).unwrap();
        prop_assert!(res.l1 <= 1e-9, "flow residual {}", res.l1);
        // Extraction recovers the policy wherever the state has mass.
        let back = policy_from_visitation(&lam).unwrap();
        let marg = lam.state_marginals();
        for st in 0..s {
            if marg[st] > 1e-9 {
                for ac in 0..a {
                    prop_assert!((back.probs[[st, ac]] - pi.probs[[st, ac]]).abs() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn fenchel_young_and_shift_identities(
        entries in proptest::collection::vec(-5.0f64..5.0, 2..7),
        eta in 0.5f64..4.0,
        alpha in 1.05f64..2.0,
        c in -3.0f64..3.0,
    ) {
        let n = entries.len();
        let u = Array2::from_shape_vec((1, n), entries.clone()).unwrap();
        let shifted = u.mapv(|x| x + c);
        let q = ReferenceDistribution::<f64>::uniform(1, n);

        let ks = KlSpec::new(eta, q.clone()).unwrap();
        let res = kl_conjugate(&u, &ks).unwrap();
        let lam = Visitation::new(res.argmax.clone()).unwrap();
        let inner: f64 = res.argmax.iter().zip(u.iter()).map(|(&l, &x)| l * x).sum();
        let fy = kl_value(&lam, &ks).unwrap() + res.value - inner;
        prop_assert!(fy.abs() <= 1e-8, "KL Fenchel-Young gap {fy}");
        let moved = kl_conjugate(&shifted, &ks).unwrap().value;
        prop_assert!((moved - (res.value + c)).abs() <= 1e-8, "KL shift identity");

        let ts = TsallisSpec::new(eta, alpha, q).unwrap();
        let res = tsallis_conjugate(&u, &ts).unwrap();
        let lam = Visitation::new(res.argmax.clone()).unwrap();
        let inner: f64 = res.argmax.iter().zip(u.iter()).map(|(&l, &x)| l * x).sum();
        let fy = tsallis_value(&lam, &ts).unwrap() + res.value - inner;
        prop_assert!(fy.abs() <= 1e-8, "Tsallis Fenchel-Young gap {fy}");
        let moved = tsallis_conjugate(&shifted, &ts).unwrap().value;
        prop_assert!((moved - (res.value + c)).abs() <= 1e-8, "Tsallis shift identity");
    }

    #[test]
    fn sup_norm_projection_laws(
        entries in proptest::collection::vec(-10.0f64..10.0, 1..6),
        witness in proptest::collection::vec(-1.0f64..1.0, 6),
        radius in 0.1f64..5.0,
    ) {
        let n = entries.len();
        let v = ValueVector::new(Array1::from_vec(entries.clone()));
        let pv = project_linf(&v, radius);
        prop_assert!(pv.norm_linf() <= radius + 1e-15);
        // Idempotence.
        let ppv = project_linf(&pv, radius);
        prop_assert_eq!(&pv, &ppv);
        // Per-coordinate optimality: no point of the ball is closer.
        for i in 0..n {
            let w = witness[i] * radius; // arbitrary in-ball coordinate
            prop_assert!(
                (entries[i] - pv.values[i]).abs() <= (entries[i] - w).abs() + 1e-12
            );
        }
        // Interior points are fixed.
        if v.norm_linf() <= radius {
            prop_assert_eq!(&v, &pv);
        }
    }

    #[test]
    fn conjugate_argmax_always_on_the_simplex(
        entries in proptest::collection::vec(-50.0f64..50.0, 2..7),
        eta in 0.25f64..8.0,
        alpha in 1.1f64..2.0,
    ) {
        let n = entries.len();
        let u = Array2::from_shape_vec((1, n), entries).unwrap();
        let q = ReferenceDistribution::<f64>::uniform(1, n);
        let ks = KlSpec::new(eta, q.clone()).unwrap();
        let r = kl_conjugate(&u, &ks).unwrap();
        let sum: f64 = r.argmax.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-10);
        prop_assert!(r.argmax.iter().all(|&x| x >= 0.0));
        let ts = TsallisSpec::new(eta, alpha, q).unwrap();
        let r = tsallis_conjugate(&u, &ts).unwrap();
        let sum: f64 = r.argmax.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-10);
        prop_assert!(r.argmax.iter().all(|&x| x >= 0.0));
        prop_assert!(r.value.is_finite());
    }
}
