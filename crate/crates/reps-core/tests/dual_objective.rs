//! Dual objective contracts: advantage algebra, the gradient/flow-residual
//! identity, finite-difference agreement, Lagrangian structure, and the
//! guarantee constants on frozen inputs.

mod common;

use common::*;
use ndarray::Array1;
use reps_core::diagnostics::{finite_difference_gradient, random_policy, random_value_in_ball};
use reps_core::dual::*;
use reps_core::error::Error;
use reps_core::mdp::{flow_residual, visitation_of_policy, ValueVector};
use reps_core::regularizers::{KlSpec, Regularizer, TsallisSpec};
use reps_core::mdp::ReferenceDistribution;

fn vv(vals: &[f64]) -> ValueVector<f64> {
    ValueVector::new(Array1::from_vec(vals.to_vec()))
}

#[test]
fn advantage_hand_cases() {
    // Deterministic cycle: A[s,a] = r - v_s + gamma v_next.
    let m = two_state_cycle(0.5);
    let adv = advantage(&m, &vv(&[2.0, -1.0])).unwrap();
    assert_close(adv.table[[0, 0]], -1.5, 1e-15, "cycle A[0,0]");
    assert_close(adv.table[[1, 0]], 2.0, 1e-15, "cycle A[1,0]");
    // Stay/switch grid, v = (1, 2).
    let m = stay_switch(0.5);
    let adv = advantage(&m, &vv(&[1.0, 2.0])).unwrap();
    assert_close(adv.table[[0, 0]], 0.2 - 1.0 + 0.5, 1e-15, "A[0,stay]");
    assert_close(adv.table[[0, 1]], 0.9 - 1.0 + 1.0, 1e-15, "A[0,switch]");
    assert_close(adv.table[[1, 0]], 0.6 - 2.0 + 1.0, 1e-15, "A[1,stay]");
    assert_close(adv.table[[1, 1]], 0.1 - 2.0 + 0.5, 1e-15, "A[1,switch]");
    assert!(matches!(
        advantage(&m, &vv(&[1.0])),
        Err(Error::ShapeMismatch(_))
    ));
}

#[test]
fn dual_value_matches_written_out_formula() {
    // two_state_cycle(0.5) with KL(eta = 1, uniform q): at v = (2, -1),
    // J_D = (1-gamma) <mu, v> + log(q . e^A) + 1
    //     = 0.5 * 2 + log(0.5 e^{-1.5} + 0.5 e^2) + 1.
    let p = kl_problem(two_state_cycle(0.5), 1.0);
    let jd = dual_value(&p, &vv(&[2.0, -1.0])).unwrap();
    assert_close(jd, 3.3366032377126755, 1e-14, "dual value hand case");
}

#[test]
fn gradient_is_flow_residual_of_candidate_and_sums_to_zero() {
    // The dual gradient at v is exactly the negated flow violation of the
    // conjugate maximizer lam(A^v) (the residual is outflow minus inflow,
    // the gradient its mirror image); in particular its entries sum to zero.
    for seed in 0..10u64 {
        let m = garnet(300 + seed, 4, 3, 2, 0.9);
        for reg in [0, 1] {
            let p = if reg == 0 {
                kl_problem(m.clone(), 1.5)
            } else {
                tsallis_problem(m.clone(), 1.5, 1.5)
            };
            let v = random_value_in_ball(4, 2.0, 400 + seed, "dual-grad", reg as u64);
            let g = dual_gradient(&p, &v).unwrap();
            let total: f64 = g.values.iter().sum();
            assert!(total.abs() <= 1e-10, "gradient sums to {total}");
            let lam = candidate_primal(&p, &v).unwrap();
            let res = flow_residual(&p.mdp, &lam).unwrap();
            for s in 0..4 {
                assert_close(
                    g.values[s],
                    -res.per_state[s],
                    1e-12,
                    "gradient equals negated flow residual",
                );
            }
            assert_close(g.norm_l1(), res.l1, 1e-12, "l1 norms agree");
        }
    }
}

#[test]
fn gradient_matches_central_differences() {
    for seed in 0..6u64 {
        let s = 3 + (seed % 3) as usize;
        let m = garnet(500 + seed, s, 2 + (seed % 2) as usize, 2, 0.85);
        for reg in [0, 1] {
            let p = if reg == 0 {
                kl_problem(m.clone(), 2.0)
            } else {
                tsallis_problem(m.clone(), 2.0, 1.25 + 0.25 * (seed % 3) as f64)
            };
            let v = random_value_in_ball(s, 1.5, 600 + seed, "fd-probe", reg as u64);
            let g = dual_gradient(&p, &v).unwrap();
            let fd = finite_difference_gradient(&p, &v, 1e-5).unwrap();
            let scale = g.norm_linf().max(1.0);
            let err = g
                .values
                .iter()
                .zip(fd.values.iter())
                .fold(0.0f64, |acc, (&a, &b)| acc.max((a - b).abs()));
            assert!(
                err / scale <= 1e-6,
                "FD mismatch {err:.3e} (scale {scale:.3e}) at seed {seed} reg {reg}"
            );
        }
    }
}

#[test]
fn lagrangian_structure() {
    let m = stay_switch(0.6);
    for reg in [0, 1] {
        let p = if reg == 0 {
            kl_problem(m.clone(), 1.5)
        } else {
            tsallis_problem(m.clone(), 1.5, 2.0)
        };
        // Flow-feasible visitation: L(lam, v) is v-independent and equals
        // the regularized primal objective.
        let pi = random_policy(2, 2, 41, "lagrangian-policy", reg as u64);
        let lam = visitation_of_policy(&m, &pi).unwrap();
        let v1 = vv(&[0.7, -1.2]);
        let v2 = vv(&[-3.0, 0.4]);
        let l1 = lagrangian(&p, &lam, &v1).unwrap();
        let l2 = lagrangian(&p, &lam, &v2).unwrap();
        assert_close(l1, l2, 1e-11, "feasible Lagrangian ignores v");
        let primal = primal_regularized_value(&p, &lam).unwrap();
        assert_close(l1, primal, 1e-11, "feasible Lagrangian equals primal");
        // Envelope: maximizing over lam at fixed v gives J_D(v), attained
        // at the conjugate maximizer; any feasible lam sits below.
        for v in [&v1, &v2] {
            let jd = dual_value(&p, v).unwrap();
            let best = candidate_primal(&p, v).unwrap();
            assert_close(jd, lagrangian(&p, &best, v).unwrap(), 1e-9, "envelope attained");
            assert!(l1 <= jd + 1e-9, "feasible point below the envelope");
        }
        // Affinity in v at fixed lam (any lam on the simplex).
        let free = candidate_primal(&p, &vv(&[0.3, 0.9])).unwrap();
        let t = 0.3;
        let mid = vv(&[
            (1.0 - t) * v1.values[0] + t * v2.values[0],
            (1.0 - t) * v1.values[1] + t * v2.values[1],
        ]);
        let la = lagrangian(&p, &free, &v1).unwrap();
        let lb = lagrangian(&p, &free, &v2).unwrap();
        let lm = lagrangian(&p, &free, &mid).unwrap();
        assert_close(lm, (1.0 - t) * la + t * lb, 1e-12, "Lagrangian affine in v");
    }
}

#[test]
fn theory_constants_frozen_kl() {
    // S = 5, A = 2, uniform reference (beta = 0.1), gamma = 0.9, eta = 1,
    // rho = 0.05:
    //   c   = 1 + log(1/(rho^3 beta))      = 1 + log(80000)
    //   c'  = log(SA/(beta rho))           = log(2000)
    //   c'' = 1 + log(SA/(beta^2 rho^4))   = 1 + log(1.6e8)
    //   D   = (1 + c') / (1 - gamma)
    let m = garnet(42, 5, 2, 2, 0.9);
    let p = kl_problem(m, 1.0);
    let tc = theory_constants(&p, 0.05).unwrap();
    assert_close(tc.c, 12.289781913656018, 1e-12, "KL c");
    assert_close(tc.c_prime, 7.600902459542082, 1e-12, "KL c'");
    assert_close(tc.c_double_prime, 19.890684373198102, 1e-12, "KL c''");
    assert_close(tc.radius, 86.00902459542084, 1e-12, "KL D");
    assert_close(tc.smoothness, 6.0, 1e-15, "KL smoothness (S+1) eta");
    // Smoothness scales linearly in eta.
    let p2 = kl_problem(garnet(42, 5, 2, 2, 0.9), 2.0);
    assert_close(smoothness(&p2), 12.0, 1e-15, "KL smoothness at eta = 2");
}

#[test]
fn theory_constants_frozen_tsallis() {
    // Same MDP, Tsallis eta = 4, alpha = 2, rho = 0.05:
    //   scale = 1/(eta (alpha-1) beta^(alpha-1)) = 2.5
    //   c     = scale (max(alpha-1, 2/rho^(alpha-1)) + 2) = 2.5 * 42 = 105
    //   c'    = 2 scale = 5,  c'' = c + c' = 110
    //   D     = (1 + c')/(1 - gamma) = 60,  smoothness = eta S A / alpha = 20
    let m = garnet(42, 5, 2, 2, 0.9);
    let p = tsallis_problem(m, 4.0, 2.0);
    let tc = theory_constants(&p, 0.05).unwrap();
    assert_close(tc.c, 105.0, 1e-12, "Tsallis c");
    assert_close(tc.c_prime, 5.0, 1e-12, "Tsallis c'");
    assert_close(tc.c_double_prime, 110.0, 1e-12, "Tsallis c''");
    assert_close(tc.radius, 60.0, 1e-12, "Tsallis D");
    assert_close(tc.smoothness, 20.0, 1e-12, "Tsallis smoothness eta S A / alpha");
}

#[test]
fn theory_constants_reject_bad_floor() {
    let p = kl_problem(garnet(42, 5, 2, 2, 0.9), 1.0);
    assert!(matches!(theory_constants(&p, 0.0), Err(Error::BadRho)));
    assert!(matches!(theory_constants(&p, -0.1), Err(Error::BadRho)));
    assert!(matches!(theory_constants(&p, 0.25), Err(Error::BadRho)));
    assert!(theory_constants(&p, 0.2).is_ok(), "rho = 1/S is allowed");
}

#[test]
fn soft_weights_are_normalized_against_reference() {
    for seed in 0..8u64 {
        let m = garnet(700 + seed, 4, 3, 2, 0.9);
        for reg in [0, 1] {
            let p = if reg == 0 {
                kl_problem(m.clone(), 2.5)
            } else {
                tsallis_problem(m.clone(), 2.5, 1.75)
            };
            let v = random_value_in_ball(4, 3.0, 800 + seed, "weights", reg as u64);
            let w = soft_weights(&p, &v).unwrap();
            let q = p.regularizer.reference().q.clone();
            let total: f64 = w.b.iter().zip(q.iter()).map(|(&b, &qv)| b * qv).sum();
            assert_close(total, 1.0, 1e-10, "sum b q = 1");
            assert!(w.b.iter().all(|&b| b >= 0.0), "weights nonnegative");
            assert!(w.normalizer.is_finite());
        }
    }
}

#[test]
fn candidate_primal_is_near_feasible_at_a_solved_point() {
    // After enough accelerated iterations the candidate visitation at the
    // dual iterate is nearly flow-feasible (the gradient is its violation).
    use reps_core::agd::{accelerated_solve, AgdConfig};
    let p = kl_problem(two_state_cycle(0.5), 2.0);
    let cfg = AgdConfig::new(4000, 0.0, 50.0, 1000).unwrap();
    let (v, _log) = accelerated_solve(&p, &cfg).unwrap();
    let lam = candidate_primal(&p, &v).unwrap();
    let res = flow_residual(&p.mdp, &lam).unwrap();
    assert!(res.l1 <= 1e-6, "flow violation {:.3e} too large", res.l1);
    let g = dual_gradient(&p, &v).unwrap();
    assert_close(g.norm_l1(), res.l1, 1e-12, "gradient l1 equals violation l1");
}

#[test]
fn problem_construction_validates_shapes() {
    let m = two_state_cycle(0.5); // 2 states, 1 action
    let q = ReferenceDistribution::<f64>::uniform(2, 3); // wrong action count
    let reg = Regularizer::Kl(KlSpec::new(1.0, q).unwrap());
    assert!(matches!(
        RegularizedProblem::new(m.clone(), reg),
        Err(Error::ShapeMismatch(_))
    ));
    let q = ReferenceDistribution::<f64>::uniform(2, 1);
    let reg = Regularizer::Tsallis(TsallisSpec::new(1.0, 2.0, q).unwrap());
    assert!(RegularizedProblem::new(m, reg).is_ok());
}
