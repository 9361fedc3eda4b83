//! The whole pipeline instantiated at `f32`: generation, a short accelerated
//! run, and the verification checks, at tolerances the narrower type can
//! meet. Guards the generic-scalar surface against quiet `f64` assumptions.

mod common;

use common::assert_close;
use reps_core::agd::{accelerated_solve, AgdConfig};
use reps_core::diagnostics::{smoothness_envelope_check, weak_duality_check};
use reps_core::dual::{dual_gradient, dual_value, RegularizedProblem};
use reps_core::mdp::{random_mdp, ReferenceDistribution};
use reps_core::regularizers::{KlSpec, Regularizer};

#[test]
fn the_pipeline_runs_in_single_precision() {
    let m = random_mdp::<f32>(77, 4, 2, 2, 0.9).unwrap();
    let q = ReferenceDistribution::uniform(4, 2);
    let p = RegularizedProblem::new(m, Regularizer::Kl(KlSpec::new(1.5f32, q).unwrap()))
        .unwrap();
    let v0 = reps_core::mdp::ValueVector::zeros(4);
    let j0 = dual_value(&p, &v0).unwrap();
    assert!(j0.is_finite());

    let cfg = AgdConfig::new(500, 0.0, 20.0f32, 100).unwrap();
    let (v, log) = accelerated_solve(&p, &cfg).unwrap();
    assert!(dual_value(&p, &v).unwrap() <= j0);
    let g0 = log.records.first().unwrap().grad_l1;
    let g = dual_gradient(&p, &v).unwrap().norm_l1();
    assert!(g < 0.05 * g0, "gradient only shrank from {g0} to {g}");

    let rep = weak_duality_check(&p, 5.0f32, 50, 9).unwrap();
    assert!(rep.passed, "weak duality in f32: {rep:?}");
    let rep = smoothness_envelope_check(&p, 0.5f32, 50, 9, 1.0).unwrap();
    assert!(rep.passed, "smoothness envelope in f32: {rep:?}");
}

#[test]
fn f32_and_f64_runs_agree_to_single_precision() {
    let m32 = random_mdp::<f32>(123, 3, 2, 2, 0.8).unwrap();
    let m64 = random_mdp::<f64>(123, 3, 2, 2, 0.8).unwrap();
    let p32 = RegularizedProblem::new(
        m32,
        Regularizer::Kl(KlSpec::new(1.0f32, ReferenceDistribution::uniform(3, 2)).unwrap()),
    )
    .unwrap();
    let p64 = RegularizedProblem::new(
        m64,
        Regularizer::Kl(KlSpec::new(1.0f64, ReferenceDistribution::uniform(3, 2)).unwrap()),
    )
    .unwrap();
    let cfg32 = AgdConfig::new(200, 0.0, 10.0f32, 200).unwrap();
    let cfg64 = AgdConfig::new(200, 0.0, 10.0f64, 200).unwrap();
    let (v32, _) = accelerated_solve(&p32, &cfg32).unwrap();
    let (v64, _) = accelerated_solve(&p64, &cfg64).unwrap();
    for s in 0..3 {
        assert_close(v32.values[s] as f64, v64.values[s], 2e-4, "cross-type iterate");
    }
}
