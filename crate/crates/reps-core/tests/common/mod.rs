//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use ndarray::{Array1, Array2, Array3};
use reps_core::dual::RegularizedProblem;
use reps_core::mdp::{Mdp, ReferenceDistribution};
use reps_core::regularizers::{KlSpec, Regularizer, TsallisSpec};

/// One state, one action, self-loop, reward 0.5, discount 0.9.
/// Closed forms: v = 0.5 / (1 - 0.9) = 5, occupancy = 1.
pub fn single_state() -> Mdp<f64> {
    Mdp::new(
        Array3::from_shape_vec((1, 1, 1), vec![1.0]).unwrap(),
        Array2::from_shape_vec((1, 1), vec![0.5]).unwrap(),
        Array1::from_vec(vec![1.0]),
        0.9,
    )
    .unwrap()
}

/// Two states, one action, deterministic cycle 0 -> 1 -> 0, rewards (1, 0),
/// all initial mass on state 0.
/// Closed forms at discount 0.5: v = (4/3, 2/3), state visitation (2/3, 1/3).
pub fn two_state_cycle(discount: f64) -> Mdp<f64> {
    Mdp::new(
        Array3::from_shape_vec((2, 1, 2), vec![0.0, 1.0, 1.0, 0.0]).unwrap(),
        Array2::from_shape_vec((2, 1), vec![1.0, 0.0]).unwrap(),
        Array1::from_vec(vec![1.0, 0.0]),
        discount,
    )
    .unwrap()
}

/// Two states, two actions: action 0 stays, action 1 switches states;
/// uniform initial distribution.
pub fn stay_switch(discount: f64) -> Mdp<f64> {
    let transition = Array3::from_shape_vec(
        (2, 2, 2),
        vec![
            1.0, 0.0, // s0 a0 stays
            0.0, 1.0, // s0 a1 switches
            0.0, 1.0, // s1 a0 stays
            1.0, 0.0, // s1 a1 switches
        ],
    )
    .unwrap();
    let reward = Array2::from_shape_vec((2, 2), vec![0.2, 0.9, 0.6, 0.1]).unwrap();
    Mdp::new(transition, reward, Array1::from_vec(vec![0.5, 0.5]), discount).unwrap()
}

/// Seeded random instance shorthand.
pub fn garnet(seed: u64, s: usize, a: usize, branching: usize, discount: f64) -> Mdp<f64> {
    reps_core::mdp::random_mdp(seed, s, a, branching, discount).unwrap()
}

/// KL problem with the uniform reference.
pub fn kl_problem(m: Mdp<f64>, eta: f64) -> RegularizedProblem<f64> {
    let q = ReferenceDistribution::uniform(m.n_states, m.n_actions);
    let reg = Regularizer::Kl(KlSpec::new(eta, q).unwrap());
    RegularizedProblem::new(m, reg).unwrap()
}

/// Tsallis problem with the uniform reference.
pub fn tsallis_problem(m: Mdp<f64>, eta: f64, alpha: f64) -> RegularizedProblem<f64> {
    let q = ReferenceDistribution::uniform(m.n_states, m.n_actions);
    let reg = Regularizer::Tsallis(TsallisSpec::new(eta, alpha, q).unwrap());
    RegularizedProblem::new(m, reg).unwrap()
}

#[track_caller]
pub fn assert_close(actual: f64, expected: f64, tol: f64, what: &str) {
    assert!(
        (actual - expected).abs() <= tol,
        "{what}: got {actual}, expected {expected} (tol {tol})"
    );
}
