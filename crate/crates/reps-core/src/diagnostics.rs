//! Independent oracles and verifiable-gap checks.
//!
//! Everything here either computes a ground truth by a route disjoint from
//! the solvers (value iteration, finite differences, exhaustive policy
//! sweeps) or packages an inequality the theory promises into a
//! [`GapReport`] that states what was measured, what the bound was, and
//! whether it held.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agd::{accelerated_solve, AgdConfig};
use crate::dual::{
    dual_gradient, dual_value, primal_regularized_value, smoothness, theory_constants,
    candidate_primal, RegularizedProblem,
};
use crate::error::{Error, Result};
use crate::logging::{IterateLog, SgdLog};
use crate::mdp::{
    policy_from_visitation, policy_value, visitation_of_policy, Mdp, Policy, ValueVector,
    Visitation,
};
use crate::rng;
use crate::scalar::Scalar;
use crate::sgd::{conditional_mean_gradient, draw_transitions, empirical_model};

/// Slack on the weak-duality inequality.
pub const DUALITY_SLACK: f64 = 1e-9;
/// Slack on the policy-extraction inequality.
pub const EXTRACTION_SLACK: f64 = 1e-7;
/// Slack on envelope and certificate inequalities.
pub const ENVELOPE_SLACK: f64 = 1e-9;

/// Ground truth for the unregularized control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSolution<T> {
    pub v_star: ValueVector<T>,
    /// A deterministic optimal policy (ties broken toward the lowest action
    /// index).
    pub pi_star: Policy<T>,
    pub iterations: u64,
    /// Final Bellman residual `||T v - v||_inf`.
    pub residual: T,
}

/// Outcome of one verifiable inequality: `passed` iff
/// `gap <= bound + (check-specific slack)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub check: String,
    pub gap: f64,
    pub bound: f64,
    pub passed: bool,
    pub context: String,
}

impl GapReport {
    /// One JSON object per line, suitable for a `.jsonl` report stream.
    pub fn json_line(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }
}

fn bellman_backup<T: Scalar>(m: &Mdp<T>, v: &ValueVector<T>) -> (ValueVector<T>, T) {
    let mut out = ValueVector::zeros(m.n_states);
    let mut diff = T::zero();
    for s in 0..m.n_states {
        let mut best = T::neg_infinity();
        for a in 0..m.n_actions {
            let mut q = m.reward[[s, a]];
            for s2 in 0..m.n_states {
                q += m.discount * m.transition[[s, a, s2]] * v.values[s2];
            }
            if q > best {
                best = q;
            }
        }
        out.values[s] = best;
        diff = diff.max((best - v.values[s]).abs());
    }
    (out, diff)
}

/// Value iteration to Bellman residual `tol`, with the greedy policy of the
/// final iterate.
pub fn value_iteration<T: Scalar>(m: &Mdp<T>, tol: T) -> Result<OptimalSolution<T>> {
    if !tol.is_finite() || tol <= T::zero() {
        return Err(Error::BadParameter("tol must be finite and positive"));
    }
    let mut v = ValueVector::zeros(m.n_states);
    let mut iterations = 0u64;
    loop {
        let (next, diff) = bellman_backup(m, &v);
        v = next;
        iterations += 1;
        if diff <= tol {
            break;
        }
        if iterations >= 100_000_000 {
            // Unreachable for discount < 1; a guard against parameter abuse.
            return Err(Error::NonFiniteObjective);
        }
    }
    let (_, residual) = bellman_backup(m, &v);
    let mut actions = vec![0usize; m.n_states];
    for s in 0..m.n_states {
        let mut best = T::neg_infinity();
        for a in 0..m.n_actions {
            let mut q = m.reward[[s, a]];
            for s2 in 0..m.n_states {
                q += m.discount * m.transition[[s, a, s2]] * v.values[s2];
            }
            // Strict improvement keeps the lowest-index maximizer.
            if q > best {
                best = q;
                actions[s] = a;
            }
        }
    }
    let pi_star = Policy::deterministic(m.n_states, m.n_actions, &actions)?;
    Ok(OptimalSolution { v_star: v, pi_star, iterations, residual })
}

/// `||v^pi - v*||_inf` of a policy against the oracle.
pub fn policy_suboptimality<T: Scalar>(
    m: &Mdp<T>,
    pi: &Policy<T>,
    oracle: &OptimalSolution<T>,
) -> Result<T> {
    let v = policy_value(m, pi)?;
    Ok(v
        .values
        .iter()
        .zip(oracle.v_star.values.iter())
        .map(|(&a, &b)| (a - b).abs())
        .fold(T::zero(), |acc, x| acc.max(x)))
}

/// Central-difference gradient of the dual objective, step `h` per
/// coordinate. Independent of the closed-form gradient path.
pub fn finite_difference_gradient<T: Scalar>(
    p: &RegularizedProblem<T>,
    v: &ValueVector<T>,
    h: T,
) -> Result<ValueVector<T>> {
    if !h.is_finite() || h <= T::zero() {
        return Err(Error::BadParameter("h must be finite and positive"));
    }
    let mut g = ValueVector::zeros(v.len());
    let mut probe = v.clone();
    for s in 0..v.len() {
        let base = probe.values[s];
        probe.values[s] = base + h;
        let up = dual_value(p, &probe)?;
        probe.values[s] = base - h;
        let down = dual_value(p, &probe)?;
        probe.values[s] = base;
        g.values[s] = (up - down) / (T::from_real(2.0) * h);
    }
    Ok(g)
}

/// Value vector with i.i.d. entries uniform in `[-radius, radius]`, drawn in
/// f64 for cross-type reproducibility.
pub fn random_value_in_ball<T: Scalar>(
    n: usize,
    radius: T,
    master: u64,
    label: &str,
    index: u64,
) -> ValueVector<T> {
    let mut r = rng::substream(master, label, index);
    let rad = radius.to_real();
    ValueVector::new(
        (0..n).map(|_| T::from_real((r.random::<f64>() * 2.0 - 1.0) * rad)).collect(),
    )
}

/// Random stochastic policy with Dirichlet(1) rows.
pub fn random_policy<T: Scalar>(
    n_states: usize,
    n_actions: usize,
    master: u64,
    label: &str,
    index: u64,
) -> Policy<T> {
    let mut r = rng::substream(master, label, index);
    let mut probs = Array2::zeros((n_states, n_actions));
    for s in 0..n_states {
        let row = rng::simplex_point(&mut r, n_actions);
        for a in 0..n_actions {
            probs[[s, a]] = T::from_real(row[a]);
        }
    }
    Policy { probs }
}

/// Weak duality: every dual value dominates every feasible regularized
/// primal value. Samples `pairs` pairs of (value vector in the sup-norm
/// ball, random policy), checks `J_P(lam^pi) <= J_D(v)` pairwise, and
/// reports the largest `J_P - J_D` observed.
pub fn weak_duality_check<T: Scalar>(
    p: &RegularizedProblem<T>,
    radius: T,
    pairs: usize,
    seed: u64,
) -> Result<GapReport> {
    let mut worst = f64::NEG_INFINITY;
    let mut worst_pair = 0usize;
    for i in 0..pairs {
        let v = random_value_in_ball(p.n_states(), radius, seed, "duality-value", i as u64);
        let pi = random_policy(p.n_states(), p.n_actions(), seed, "duality-policy", i as u64);
        let lam = visitation_of_policy(&p.mdp, &pi)?;
        let jp = primal_regularized_value(p, &lam)?.to_real();
        let jd = dual_value(p, &v)?.to_real();
        if jp - jd > worst {
            worst = jp - jd;
            worst_pair = i;
        }
    }
    Ok(GapReport {
        check: "weak_duality".into(),
        gap: worst,
        bound: 0.0,
        passed: worst <= DUALITY_SLACK,
        context: format!(
            "{} sampled (v, policy) pairs, radius {}, seed {}, worst pair {} (slack {:e})",
            pairs,
            radius.to_real(),
            seed,
            worst_pair,
            DUALITY_SLACK
        ),
    })
}

/// Policy-extraction bound: for any `v` in the dual ball, extracting the
/// candidate primal's policy loses at most
/// `||grad J_D(v)||_1 ((1+c)/(1-gamma) + ||v||_inf)` of regularized primal
/// value relative to the optimum (approximated by the candidate primal at a
/// solved reference point `v_ref`).
pub fn extraction_gap_check<T: Scalar>(
    p: &RegularizedProblem<T>,
    v_tilde: &ValueVector<T>,
    rho: T,
    v_ref: &ValueVector<T>,
) -> Result<GapReport> {
    let tc = theory_constants(p, rho)?;
    let g = dual_gradient(p, v_tilde)?;
    let eps_hat = g.norm_l1();
    let candidate = candidate_primal(p, v_tilde)?;
    let pi = policy_from_visitation(&candidate)?;
    let lam_pi = visitation_of_policy(&p.mdp, &pi)?;
    let achieved = primal_regularized_value(p, &lam_pi)?;
    let lam_star = candidate_primal(p, v_ref)?;
    let best = primal_regularized_value(p, &lam_star)?;
    let one_minus_gamma = T::one() - p.mdp.discount;
    let allowance =
        eps_hat * ((T::one() + tc.c) / one_minus_gamma + v_tilde.norm_linf());
    let gap = (best - allowance - achieved).to_real();
    Ok(GapReport {
        check: "extraction_gap".into(),
        gap,
        bound: 0.0,
        passed: gap <= EXTRACTION_SLACK,
        context: format!(
            "grad_l1 {:e}, allowance {:e}, achieved {:e}, best {:e}, rho {:e} (slack {:e})",
            eps_hat.to_real(),
            allowance.to_real(),
            achieved.to_real(),
            best.to_real(),
            rho.to_real(),
            EXTRACTION_SLACK
        ),
    })
}

/// Measured visitation floor `rho = min_pi min_s sum_a lam^pi[s, a]` over a
/// policy family: the uniform policy, every deterministic policy when there
/// are at most 1024 of them, and `n_policies` random ones.
pub fn visitation_floor<T: Scalar>(m: &Mdp<T>, n_policies: usize, seed: u64) -> Result<T> {
    let mut rho = T::infinity();
    let mut consider = |pi: &Policy<T>| -> Result<()> {
        let lam = visitation_of_policy(m, pi)?;
        let marg = lam.state_marginals();
        for &x in marg.iter() {
            rho = rho.min(x);
        }
        Ok(())
    };
    consider(&Policy::uniform(m.n_states, m.n_actions))?;
    let deterministic_count = (m.n_actions as u128).checked_pow(m.n_states as u32);
    if let Some(count) = deterministic_count {
        if count <= 1024 {
            let mut actions = vec![0usize; m.n_states];
            for idx in 0..count {
                let mut rem = idx;
                for slot in actions.iter_mut() {
                    *slot = (rem % m.n_actions as u128) as usize;
                    rem /= m.n_actions as u128;
                }
                consider(&Policy::deterministic(m.n_states, m.n_actions, &actions)?)?;
            }
        }
    }
    for i in 0..n_policies {
        consider(&random_policy(m.n_states, m.n_actions, seed, "visitation-floor", i as u64))?;
    }
    if !(rho > T::zero()) || !rho.is_finite() {
        return Err(Error::BadRho);
    }
    Ok(rho)
}

/// Smoothness envelope of the dual objective:
/// `J_D(v') <= J_D(v) + <g(v), v'-v> + (modulus/2) ||v'-v||^2` over sampled
/// pairs in the ball, with the norm the modulus is stated in (sup-norm for
/// KL, Euclidean for Tsallis). `modulus_factor` rescales the modulus (1.0
/// checks the real constant; deliberately wrong factors are for
/// negative-control runs).
pub fn smoothness_envelope_check<T: Scalar>(
    p: &RegularizedProblem<T>,
    radius: T,
    trials: usize,
    seed: u64,
    modulus_factor: f64,
) -> Result<GapReport> {
    let alpha = smoothness(p) * T::from_real(modulus_factor);
    let kl = matches!(p.regularizer, crate::regularizers::Regularizer::Kl(_));
    let mut worst = f64::NEG_INFINITY;
    for i in 0..trials {
        let v = random_value_in_ball(p.n_states(), radius, seed, "envelope-base", i as u64);
        let w = random_value_in_ball(p.n_states(), radius, seed, "envelope-probe", i as u64);
        let g = dual_gradient(p, &v)?;
        let jv = dual_value(p, &v)?;
        let jw = dual_value(p, &w)?;
        let delta = ValueVector::new(&w.values - &v.values);
        let inner: T =
            g.values.iter().zip(delta.values.iter()).map(|(&a, &b)| a * b).sum();
        let dist = if kl { delta.norm_linf() } else { delta.norm_l2() };
        let envelope = jv + inner + alpha / T::from_real(2.0) * dist * dist;
        let violation = (jw - envelope).to_real();
        if violation > worst {
            worst = violation;
        }
    }
    Ok(GapReport {
        check: "smoothness_envelope".into(),
        gap: worst,
        bound: 0.0,
        passed: worst <= ENVELOPE_SLACK,
        context: format!(
            "{} pairs, radius {}, modulus {:e} (factor {}), seed {} (slack {:e})",
            trials,
            radius.to_real(),
            alpha.to_real(),
            modulus_factor,
            seed,
            ENVELOPE_SLACK
        ),
    })
}

/// Accelerated-rate envelope: from a cold start, the gap after `T`
/// iterations is at most `4 alpha ||v*||_2^2 / T^2` (the start is `v = 0`,
/// so `||x_0 - v*||_2 = ||v*||_2`). Checked at each horizon against a solved
/// reference optimum.
pub fn accelerated_rate_check<T: Scalar>(
    p: &RegularizedProblem<T>,
    radius: T,
    horizons: &[u64],
    v_star: &ValueVector<T>,
    jd_star: T,
) -> Result<GapReport> {
    let alpha = smoothness(p);
    let dist2 = v_star.norm_l2().powi(2);
    let mut worst = f64::NEG_INFINITY;
    let mut detail = String::new();
    for &horizon in horizons {
        let cfg = AgdConfig::new(horizon, T::zero(), radius, horizon.max(1))?;
        let (y, _) = accelerated_solve(p, &cfg)?;
        let gap = dual_value(p, &y)? - jd_star;
        let bound = T::from_real(4.0) * alpha * dist2
            / T::from_real((horizon * horizon) as f64);
        let violation = (gap - bound).to_real();
        if violation > worst {
            worst = violation;
        }
        detail.push_str(&format!(
            "T={}: gap {:e} vs bound {:e}; ",
            horizon,
            gap.to_real(),
            bound.to_real()
        ));
    }
    Ok(GapReport {
        check: "accelerated_rate".into(),
        gap: worst,
        bound: 0.0,
        passed: worst <= ENVELOPE_SLACK,
        context: format!("{}(slack {:e})", detail, ENVELOPE_SLACK),
    })
}

/// Gradient certificate along a recorded run: at every logged iterate,
/// `||grad||_1 <= sqrt(2 alpha (J_D - J_D*))`. Needs the optimal dual value.
pub fn certificate_check<T: Scalar>(
    p: &RegularizedProblem<T>,
    log: &IterateLog<T>,
    jd_star: T,
) -> Result<GapReport> {
    let alpha = smoothness(p);
    let mut worst = f64::NEG_INFINITY;
    let mut worst_t = 0u64;
    for r in &log.records {
        let eps = (r.jd - jd_star).max(T::zero());
        let bound = (T::from_real(2.0) * alpha * eps).sqrt();
        let violation = (r.grad_l1 - bound).to_real();
        if violation > worst {
            worst = violation;
            worst_t = r.t;
        }
    }
    Ok(GapReport {
        check: "gradient_certificate".into(),
        gap: worst,
        bound: 0.0,
        passed: worst <= ENVELOPE_SLACK,
        context: format!(
            "{} logged iterates, worst at t={} (slack {:e})",
            log.records.len(),
            worst_t,
            ENVELOPE_SLACK
        ),
    })
}

/// Estimator dispersion over a stochastic run: largest observed
/// `||g_hat - E[g_hat | model]||_1` at logged steps against the `8/beta`
/// bound.
pub fn dispersion_report<T: Scalar>(log: &SgdLog<T>) -> GapReport {
    GapReport {
        check: "estimator_dispersion".into(),
        gap: log.diagnostics.max_dispersion.to_real(),
        bound: log.diagnostics.dispersion_bound.to_real(),
        passed: log.diagnostics.dispersion_violations == 0,
        context: format!(
            "{} logged steps, {} violations, multipliers xi={} tau={} n={}",
            log.records.len(),
            log.diagnostics.dispersion_violations,
            log.diagnostics.xi_multiplier,
            log.diagnostics.tau_multiplier,
            log.diagnostics.n_multiplier
        ),
    }
}

/// `||E[g_hat | model] - grad J_D(v)||_inf` for a model built from `t`
/// fresh samples at `v`: the estimator's bias at sample size `t`.
pub fn estimator_bias<T: Scalar>(
    p: &RegularizedProblem<T>,
    v: &ValueVector<T>,
    t: usize,
    seed: u64,
) -> Result<T> {
    let crate::regularizers::Regularizer::Kl(kl) = &p.regularizer else {
        return Err(Error::BadParameter("estimator bias is defined for the KL regularizer"));
    };
    let batch = draw_transitions(&p.mdp, &kl.q, t, seed)?;
    let model = empirical_model(&batch, &p.mdp, v, kl.eta)?;
    let mean = conditional_mean_gradient(&model, &p.mdp, &kl.q)?;
    let g = dual_gradient(p, v)?;
    Ok(mean
        .values
        .iter()
        .zip(g.values.iter())
        .map(|(&a, &b)| (a - b).abs())
        .fold(T::zero(), |acc, x| acc.max(x)))
}

/// Reference dual solve: run the accelerated solver with a long budget and a
/// tight gradient tolerance, then return the iterate, its objective, and its
/// gradient norm. The workhorse behind "the optimum" in rate and extraction
/// checks.
pub fn reference_solution<T: Scalar>(
    p: &RegularizedProblem<T>,
    radius: T,
    max_iters: u64,
    grad_tol_l1: T,
) -> Result<(ValueVector<T>, T, T)> {
    let cfg = AgdConfig::new(max_iters, grad_tol_l1, radius, max_iters.max(1))?;
    let (v, _) = accelerated_solve(p, &cfg)?;
    let jd = dual_value(p, &v)?;
    let g = dual_gradient(p, &v)?;
    Ok((v, jd, g.norm_l1()))
}

/// Feasible-visitation helper used by tests: the visitation of a random
/// policy.
pub fn random_feasible_visitation<T: Scalar>(
    m: &Mdp<T>,
    master: u64,
    index: u64,
) -> Result<Visitation<T>> {
    let pi = random_policy(m.n_states, m.n_actions, master, "feasible-visitation", index);
    visitation_of_policy(m, &pi)
}
