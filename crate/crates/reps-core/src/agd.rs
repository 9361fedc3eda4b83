//! Accelerated gradient descent on the dual objective, with the iteration
//! and temperature rules that turn a target accuracy into a run length.
//!
//! The solver is the linear-coupling form of accelerated descent for an
//! `alpha`-smooth convex objective over a sup-norm ball of radius `D`:
//! one gradient evaluation per iteration at the coupled point
//! `x_{t+1} = (1 - tau_t) y_t + tau_t z_t`, a short (gradient) step for
//! `y_{t+1}` and a long (weighted) step for `z_{t+1}`, both projected onto
//! the ball. With `tau_t = 2/(t+2)` and step weight `(t+2)/(2 alpha)` the
//! objective gap after `T` iterations is at most
//! `4 alpha ||x_0 - v*||_2^2 / T^2`.

use std::time::Instant;

use crate::dual::{dual_gradient, dual_value, smoothness, RegularizedProblem, TheoryConstants};
use crate::error::{Error, Result};
use crate::logging::{IterateLog, IterateRecord};
use crate::mdp::ValueVector;
use crate::regularizers::Regularizer;
use crate::scalar::Scalar;

/// Slack added to the gradient-certificate bound to absorb round-off.
pub const CERTIFICATE_SLACK: f64 = 1e-9;

/// Configuration of an accelerated run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgdConfig<T> {
    /// Iteration budget `T >= 1`.
    pub max_iters: u64,
    /// Early-stop threshold on `||grad J_D||_1`; `0` disables early stopping.
    pub grad_tol_l1: T,
    /// Sup-norm radius of the feasible ball.
    pub radius: T,
    /// Record every this many iterations (the first and last iterates are
    /// always recorded).
    pub record_every: u64,
}

impl<T: Scalar> AgdConfig<T> {
    pub fn new(max_iters: u64, grad_tol_l1: T, radius: T, record_every: u64) -> Result<Self> {
        if max_iters == 0 {
            return Err(Error::BadParameter("max_iters must be >= 1"));
        }
        if record_every == 0 {
            return Err(Error::BadParameter("record_every must be >= 1"));
        }
        if !grad_tol_l1.is_finite() || grad_tol_l1 < T::zero() {
            return Err(Error::BadParameter("grad_tol_l1 must be finite and >= 0"));
        }
        if !radius.is_finite() || radius <= T::zero() {
            return Err(Error::BadParameter("radius must be finite and positive"));
        }
        Ok(AgdConfig { max_iters, grad_tol_l1, radius, record_every })
    }
}

/// Projection onto the sup-norm ball of the given radius (entrywise clamp).
pub fn project_linf<T: Scalar>(v: &ValueVector<T>, radius: T) -> ValueVector<T> {
    ValueVector::new(v.values.mapv(|x| x.max(-radius).min(radius)))
}

fn record<T: Scalar>(
    p: &RegularizedProblem<T>,
    t: u64,
    y: &ValueVector<T>,
    g: &ValueVector<T>,
    clock: &mut Instant,
) -> Result<IterateRecord<T>> {
    let jd = dual_value(p, y)?;
    let ns = clock.elapsed().as_nanos() as u64;
    *clock = Instant::now();
    Ok(IterateRecord {
        t,
        jd,
        grad_l1: g.norm_l1(),
        grad_l2: g.norm_l2(),
        grad_linf: g.norm_linf(),
        v_linf: y.norm_linf(),
        ns,
    })
}

/// Run accelerated descent on `J_D` from `v = 0`.
///
/// Returns the final short-step iterate `y_T` (the point the rate guarantee
/// speaks about) and the iterate log. Deterministic: same problem and config
/// give bit-identical results.
pub fn accelerated_solve<T: Scalar>(
    p: &RegularizedProblem<T>,
    cfg: &AgdConfig<T>,
) -> Result<(ValueVector<T>, IterateLog<T>)> {
    let n = p.n_states();
    let alpha = smoothness(p);
    let mut y = ValueVector::<T>::zeros(n);
    let mut z = ValueVector::<T>::zeros(n);
    let mut log = IterateLog::default();
    let mut clock = Instant::now();
    let g0 = dual_gradient(p, &y)?;
    log.records.push(record(p, 0, &y, &g0, &mut clock)?);
    if cfg.grad_tol_l1 > T::zero() && g0.norm_l1() <= cfg.grad_tol_l1 {
        return Ok((y, log));
    }
    let two = T::from_real(2.0);
    for t in 0..cfg.max_iters {
        let tf = T::from_real(t as f64);
        let tau = two / (tf + two);
        let step_z = (tf + two) / (two * alpha);
        // Coupled point, one gradient, short step (y), long step (z).
        let x = ValueVector::new(
            y.values.iter().zip(z.values.iter()).map(|(&yv, &zv)| (T::one() - tau) * yv + tau * zv).collect(),
        );
        let g = dual_gradient(p, &x)?;
        if !g.is_finite() {
            return Err(Error::NonFiniteObjective);
        }
        y = project_linf(
            &ValueVector::new(
                x.values.iter().zip(g.values.iter()).map(|(&xv, &gv)| xv - gv / alpha).collect(),
            ),
            cfg.radius,
        );
        z = project_linf(
            &ValueVector::new(
                z.values.iter().zip(g.values.iter()).map(|(&zv, &gv)| zv - step_z * gv).collect(),
            ),
            cfg.radius,
        );
        let done = t + 1 == cfg.max_iters;
        let scheduled = (t + 1) % cfg.record_every == 0;
        let mut stop = false;
        if scheduled || done || cfg.grad_tol_l1 > T::zero() {
            let gy = dual_gradient(p, &y)?;
            stop = cfg.grad_tol_l1 > T::zero() && gy.norm_l1() <= cfg.grad_tol_l1;
            if scheduled || done || stop {
                log.records.push(record(p, t + 1, &y, &gy, &mut clock)?);
            }
        }
        if stop {
            break;
        }
    }
    Ok((y, log))
}

/// Which temperature rule to apply when deriving `eta` from a target policy
/// accuracy: the headline rule, or the conservative variant that doubles the
/// temperature (tightening the bias bound at the price of a stiffer dual).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EtaRule {
    #[default]
    Standard,
    Conservative,
}

/// Temperature that drives the regularization bias below the target policy
/// accuracy: KL `eta = k log(|S||A|/beta) / epsilon`, Tsallis
/// `eta = 2/((alpha-1) epsilon beta^alpha)` (rule-independent), with `k = 2`
/// for the standard rule and `k = 4` for the conservative one.
///
/// For KL the return gap between the regularized and unregularized optima is
/// at most `2 log(|S||A|/beta)/eta`, so these choices cap it at `epsilon`
/// (standard) or `epsilon/2` (conservative); the temperature is decreasing
/// in both `epsilon` and `beta`.
pub fn eta_for_accuracy<T: Scalar>(
    epsilon: T,
    p: &RegularizedProblem<T>,
    rule: EtaRule,
) -> Result<T> {
    if !epsilon.is_finite() || epsilon <= T::zero() {
        return Err(Error::BadParameter("epsilon must be finite and positive"));
    }
    let beta = p.regularizer.reference().beta;
    let eta = match &p.regularizer {
        Regularizer::Kl(_) => {
            let pairs = T::from_real(p.mdp.n_pairs() as f64);
            let k = match rule {
                EtaRule::Standard => T::from_real(2.0),
                EtaRule::Conservative => T::from_real(4.0),
            };
            k * (pairs / beta).ln() / epsilon
        }
        Regularizer::Tsallis(t) => {
            T::from_real(2.0) / ((t.alpha - T::one()) * epsilon * beta.powf(t.alpha))
        }
    };
    if !eta.is_finite() || eta <= T::zero() {
        return Err(Error::NonFiniteInput);
    }
    Ok(eta)
}

/// What a run length should deliver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IterationTarget<T> {
    /// Gap `xi` on the regularized dual objective.
    RegularizedGap(T),
    /// Policy suboptimality `epsilon` on the unregularized return (assumes
    /// `eta` was chosen by [`eta_for_accuracy`] for the same `epsilon`).
    PolicyAccuracy(T),
}

/// Iteration count sufficient for the target, given the problem's constants.
pub fn required_iterations<T: Scalar>(
    target: IterationTarget<T>,
    p: &RegularizedProblem<T>,
    tc: &TheoryConstants<T>,
) -> Result<u64> {
    let s = T::from_real(p.mdp.n_states as f64);
    let one_minus_gamma = T::one() - p.mdp.discount;
    let two = T::from_real(2.0);
    let four = T::from_real(4.0);
    let count = match (&p.regularizer, target) {
        (Regularizer::Kl(k), IterationTarget::RegularizedGap(xi)) => {
            if !(xi > T::zero()) {
                return Err(Error::BadParameter("target gap must be positive"));
            }
            four * k.eta * (s + T::one()).powf(T::from_real(1.5))
                * (two + tc.c_double_prime).powi(2)
                / (one_minus_gamma.powi(2) * xi)
        }
        (Regularizer::Kl(_), IterationTarget::PolicyAccuracy(eps)) => {
            if !(eps > T::zero()) {
                return Err(Error::BadParameter("target accuracy must be positive"));
            }
            (s + T::one()).powf(T::from_real(1.5)) * (two + tc.c_double_prime).powi(2)
                / (one_minus_gamma.powi(2) * eps.powi(2))
        }
        (Regularizer::Tsallis(t), IterationTarget::RegularizedGap(xi)) => {
            if !(xi > T::zero()) {
                return Err(Error::BadParameter("target gap must be positive"));
            }
            let a = T::from_real(p.mdp.n_actions as f64);
            four * t.eta * s.powf(T::from_real(1.5)) * a.sqrt()
                * (two + tc.c_double_prime).powi(2)
                / (t.alpha * one_minus_gamma.powi(2) * xi)
        }
        (Regularizer::Tsallis(t), IterationTarget::PolicyAccuracy(eps)) => {
            if !(eps > T::zero()) {
                return Err(Error::BadParameter("target accuracy must be positive"));
            }
            let a = T::from_real(p.mdp.n_actions as f64);
            let beta = t.q.beta;
            T::from_real(8.0) * s.powf(T::from_real(1.5)) * a.sqrt()
                * (two + tc.c_double_prime).powi(2)
                / ((t.alpha - T::one()) * t.alpha * one_minus_gamma.powi(2)
                    * beta.powf(t.alpha) * eps.powi(2))
        }
    };
    if !count.is_finite() || count < T::zero() {
        return Err(Error::NonFiniteInput);
    }
    Ok(count.ceil().to_real() as u64)
}

/// A gradient-norm certificate at a dual point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate<T> {
    /// Measured `||grad J_D(v)||_1`.
    pub grad_l1: T,
    /// `sqrt(2 alpha epsilon_obj)`: the largest gradient norm an
    /// `epsilon_obj`-suboptimal point of an `alpha`-smooth objective can have.
    pub bound: T,
    pub passed: bool,
}

/// Check the smoothness certificate `||grad|| <= sqrt(2 alpha eps)` at `v`,
/// where `eps` is a known bound on `J_D(v) - min J_D`.
pub fn suboptimality_certificate<T: Scalar>(
    p: &RegularizedProblem<T>,
    v: &ValueVector<T>,
    epsilon_obj: T,
) -> Result<Certificate<T>> {
    if !epsilon_obj.is_finite() || epsilon_obj < T::zero() {
        return Err(Error::BadParameter("epsilon_obj must be finite and >= 0"));
    }
    let g = dual_gradient(p, v)?;
    let grad_l1 = g.norm_l1();
    let bound = (T::from_real(2.0) * smoothness(p) * epsilon_obj).sqrt();
    let passed = grad_l1 <= bound + T::from_real(CERTIFICATE_SLACK);
    Ok(Certificate { grad_l1, bound, passed })
}
