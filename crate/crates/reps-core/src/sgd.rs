//! Sampled-gradient optimization of the dual objective (KL regularizer).
//!
//! The gradient estimator works from transition samples only: a batch of
//! `(s, a, s')` draws with `(s, a) ~ q` and `s' ~ P(.|s, a)` yields an
//! empirical model — visit frequencies `q_hat`, successor-mean values
//! `W_hat`, advantages `A_hat`, and softmax weights `B_hat` — and one fresh
//! draw converts the weights into a two-spike stochastic gradient. Projected
//! SGD over a sup-norm ball with an `O(1/sqrt(t))` step size and a
//! polynomially growing batch schedule then drives the dual gap of the
//! averaged iterate to zero.
//!
//! Everything here is specific to the KL regularizer: the estimator's
//! softmax form and its dispersion/bias bounds (`8/beta`, `8 xi`) have no
//! Tsallis counterpart, and [`sgd_solve`] rejects Tsallis problems.

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

use crate::dual::{dual_gradient, dual_value, RegularizedProblem};
use crate::error::{Error, Result};
use crate::logging::{SgdDiagnostics, SgdLog, SgdRecord};
use crate::mdp::{Mdp, ReferenceDistribution, ValueVector};
use crate::regularizers::Regularizer;
use crate::rng;
use crate::scalar::Scalar;

/// A batch of environment transitions drawn i.i.d. from the reference
/// distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    /// `(s, a, s2)` triples in draw order.
    pub triples: Vec<(usize, usize, usize)>,
    /// Visit counts per state-action pair.
    pub counts: Array2<u64>,
    /// Seed the batch was drawn under.
    pub rng_seed: u64,
}

/// The empirical model a batch induces at a dual vector `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalModel<T> {
    /// Empirical successor-value means; 0 at unvisited pairs.
    pub w_hat: Array2<T>,
    /// Empirical advantages `r - v + gamma W_hat`.
    pub a_hat: Array2<T>,
    /// Visit frequencies `counts / n`.
    pub q_hat: Array2<T>,
    /// Softmax weights `exp(eta A_hat) / Z_hat`.
    pub b_hat: Array2<T>,
    /// `Z_hat = sum exp(eta A_hat) q_hat` (over visited pairs).
    pub z_hat: T,
    pub log_z_hat: T,
    /// Pairs with zero visits (their `W_hat` is 0 by convention).
    pub zero_count_pairs: Vec<(usize, usize)>,
}

fn draw_pair(rng: &mut ChaCha8Rng, q_cum: &[f64]) -> usize {
    let u = rng.random::<f64>();
    match q_cum.binary_search_by(|probe| probe.partial_cmp(&u).expect("finite")) {
        Ok(i) => i + 1,
        Err(i) => i,
    }
    .min(q_cum.len() - 1)
}

fn draw_successor<T: Scalar>(rng: &mut ChaCha8Rng, m: &Mdp<T>, s: usize, a: usize) -> usize {
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    for s2 in 0..m.n_states {
        acc += m.transition[[s, a, s2]].to_real();
        if u < acc {
            return s2;
        }
    }
    m.n_states - 1
}

fn cumulative_q<T: Scalar>(q: &ReferenceDistribution<T>) -> Vec<f64> {
    let mut acc = 0.0;
    q.q.iter()
        .map(|&x| {
            acc += x.to_real();
            acc
        })
        .collect()
}

/// Draw `count` transitions `(s, a) ~ q`, `s' ~ P(.|s, a)` under
/// `stream(seed, "transitions")`.
pub fn draw_transitions<T: Scalar>(
    m: &Mdp<T>,
    q: &ReferenceDistribution<T>,
    count: usize,
    seed: u64,
) -> Result<SampleBatch> {
    if q.q.dim() != (m.n_states, m.n_actions) {
        return Err(Error::ShapeMismatch("reference distribution must be (S, A)"));
    }
    let mut r = rng::stream(seed, "transitions");
    let q_cum = cumulative_q(q);
    let mut triples = Vec::with_capacity(count);
    let mut counts = Array2::zeros((m.n_states, m.n_actions));
    for _ in 0..count {
        let flat = draw_pair(&mut r, &q_cum);
        let (s, a) = (flat / m.n_actions, flat % m.n_actions);
        let s2 = draw_successor(&mut r, m, s, a);
        triples.push((s, a, s2));
        counts[[s, a]] += 1;
    }
    Ok(SampleBatch { triples, counts, rng_seed: seed })
}

/// Largest exponent fed to `exp` when forming `B_hat`; keeps weights finite
/// even when an unvisited pair's advantage exceeds every visited one.
const EXP_CLAMP: f64 = 700.0;

fn model_from_stats<T: Scalar>(
    succ_counts: &Array3<u64>,
    counts: &Array2<u64>,
    n_samples: u64,
    m: &Mdp<T>,
    v: &ValueVector<T>,
    eta: T,
) -> EmpiricalModel<T> {
    let (ns, na) = (m.n_states, m.n_actions);
    let mut w_hat = Array2::zeros((ns, na));
    let mut a_hat = Array2::zeros((ns, na));
    let mut q_hat = Array2::zeros((ns, na));
    let mut zero_count_pairs = Vec::new();
    let n_real = T::from_real(n_samples as f64);
    for s in 0..ns {
        for a in 0..na {
            let c = counts[[s, a]];
            if c == 0 {
                zero_count_pairs.push((s, a));
            } else {
                let mut acc = T::zero();
                for s2 in 0..ns {
                    let k = succ_counts[[s, a, s2]];
                    if k > 0 {
                        acc += T::from_real(k as f64) * v.values[s2];
                    }
                }
                w_hat[[s, a]] = acc / T::from_real(c as f64);
            }
            q_hat[[s, a]] = T::from_real(c as f64) / n_real;
            a_hat[[s, a]] = m.reward[[s, a]] - v.values[s] + m.discount * w_hat[[s, a]];
        }
    }
    // Z_hat = sum_{visited} q_hat exp(eta A_hat), evaluated max-shifted over
    // the visited pairs only (unvisited ones carry no weight).
    let mut shift = T::neg_infinity();
    for s in 0..ns {
        for a in 0..na {
            if counts[[s, a]] > 0 {
                shift = shift.max(eta * a_hat[[s, a]]);
            }
        }
    }
    let mut z_shifted = T::zero();
    for s in 0..ns {
        for a in 0..na {
            if counts[[s, a]] > 0 {
                z_shifted += q_hat[[s, a]] * (eta * a_hat[[s, a]] - shift).exp();
            }
        }
    }
    let log_z_hat = shift + z_shifted.ln();
    let clamp = T::from_real(EXP_CLAMP);
    let b_hat = a_hat.mapv(|adv| (eta * adv - log_z_hat).min(clamp).exp());
    EmpiricalModel {
        w_hat,
        a_hat,
        q_hat,
        b_hat,
        z_hat: log_z_hat.exp(),
        log_z_hat,
        zero_count_pairs,
    }
}

/// Build the empirical model of a batch at `v` with temperature `eta`.
pub fn empirical_model<T: Scalar>(
    batch: &SampleBatch,
    m: &Mdp<T>,
    v: &ValueVector<T>,
    eta: T,
) -> Result<EmpiricalModel<T>> {
    if v.len() != m.n_states {
        return Err(Error::ShapeMismatch("value vector must have length S"));
    }
    if batch.counts.dim() != (m.n_states, m.n_actions) {
        return Err(Error::ShapeMismatch("batch counts must be (S, A)"));
    }
    if !eta.is_finite() || eta <= T::zero() {
        return Err(Error::BadParameter("eta must be finite and positive"));
    }
    let mut succ = Array3::zeros((m.n_states, m.n_actions, m.n_states));
    let mut counts = Array2::zeros((m.n_states, m.n_actions));
    for &(s, a, s2) in &batch.triples {
        succ[[s, a, s2]] += 1u64;
        counts[[s, a]] += 1u64;
    }
    if counts != batch.counts {
        return Err(Error::ShapeMismatch("batch counts disagree with its triples"));
    }
    Ok(model_from_stats(&succ, &counts, batch.triples.len() as u64, m, v, eta))
}

/// A realized stochastic gradient: `(1-gamma) mu` plus a two-spike transport
/// term from one fresh sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate<T> {
    pub grad: ValueVector<T>,
    /// The fresh `(s, a, s2)` sample the spikes came from.
    pub sample: (usize, usize, usize),
    /// `B_hat` at the sampled pair.
    pub weight: T,
}

fn gradient_estimate_with<T: Scalar>(
    model: &EmpiricalModel<T>,
    m: &Mdp<T>,
    q_cum: &[f64],
    r: &mut ChaCha8Rng,
) -> GradientEstimate<T> {
    let flat = draw_pair(r, q_cum);
    let (s, a) = (flat / m.n_actions, flat % m.n_actions);
    let s2 = draw_successor(r, m, s, a);
    let w = model.b_hat[[s, a]];
    let one_minus_gamma = T::one() - m.discount;
    let mut g = m.initial.mapv(|x| x * one_minus_gamma);
    g[s] = g[s] - w;
    g[s2] = g[s2] + m.discount * w;
    GradientEstimate { grad: ValueVector::new(g), sample: (s, a, s2), weight: w }
}

/// One stochastic gradient from a fresh sample under
/// `stream(seed, "final-sample")`: at most two entries differ from
/// `(1-gamma) mu`.
pub fn gradient_estimate<T: Scalar>(
    model: &EmpiricalModel<T>,
    m: &Mdp<T>,
    q: &ReferenceDistribution<T>,
    seed: u64,
) -> Result<GradientEstimate<T>> {
    if q.q.dim() != (m.n_states, m.n_actions) {
        return Err(Error::ShapeMismatch("reference distribution must be (S, A)"));
    }
    let mut r = rng::stream(seed, "final-sample");
    let q_cum = cumulative_q(q);
    Ok(gradient_estimate_with(model, m, &q_cum, &mut r))
}

/// Exact conditional mean of the estimator given the model:
/// `(1-gamma) mu[s] + sum_{s',a} q[s',a] B_hat[s',a] (gamma P(s|s',a) - 1{s'=s})`.
pub fn conditional_mean_gradient<T: Scalar>(
    model: &EmpiricalModel<T>,
    m: &Mdp<T>,
    q: &ReferenceDistribution<T>,
) -> Result<ValueVector<T>> {
    if q.q.dim() != (m.n_states, m.n_actions) {
        return Err(Error::ShapeMismatch("reference distribution must be (S, A)"));
    }
    let one_minus_gamma = T::one() - m.discount;
    let mut g = m.initial.mapv(|x| x * one_minus_gamma);
    for s_prev in 0..m.n_states {
        let mut row = T::zero();
        for a in 0..m.n_actions {
            let w = q.q[[s_prev, a]] * model.b_hat[[s_prev, a]];
            row += w;
            let wg = m.discount * w;
            for s in 0..m.n_states {
                g[s] = g[s] + wg * m.transition[[s_prev, a, s]];
            }
        }
        g[s_prev] = g[s_prev] - row;
    }
    Ok(ValueVector::new(g))
}

/// Per-step batch size making the model bias at step `t` small enough for
/// the `O(1/sqrt(t))` rate:
/// `n(t) = ceil(525 t (ln(100 |S||A| t^2 / delta) + 1)^3 / (beta |S|^2))`.
pub fn sample_schedule<T: Scalar>(t: u64, m: &Mdp<T>, beta: f64, delta: f64) -> Result<u64> {
    if t == 0 {
        return Err(Error::BadParameter("t must be >= 1"));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::BadParameter("beta must lie in (0, 1]"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::BadParameter("delta must lie in (0, 1)"));
    }
    let pairs = (m.n_states * m.n_actions) as f64;
    let tf = t as f64;
    let log_term = (100.0 * pairs * tf * tf / delta).ln() + 1.0;
    let n = 525.0 * tf * log_term.powi(3) / (beta * (m.n_states as f64).powi(2));
    if !n.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    Ok(n.ceil() as u64)
}

/// Configuration of a stochastic run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig<T> {
    pub total_steps: u64,
    /// Failure probability the schedules are tuned for.
    pub delta: T,
    /// Sup-norm radius of the iterate ball.
    pub radius: T,
    pub record_every: u64,
    /// Scales the per-step bias target `xi_t`; the sample schedule scales by
    /// its inverse square.
    pub xi_multiplier: f64,
    /// Scales the step size `tau_t = 1/(16 |S| eta sqrt(t))`.
    pub tau_multiplier: f64,
    /// Scales the sample schedule `n(t)` directly (used to run the schedule's
    /// shape at tractable absolute size; always recorded in the log).
    pub n_multiplier: f64,
}

impl<T: Scalar> SgdConfig<T> {
    pub fn new(total_steps: u64, delta: T, radius: T, record_every: u64) -> Result<Self> {
        let cfg = SgdConfig {
            total_steps,
            delta,
            radius,
            record_every,
            xi_multiplier: 1.0,
            tau_multiplier: 1.0,
            n_multiplier: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_multipliers(mut self, xi: f64, tau: f64, n: f64) -> Result<Self> {
        self.xi_multiplier = xi;
        self.tau_multiplier = tau;
        self.n_multiplier = n;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::BadParameter("total_steps must be >= 1"));
        }
        if self.record_every == 0 {
            return Err(Error::BadParameter("record_every must be >= 1"));
        }
        let d = self.delta.to_real();
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::BadParameter("delta must lie in (0, 1)"));
        }
        if !self.radius.is_finite() || self.radius <= T::zero() {
            return Err(Error::BadParameter("radius must be finite and positive"));
        }
        for mult in [self.xi_multiplier, self.tau_multiplier, self.n_multiplier] {
            if !(mult > 0.0 && mult.is_finite()) {
                return Err(Error::BadParameter("multipliers must be finite and positive"));
            }
        }
        Ok(())
    }
}

/// Projected SGD on the dual objective from `v = 0`, KL regularizer only.
///
/// Step `t` (1-based) tops the cumulative model batch up to
/// `n_multiplier * n(t) / xi_multiplier^2` samples (samples are reused across
/// steps; counts are kept as sufficient statistics, so memory is `O(|S|^2
/// |A|)` regardless of the schedule), rebuilds the empirical model at the
/// current iterate, draws one fresh sample for the gradient, and takes a
/// projected step with `tau_t = tau_multiplier / (16 |S| eta sqrt(t))`.
///
/// Returns the running average of the iterates (the vector the guarantee
/// speaks about) and the log. Deterministic per `(problem, config, seed)`.
pub fn sgd_solve<T: Scalar>(
    p: &RegularizedProblem<T>,
    cfg: &SgdConfig<T>,
    seed: u64,
) -> Result<(ValueVector<T>, SgdLog<T>)> {
    cfg.validate()?;
    let Regularizer::Kl(kl) = &p.regularizer else {
        return Err(Error::BadParameter("the stochastic solver supports the KL regularizer only"));
    };
    let m = &p.mdp;
    let q = &kl.q;
    let eta = kl.eta;
    let beta = q.beta;
    let (ns, na) = (m.n_states, m.n_actions);
    let q_cum = cumulative_q(q);
    let mut model_rng = rng::stream(seed, "model-samples");
    let mut final_rng = rng::stream(seed, "final-sample");
    let mut succ = Array3::<u64>::zeros((ns, na, ns));
    let mut counts = Array2::<u64>::zeros((ns, na));
    let mut drawn: u64 = 0;
    let mut v = ValueVector::<T>::zeros(ns);
    let mut v_sum = ValueVector::<T>::zeros(ns);
    let mut records = Vec::new();
    let dispersion_bound = T::from_real(8.0) / beta;
    let mut max_dispersion = T::zero();
    let mut dispersion_violations = 0u64;
    let mut zero_count_steps = 0u64;
    let step_scale =
        T::from_real(cfg.tau_multiplier) / (T::from_real(16.0 * ns as f64) * eta);
    let mut clock = Instant::now();
    for t in 1..=cfg.total_steps {
        let target = {
            let base = sample_schedule(t, m, beta.to_real(), cfg.delta.to_real())? as f64;
            ((cfg.n_multiplier * base / (cfg.xi_multiplier * cfg.xi_multiplier)).ceil() as u64)
                .max(1)
        };
        while drawn < target {
            let flat = draw_pair(&mut model_rng, &q_cum);
            let (s, a) = (flat / na, flat % na);
            let s2 = draw_successor(&mut model_rng, m, s, a);
            succ[[s, a, s2]] += 1;
            counts[[s, a]] += 1;
            drawn += 1;
        }
        let model = model_from_stats(&succ, &counts, drawn, m, &v, eta);
        let est = gradient_estimate_with(&model, m, &q_cum, &mut final_rng);
        let tau = step_scale / T::from_real(t as f64).sqrt();
        let next = v
            .values
            .iter()
            .zip(est.grad.values.iter())
            .map(|(&vv, &gv)| (vv - tau * gv).max(-cfg.radius).min(cfg.radius))
            .collect();
        v = ValueVector::new(next);
        if !v.is_finite() {
            return Err(Error::NonFiniteObjective);
        }
        for (acc, &vv) in v_sum.values.iter_mut().zip(v.values.iter()) {
            *acc = *acc + vv;
        }
        let scheduled = t % cfg.record_every == 0 || t == cfg.total_steps;
        if scheduled {
            if !model.zero_count_pairs.is_empty() {
                zero_count_steps += 1;
            }
            let mean = conditional_mean_gradient(&model, m, q)?;
            let disp: T = est
                .grad
                .values
                .iter()
                .zip(mean.values.iter())
                .map(|(&a, &b)| (a - b).abs())
                .sum();
            max_dispersion = max_dispersion.max(disp);
            if disp > dispersion_bound + T::from_real(1e-9) {
                dispersion_violations += 1;
            }
            let v_bar = ValueVector::new(v_sum.values.mapv(|x| x / T::from_real(t as f64)));
            let g = dual_gradient(p, &v)?;
            let ns_elapsed = clock.elapsed().as_nanos() as u64;
            clock = Instant::now();
            records.push(SgdRecord {
                t,
                jd: dual_value(p, &v)?,
                grad_l1: g.norm_l1(),
                grad_l2: g.norm_l2(),
                grad_linf: g.norm_linf(),
                v_linf: v.norm_linf(),
                ns: ns_elapsed,
                cum_samples: drawn + t,
                jd_avg: dual_value(p, &v_bar)?,
            });
        }
    }
    let v_bar = ValueVector::new(
        v_sum.values.mapv(|x| x / T::from_real(cfg.total_steps as f64)),
    );
    let log = SgdLog {
        records,
        diagnostics: SgdDiagnostics {
            xi_multiplier: cfg.xi_multiplier,
            tau_multiplier: cfg.tau_multiplier,
            n_multiplier: cfg.n_multiplier,
            dispersion_bound,
            max_dispersion,
            dispersion_violations,
            zero_count_steps,
            total_samples: drawn + cfg.total_steps,
        },
    };
    Ok((v_bar, log))
}
