//! The regularized dual objective and its exact derivatives.
//!
//! For a problem `(M, F)` — MDP plus divergence regularizer — the dual
//! objective over state vectors `v` is
//!
//! `J_D(v) = (1-gamma) <mu, v> + F*(A^v)`,
//!
//! where `A^v[s,a] = r[s,a] - v[s] + gamma <P(.|s,a), v>` is the advantage
//! table of `v`. `J_D` is convex and smooth; its gradient at `v` is the flow
//! residual of the conjugate maximizer `lam(A^v)`, so a small gradient norm
//! certifies near-feasibility of the candidate primal and near-optimality of
//! the extracted policy.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::mdp::{Mdp, Visitation};
use crate::mdp::ValueVector;
use crate::regularizers::Regularizer;
use crate::scalar::Scalar;

/// Tolerance on `sum B q = 1` for soft weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-10;

/// An MDP paired with a regularizer whose reference distribution matches its
/// state-action space.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedProblem<T> {
    pub mdp: Mdp<T>,
    pub regularizer: Regularizer<T>,
}

impl<T: Scalar> RegularizedProblem<T> {
    pub fn new(mdp: Mdp<T>, regularizer: Regularizer<T>) -> Result<Self> {
        if regularizer.reference().q.dim() != (mdp.n_states, mdp.n_actions) {
            return Err(Error::ShapeMismatch("reference distribution must be (S, A)"));
        }
        Ok(RegularizedProblem { mdp, regularizer })
    }

    pub fn n_states(&self) -> usize {
        self.mdp.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.mdp.n_actions
    }
}

/// Advantage table of a dual vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageTable<T> {
    /// `table[[s, a]] = r[s,a] - v[s] + gamma sum_s2 P(s2|s,a) v[s2]`.
    pub table: Array2<T>,
}

/// Conjugate-maximizer weights relative to the reference distribution:
/// `lam(A^v) = b * q` elementwise, with `sum b q = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftWeights<T> {
    pub b: Array2<T>,
    /// KL: `log Z` of the softmax over advantages; Tsallis: the water-filling
    /// threshold.
    pub normalizer: T,
}

/// Constants the guarantees are stated in terms of, for one problem and a
/// visitation floor `rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryConstants<T> {
    /// Smoothness modulus of `J_D`: `(|S|+1) eta` for KL (l-inf geometry),
    /// `eta |S||A| / alpha` for Tsallis (l2 geometry).
    pub smoothness: T,
    /// Radius `D` of the sup-norm ball the dual solution lives in.
    pub radius: T,
    /// Policy-extraction constant: the gradient-norm-to-suboptimality factor
    /// is `(1+c)/(1-gamma) + ||v||_inf`.
    pub c: T,
    /// Radius constant: `D = (1 + c')/(1-gamma)`.
    pub c_prime: T,
    /// Constant entering iteration counts as `(2 + c'')^2`. For KL this is
    /// its own logarithmic constant; the Tsallis bounds use `c + c'` in that
    /// position, so here `c'' = c + c'` in the Tsallis case.
    pub c_double_prime: T,
}

/// Advantage table `A^v` of `v`.
pub fn advantage<T: Scalar>(m: &Mdp<T>, v: &ValueVector<T>) -> Result<AdvantageTable<T>> {
    if v.len() != m.n_states {
        return Err(Error::ShapeMismatch("value vector must have length S"));
    }
    let mut table = Array2::zeros((m.n_states, m.n_actions));
    for s in 0..m.n_states {
        for a in 0..m.n_actions {
            let mut future = T::zero();
            for s2 in 0..m.n_states {
                future += m.transition[[s, a, s2]] * v.values[s2];
            }
            table[[s, a]] = m.reward[[s, a]] - v.values[s] + m.discount * future;
        }
    }
    Ok(AdvantageTable { table })
}

/// Dual objective `J_D(v)`.
pub fn dual_value<T: Scalar>(p: &RegularizedProblem<T>, v: &ValueVector<T>) -> Result<T> {
    let adv = advantage(&p.mdp, v)?;
    let conj = p.regularizer.conjugate(&adv.table)?;
    let mut head = T::zero();
    for s in 0..p.mdp.n_states {
        head += p.mdp.initial[s] * v.values[s];
    }
    let value = (T::one() - p.mdp.discount) * head + conj.value;
    if !value.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    Ok(value)
}

/// Conjugate-maximizer weights `b = lam(A^v) / q` at `v`.
pub fn soft_weights<T: Scalar>(p: &RegularizedProblem<T>, v: &ValueVector<T>) -> Result<SoftWeights<T>> {
    let adv = advantage(&p.mdp, v)?;
    let conj = p.regularizer.conjugate(&adv.table)?;
    let b = &conj.argmax / &p.regularizer.reference().q;
    Ok(SoftWeights { b, normalizer: conj.normalizer })
}

/// The candidate primal at `v`: the conjugate maximizer `lam(A^v)`, a valid
/// distribution over state-action pairs (feasible for the flow constraints
/// only when the dual gradient vanishes).
pub fn candidate_primal<T: Scalar>(p: &RegularizedProblem<T>, v: &ValueVector<T>) -> Result<Visitation<T>> {
    let adv = advantage(&p.mdp, v)?;
    let conj = p.regularizer.conjugate(&adv.table)?;
    Visitation::new(conj.argmax)
}

/// Exact gradient of `J_D` at `v`: the signed flow residual of the candidate
/// primal,
/// `g[s] = (1-gamma) mu[s] + sum_{s',a} lam[s',a] (gamma P(s|s',a) - 1{s'=s})`.
///
/// Its components always sum to zero.
pub fn dual_gradient<T: Scalar>(p: &RegularizedProblem<T>, v: &ValueVector<T>) -> Result<ValueVector<T>> {
    let lam = candidate_primal(p, v)?;
    let m = &p.mdp;
    let one_minus_gamma = T::one() - m.discount;
    let mut g = Array1::zeros(m.n_states);
    for s in 0..m.n_states {
        g[s] = one_minus_gamma * m.initial[s];
    }
    for s_prev in 0..m.n_states {
        let mut row_mass = T::zero();
        for a in 0..m.n_actions {
            let w = lam.mass[[s_prev, a]];
            row_mass += w;
            if w == T::zero() {
                continue;
            }
            let wg = m.discount * w;
            for s in 0..m.n_states {
                g[s] = g[s] + wg * m.transition[[s_prev, a, s]];
            }
        }
        g[s_prev] = g[s_prev] - row_mass;
    }
    Ok(ValueVector::new(g))
}

/// Regularized primal objective `<lam, r> - F(lam)` of a feasible (or
/// candidate) visitation.
pub fn primal_regularized_value<T: Scalar>(p: &RegularizedProblem<T>, lam: &Visitation<T>) -> Result<T> {
    let ret = crate::mdp::primal_return(&p.mdp, lam)?;
    Ok(ret - p.regularizer.value(lam)?)
}

/// Lagrangian `L(lam, v) = (1-gamma) <mu, v> + <lam, A^v> - F(lam)`.
///
/// For flow-feasible `lam` this is independent of `v` and equals the
/// regularized primal objective; maximized over `lam` it is `J_D(v)`.
pub fn lagrangian<T: Scalar>(
    p: &RegularizedProblem<T>,
    lam: &Visitation<T>,
    v: &ValueVector<T>,
) -> Result<T> {
    let adv = advantage(&p.mdp, v)?;
    if lam.mass.dim() != adv.table.dim() {
        return Err(Error::ShapeMismatch("visitation must be (S, A)"));
    }
    let mut head = T::zero();
    for s in 0..p.mdp.n_states {
        head += p.mdp.initial[s] * v.values[s];
    }
    let inner: T = lam.mass.iter().zip(adv.table.iter()).map(|(&l, &a)| l * a).sum();
    Ok((T::one() - p.mdp.discount) * head + inner - p.regularizer.value(lam)?)
}

/// Smoothness modulus of `J_D` for this problem.
pub fn smoothness<T: Scalar>(p: &RegularizedProblem<T>) -> T {
    let s = T::from_real(p.mdp.n_states as f64);
    match &p.regularizer {
        Regularizer::Kl(k) => (s + T::one()) * k.eta,
        Regularizer::Tsallis(t) => {
            let a = T::from_real(p.mdp.n_actions as f64);
            t.eta * s * a / t.alpha
        }
    }
}

/// All guarantee constants for this problem at visitation floor `rho`
/// (`rho` must lie in `(0, 1/|S|]`; it is a measured quantity, see the
/// diagnostics module).
pub fn theory_constants<T: Scalar>(p: &RegularizedProblem<T>, rho: T) -> Result<TheoryConstants<T>> {
    let s = T::from_real(p.mdp.n_states as f64);
    if !rho.is_finite() || rho <= T::zero() || rho * s > T::one() + T::from_real(1e-12) {
        return Err(Error::BadRho);
    }
    let beta = p.regularizer.reference().beta;
    let pairs = T::from_real(p.mdp.n_pairs() as f64);
    let one_minus_gamma = T::one() - p.mdp.discount;
    let smooth = smoothness(p);
    let (c, c_prime, c_double_prime) = match &p.regularizer {
        Regularizer::Kl(k) => {
            let c = (T::one() + (rho.powi(3) * beta).recip().ln()) / k.eta;
            let c_prime = (pairs / (beta * rho)).ln() / k.eta;
            let c_double_prime =
                (T::one() + (pairs / (beta * beta * rho.powi(4))).ln()) / k.eta;
            (c, c_prime, c_double_prime)
        }
        Regularizer::Tsallis(t) => {
            let am1 = t.alpha - T::one();
            let scale = (t.eta * am1 * beta.powf(am1)).recip();
            let c = scale
                * (am1.max(T::from_real(2.0) / rho.powf(am1)) + T::from_real(2.0));
            let c_prime = T::from_real(2.0) * scale;
            (c, c_prime, c + c_prime)
        }
    };
    let radius = (T::one() + c_prime) / one_minus_gamma;
    let tc = TheoryConstants { smoothness: smooth, radius, c, c_prime, c_double_prime };
    for x in [tc.smoothness, tc.radius, tc.c, tc.c_prime, tc.c_double_prime] {
        if !x.is_finite() || x <= T::zero() {
            return Err(Error::NonFiniteInput);
        }
    }
    Ok(tc)
}
