//! Finite discounted MDPs: representation, validation, exact policy
//! evaluation, occupancy measures, policy extraction, and seeded random
//! instance generation.
//!
//! Conventions: `transition[[s, a, s2]]` is the probability of landing in
//! `s2` after playing `a` in `s`; rewards live in `[0, 1]`; occupancy
//! measures are normalized discounted visitation distributions over
//! state-action pairs (they sum to 1, not to `1/(1-gamma)`).

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lu_solve, residual_linf};
use crate::rng;
use crate::scalar::Scalar;

/// Per-row tolerance for probability vectors (transition rows, policy rows).
pub const ROW_TOL: f64 = 1e-12;
/// Tolerance for distributions over the whole state-action space.
pub const AGGREGATE_TOL: f64 = 1e-10;
/// Required accuracy of linear-system solves, in residual sup-norm.
pub const SOLVE_TOL: f64 = 1e-10;

/// The stated tolerances are `f64`-scale; for wider-epsilon scalars (`f32`)
/// they bottom out at a small multiple of the type's epsilon.
fn scaled<T: Scalar>(base: f64, mult: f64) -> f64 {
    base.max(T::epsilon().to_real() * mult)
}

pub(crate) fn row_tol<T: Scalar>() -> f64 {
    scaled::<T>(ROW_TOL, 64.0)
}

pub(crate) fn aggregate_tol<T: Scalar>() -> f64 {
    scaled::<T>(AGGREGATE_TOL, 256.0)
}

pub(crate) fn solve_tol<T: Scalar>() -> f64 {
    scaled::<T>(SOLVE_TOL, 1024.0)
}

/// A finite discounted MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp<T> {
    pub n_states: usize,
    pub n_actions: usize,
    /// `transition[[s, a, s2]] = P(s2 | s, a)`; every `(s, a)` row is a
    /// probability distribution over successor states.
    pub transition: Array3<T>,
    /// `reward[[s, a]]` in `[0, 1]`.
    pub reward: Array2<T>,
    /// Initial state distribution.
    pub initial: Array1<T>,
    /// Discount factor, strictly inside `(0, 1)`.
    pub discount: T,
}

impl<T: Scalar> Mdp<T> {
    /// Build and validate an MDP from its parts.
    pub fn new(
        transition: Array3<T>,
        reward: Array2<T>,
        initial: Array1<T>,
        discount: T,
    ) -> Result<Self> {
        let (n_states, n_actions, _) = transition.dim();
        let m = Mdp { n_states, n_actions, transition, reward, initial, discount };
        validate_mdp(&m)?;
        Ok(m)
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }
}

/// A stationary stochastic policy; `probs[[s, a]]` is the probability of
/// playing `a` in `s`, each row a distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<T> {
    pub probs: Array2<T>,
}

impl<T: Scalar> Policy<T> {
    /// Validate row-stochasticity and wrap.
    pub fn new(probs: Array2<T>) -> Result<Self> {
        for s in 0..probs.nrows() {
            let mut sum = T::zero();
            for a in 0..probs.ncols() {
                let p = probs[[s, a]];
                if !p.is_finite() {
                    return Err(Error::NonFiniteInput);
                }
                if p < T::zero() {
                    return Err(Error::NegativeMass { s, a });
                }
                sum += p;
            }
            if (sum.to_real() - 1.0).abs() > row_tol::<T>() {
                return Err(Error::NotNormalized { what: "policy row", sum: sum.to_real() });
            }
        }
        Ok(Policy { probs })
    }

    /// The uniform policy.
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = T::from_real(1.0 / n_actions as f64);
        Policy { probs: Array2::from_elem((n_states, n_actions), p) }
    }

    /// Deterministic policy from an action index per state.
    pub fn deterministic(n_states: usize, n_actions: usize, actions: &[usize]) -> Result<Self> {
        if actions.len() != n_states {
            return Err(Error::ShapeMismatch("one action index per state"));
        }
        let mut probs = Array2::zeros((n_states, n_actions));
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::BadParameter("action index out of range"));
            }
            probs[[s, a]] = T::one();
        }
        Ok(Policy { probs })
    }
}

/// A normalized occupancy measure over state-action pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Visitation<T> {
    pub mass: Array2<T>,
}

impl<T: Scalar> Visitation<T> {
    /// Validate nonnegativity and normalization. Entries in `[-1e-12, 0)`
    /// (solver round-off) are clamped to zero; anything more negative is an
    /// error.
    pub fn new(mut mass: Array2<T>) -> Result<Self> {
        let neg_tol = T::from_real(-row_tol::<T>());
        let mut sum = T::zero();
        for s in 0..mass.nrows() {
            for a in 0..mass.ncols() {
                let x = mass[[s, a]];
                if !x.is_finite() {
                    return Err(Error::NonFiniteInput);
                }
                if x < neg_tol {
                    return Err(Error::NegativeMass { s, a });
                }
                if x < T::zero() {
                    mass[[s, a]] = T::zero();
                }
                sum += mass[[s, a]];
            }
        }
        if (sum.to_real() - 1.0).abs() > aggregate_tol::<T>() {
            return Err(Error::NotNormalized { what: "occupancy measure", sum: sum.to_real() });
        }
        Ok(Visitation { mass })
    }

    /// Per-state marginals `sum_a mass[[s, a]]`.
    pub fn state_marginals(&self) -> Array1<T> {
        let mut out = Array1::zeros(self.mass.nrows());
        for s in 0..self.mass.nrows() {
            for a in 0..self.mass.ncols() {
                out[s] = out[s] + self.mass[[s, a]];
            }
        }
        out
    }
}

/// A state-indexed dual vector (a "value-like" vector, not necessarily any
/// policy's value function).
#[derive(Debug, Clone, PartialEq)]
pub struct ValueVector<T> {
    pub values: Array1<T>,
}

impl<T: Scalar> ValueVector<T> {
    pub fn new(values: Array1<T>) -> Self {
        ValueVector { values }
    }

    pub fn zeros(n: usize) -> Self {
        ValueVector { values: Array1::zeros(n) }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm_l1(&self) -> T {
        self.values.iter().map(|x| x.abs()).sum()
    }

    pub fn norm_l2(&self) -> T {
        self.values.iter().map(|x| *x * *x).sum::<T>().sqrt()
    }

    pub fn norm_linf(&self) -> T {
        self.values.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

/// A strictly positive reference distribution over state-action pairs, with
/// its actual floor `beta = min q` recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceDistribution<T> {
    pub q: Array2<T>,
    /// Smallest entry of `q` (strictly positive by construction).
    pub beta: T,
}

impl<T: Scalar> ReferenceDistribution<T> {
    /// Validate strict positivity and normalization.
    pub fn new(q: Array2<T>) -> Result<Self> {
        let mut beta = T::infinity();
        let mut sum = T::zero();
        for &x in q.iter() {
            if !x.is_finite() {
                return Err(Error::NonFiniteInput);
            }
            if x <= T::zero() {
                return Err(Error::ZeroReferenceMass);
            }
            beta = beta.min(x);
            sum += x;
        }
        if q.is_empty() {
            return Err(Error::ShapeMismatch("reference distribution must be non-empty"));
        }
        if (sum.to_real() - 1.0).abs() > aggregate_tol::<T>() {
            return Err(Error::NotNormalized { what: "reference distribution", sum: sum.to_real() });
        }
        Ok(ReferenceDistribution { q, beta })
    }

    /// Uniform reference: `q = 1/(n_states * n_actions)` everywhere.
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let v = T::from_real(1.0 / (n_states * n_actions) as f64);
        ReferenceDistribution { q: Array2::from_elem((n_states, n_actions), v), beta: v }
    }
}

/// Check all structural invariants of an MDP.
pub fn validate_mdp<T: Scalar>(m: &Mdp<T>) -> Result<()> {
    if m.n_states == 0 || m.n_actions == 0 {
        return Err(Error::BadParameter("n_states and n_actions must be >= 1"));
    }
    if m.transition.dim() != (m.n_states, m.n_actions, m.n_states) {
        return Err(Error::ShapeMismatch("transition tensor must be (S, A, S)"));
    }
    if m.reward.dim() != (m.n_states, m.n_actions) {
        return Err(Error::ShapeMismatch("reward table must be (S, A)"));
    }
    if m.initial.len() != m.n_states {
        return Err(Error::ShapeMismatch("initial distribution must have length S"));
    }
    if !m.discount.is_finite() || m.discount <= T::zero() || m.discount >= T::one() {
        return Err(Error::BadDiscount);
    }
    for s in 0..m.n_states {
        for a in 0..m.n_actions {
            let mut sum = T::zero();
            for s2 in 0..m.n_states {
                let p = m.transition[[s, a, s2]];
                if !p.is_finite() || p < T::zero() {
                    return Err(Error::RowNotStochastic { s, a });
                }
                sum += p;
            }
            if (sum.to_real() - 1.0).abs() > row_tol::<T>() {
                return Err(Error::RowNotStochastic { s, a });
            }
            let r = m.reward[[s, a]];
            if !r.is_finite() || r < T::zero() || r > T::one() {
                return Err(Error::RewardOutOfRange { s, a });
            }
        }
    }
    let mut mu_sum = T::zero();
    for s in 0..m.n_states {
        let p = m.initial[s];
        if !p.is_finite() || p < T::zero() {
            return Err(Error::BadInitial);
        }
        mu_sum += p;
    }
    if (mu_sum.to_real() - 1.0).abs() > row_tol::<T>() {
        return Err(Error::BadInitial);
    }
    Ok(())
}

/// Policy-induced transition matrix and reward vector:
/// `P_pi[s, s2] = sum_a pi(a|s) P(s2|s,a)` and `r_pi[s] = sum_a pi(a|s) r(s,a)`.
fn policy_matrix<T: Scalar>(m: &Mdp<T>, pi: &Policy<T>) -> (Array2<T>, Array1<T>) {
    let n = m.n_states;
    let mut p_pi = Array2::zeros((n, n));
    let mut r_pi = Array1::zeros(n);
    for s in 0..n {
        for a in 0..m.n_actions {
            let w = pi.probs[[s, a]];
            if w == T::zero() {
                continue;
            }
            r_pi[s] = r_pi[s] + w * m.reward[[s, a]];
            for s2 in 0..n {
                p_pi[[s, s2]] = p_pi[[s, s2]] + w * m.transition[[s, a, s2]];
            }
        }
    }
    (p_pi, r_pi)
}

fn check_policy_shape<T: Scalar>(m: &Mdp<T>, pi: &Policy<T>) -> Result<()> {
    if pi.probs.dim() != (m.n_states, m.n_actions) {
        return Err(Error::ShapeMismatch("policy must be (S, A)"));
    }
    Ok(())
}

/// Exact value function of a policy: solve `(I - gamma P_pi) v = r_pi`.
///
/// The residual of the solve is checked against `SOLVE_TOL` in sup-norm.
pub fn policy_value<T: Scalar>(m: &Mdp<T>, pi: &Policy<T>) -> Result<ValueVector<T>> {
    check_policy_shape(m, pi)?;
    let n = m.n_states;
    let (p_pi, r_pi) = policy_matrix(m, pi);
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let d = if i == j { T::one() } else { T::zero() };
            a[[i, j]] = d - m.discount * p_pi[[i, j]];
        }
    }
    let v = lu_solve(&a, &r_pi)?;
    if residual_linf(&a, &v, &r_pi).to_real() > solve_tol::<T>() {
        return Err(Error::SingularSystem);
    }
    Ok(ValueVector::new(v))
}

/// Normalized discounted occupancy measure of a policy: solve the flow
/// (balance) system `(I - gamma P_pi^T) d = (1 - gamma) mu` for the state
/// visitation `d`, then split by the policy: `lambda[s, a] = d[s] pi(a|s)`.
pub fn visitation_of_policy<T: Scalar>(m: &Mdp<T>, pi: &Policy<T>) -> Result<Visitation<T>> {
    check_policy_shape(m, pi)?;
    let n = m.n_states;
    let (p_pi, _) = policy_matrix(m, pi);
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let d = if i == j { T::one() } else { T::zero() };
            a[[i, j]] = d - m.discount * p_pi[[j, i]];
        }
    }
    let one_minus_gamma = T::one() - m.discount;
    let b = m.initial.mapv(|x| x * one_minus_gamma);
    let d = lu_solve(&a, &b)?;
    if residual_linf(&a, &d, &b).to_real() > solve_tol::<T>() {
        return Err(Error::SingularSystem);
    }
    let mut mass = Array2::zeros((n, m.n_actions));
    for s in 0..n {
        for act in 0..m.n_actions {
            mass[[s, act]] = d[s] * pi.probs[[s, act]];
        }
    }
    Visitation::new(mass)
}

/// Extract the policy a visitation induces by row normalization; states with
/// zero visitation get the uniform row.
pub fn policy_from_visitation<T: Scalar>(lam: &Visitation<T>) -> Result<Policy<T>> {
    let (n_states, n_actions) = lam.mass.dim();
    let neg_tol = T::from_real(-row_tol::<T>());
    let uniform = T::from_real(1.0 / n_actions as f64);
    let mut probs = Array2::zeros((n_states, n_actions));
    for s in 0..n_states {
        let mut sum = T::zero();
        for a in 0..n_actions {
            let x = lam.mass[[s, a]];
            if x < neg_tol {
                return Err(Error::NegativeMass { s, a });
            }
            sum += x.max(T::zero());
        }
        if sum > T::zero() {
            for a in 0..n_actions {
                probs[[s, a]] = lam.mass[[s, a]].max(T::zero()) / sum;
            }
        } else {
            for a in 0..n_actions {
                probs[[s, a]] = uniform;
            }
        }
    }
    Policy::new(probs)
}

/// Signed per-state flow-constraint violation of a candidate visitation, and
/// its total l1 magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowResidual<T> {
    /// `residual[s] = sum_a lam[s,a] - (1-gamma) mu[s]
    ///                - gamma sum_{s',a} P(s|s',a) lam[s',a]`.
    pub per_state: Array1<T>,
    pub l1: T,
}

/// Evaluate the flow-constraint residual of `lam` (any nonnegative table, not
/// necessarily feasible).
pub fn flow_residual<T: Scalar>(m: &Mdp<T>, lam: &Visitation<T>) -> Result<FlowResidual<T>> {
    if lam.mass.dim() != (m.n_states, m.n_actions) {
        return Err(Error::ShapeMismatch("visitation must be (S, A)"));
    }
    let one_minus_gamma = T::one() - m.discount;
    let mut per_state = Array1::zeros(m.n_states);
    for s in 0..m.n_states {
        let mut out = T::zero();
        for a in 0..m.n_actions {
            out += lam.mass[[s, a]];
        }
        per_state[s] = out - one_minus_gamma * m.initial[s];
    }
    for s_prev in 0..m.n_states {
        for a in 0..m.n_actions {
            let w = m.discount * lam.mass[[s_prev, a]];
            if w == T::zero() {
                continue;
            }
            for s in 0..m.n_states {
                per_state[s] = per_state[s] - w * m.transition[[s_prev, a, s]];
            }
        }
    }
    let l1 = per_state.iter().map(|x| x.abs()).sum();
    Ok(FlowResidual { per_state, l1 })
}

/// Expected reward under a visitation: `<lam, r>`. For the visitation of a
/// policy this equals `(1-gamma) E_mu[v^pi]`.
pub fn primal_return<T: Scalar>(m: &Mdp<T>, lam: &Visitation<T>) -> Result<T> {
    if lam.mass.dim() != (m.n_states, m.n_actions) {
        return Err(Error::ShapeMismatch("visitation must be (S, A)"));
    }
    let mut acc = T::zero();
    for s in 0..m.n_states {
        for a in 0..m.n_actions {
            acc += lam.mass[[s, a]] * m.reward[[s, a]];
        }
    }
    Ok(acc)
}

/// Seeded random instance in the Garnet style: every `(s, a)` row supports
/// exactly `branching` uniformly chosen successor states with
/// Dirichlet(1,...,1) weights; rewards are U[0,1]; `mu` is uniform.
///
/// Returns the instance together with the seed that was accepted: seeds whose
/// instance has a state unreachable under the uniform policy are skipped by
/// probing `seed+1, seed+2, ...`. (With uniform `mu` every state has
/// visitation at least `(1-gamma)/|S| > 0`, so the first seed is always
/// accepted; the probe loop is a guard, not a code path that fires.)
pub fn random_mdp_probed<T: Scalar>(
    seed: u64,
    n_states: usize,
    n_actions: usize,
    branching: usize,
    discount: T,
) -> Result<(Mdp<T>, u64)> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::BadParameter("n_states and n_actions must be >= 1"));
    }
    if branching == 0 || branching > n_states {
        return Err(Error::BadBranching);
    }
    if !discount.is_finite() || discount <= T::zero() || discount >= T::one() {
        return Err(Error::BadDiscount);
    }
    for probe in 0u64..64 {
        let candidate_seed = seed.wrapping_add(probe);
        let mut r = rng::stream(candidate_seed, "instance");
        let mut transition = Array3::zeros((n_states, n_actions, n_states));
        let mut reward = Array2::zeros((n_states, n_actions));
        for s in 0..n_states {
            for a in 0..n_actions {
                let support = rng::random_subset(&mut r, n_states, branching);
                let weights = rng::simplex_point(&mut r, branching);
                for (k, &s2) in support.iter().enumerate() {
                    transition[[s, a, s2]] = T::from_real(weights[k]);
                }
                reward[[s, a]] = T::from_real(r.random::<f64>());
            }
        }
        let initial = Array1::from_elem(n_states, T::from_real(1.0 / n_states as f64));
        let m = Mdp::new(transition, reward, initial, discount)?;
        let lam = visitation_of_policy(&m, &Policy::uniform(n_states, n_actions))?;
        let marginals = lam.state_marginals();
        if marginals.iter().all(|&x| x > T::zero()) {
            return Ok((m, candidate_seed));
        }
    }
    Err(Error::BadParameter("no acceptable instance within 64 probe seeds"))
}

/// [`random_mdp_probed`] without the accepted-seed report.
pub fn random_mdp<T: Scalar>(
    seed: u64,
    n_states: usize,
    n_actions: usize,
    branching: usize,
    discount: T,
) -> Result<Mdp<T>> {
    random_mdp_probed(seed, n_states, n_actions, branching, discount).map(|(m, _)| m)
}

/// Reference distribution from a behavior policy: mix that policy's
/// visitation with the uniform floor,
/// `q = (1 - floor * |S||A|) * lambda_behavior + floor`.
///
/// `floor` must lie in `(0, 1/(|S||A|))` so the mixture stays a strictly
/// positive distribution.
pub fn behavior_reference<T: Scalar>(
    m: &Mdp<T>,
    behavior: &Policy<T>,
    floor: T,
) -> Result<ReferenceDistribution<T>> {
    let pairs = T::from_real(m.n_pairs() as f64);
    if !floor.is_finite() || floor <= T::zero() || floor * pairs >= T::one() {
        return Err(Error::FloorTooLarge);
    }
    let lam = visitation_of_policy(m, behavior)?;
    let keep = T::one() - floor * pairs;
    let q = lam.mass.mapv(|x| keep * x + floor);
    ReferenceDistribution::new(q)
}

#[derive(Serialize, Deserialize)]
struct MdpJson {
    n_states: usize,
    n_actions: usize,
    discount: f64,
    transition: Vec<Vec<Vec<f64>>>,
    reward: Vec<Vec<f64>>,
    initial: Vec<f64>,
}

/// Serialize an MDP to JSON. Floats are written in shortest-round-trip form,
/// so `mdp_from_json(mdp_to_json(m)) == m` bit for bit (for `f64` MDPs).
pub fn mdp_to_json<T: Scalar>(m: &Mdp<T>) -> String {
    let doc = MdpJson {
        n_states: m.n_states,
        n_actions: m.n_actions,
        discount: m.discount.to_real(),
        transition: (0..m.n_states)
            .map(|s| {
                (0..m.n_actions)
                    .map(|a| (0..m.n_states).map(|s2| m.transition[[s, a, s2]].to_real()).collect())
                    .collect()
            })
            .collect(),
        reward: (0..m.n_states)
            .map(|s| (0..m.n_actions).map(|a| m.reward[[s, a]].to_real()).collect())
            .collect(),
        initial: m.initial.iter().map(|x| x.to_real()).collect(),
    };
    serde_json::to_string_pretty(&doc).expect("plain data serializes")
}

/// Parse and validate an MDP from JSON produced by [`mdp_to_json`].
pub fn mdp_from_json<T: Scalar>(text: &str) -> Result<Mdp<T>> {
    let doc: MdpJson = serde_json::from_str(text)?;
    let (ns, na) = (doc.n_states, doc.n_actions);
    if doc.transition.len() != ns
        || doc.transition.iter().any(|r| r.len() != na || r.iter().any(|w| w.len() != ns))
        || doc.reward.len() != ns
        || doc.reward.iter().any(|r| r.len() != na)
        || doc.initial.len() != ns
    {
        return Err(Error::ShapeMismatch("JSON field shapes disagree with n_states/n_actions"));
    }
    let mut transition = Array3::zeros((ns, na, ns));
    let mut reward = Array2::zeros((ns, na));
    for s in 0..ns {
        for a in 0..na {
            reward[[s, a]] = T::from_real(doc.reward[s][a]);
            for s2 in 0..ns {
                transition[[s, a, s2]] = T::from_real(doc.transition[s][a][s2]);
            }
        }
    }
    let initial = Array1::from_iter(doc.initial.iter().map(|&x| T::from_real(x)));
    Mdp::new(transition, reward, initial, T::from_real(doc.discount))
}
