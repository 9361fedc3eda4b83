//! Divergence regularizers over occupancy measures and their convex
//! conjugates.
//!
//! Two families, both scaled by `1/eta` and anchored at a strictly positive
//! reference distribution `q`:
//!
//! * KL: `F(lam) = (1/eta) sum lam (log(lam/q) - 1)`, strongly convex with
//!   modulus `1/eta` in l1. Conjugate is a log-sum-exp with softmax argmax.
//! * Tsallis (order `alpha` in `(1, 2]`):
//!   `F(lam) = 1/(eta (alpha-1)) (sum q (lam/q)^alpha - 1)`, strongly convex
//!   with modulus `alpha/eta` in l2. Conjugate argmax is a water-filling
//!   threshold solved by bisection on the normalizer.
//!
//! A projected-gradient brute-force maximizer over the simplex serves as an
//! independent oracle for both conjugates.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::mdp::{ReferenceDistribution, Visitation};
use crate::rng;
use crate::scalar::Scalar;

/// Tolerance on `|sum(argmax) - 1|` for the conjugate argmax.
pub const ARGMAX_SUM_TOL: f64 = 1e-12;
/// Largest flattened dimension the brute-force oracle accepts.
pub const BRUTEFORCE_MAX_DIM: usize = 64;

/// KL regularizer parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct KlSpec<T> {
    /// Temperature; larger `eta` means weaker regularization.
    pub eta: T,
    pub q: ReferenceDistribution<T>,
}

impl<T: Scalar> KlSpec<T> {
    pub fn new(eta: T, q: ReferenceDistribution<T>) -> Result<Self> {
        if !eta.is_finite() || eta <= T::zero() {
            return Err(Error::BadParameter("eta must be finite and positive"));
        }
        Ok(KlSpec { eta, q })
    }
}

/// Tsallis regularizer parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TsallisSpec<T> {
    pub eta: T,
    /// Divergence order, in `(1, 2]`. At `alpha -> 1` the family degenerates
    /// to KL; `alpha = 2` is the chi-square-like quadratic case.
    pub alpha: T,
    pub q: ReferenceDistribution<T>,
}

impl<T: Scalar> TsallisSpec<T> {
    pub fn new(eta: T, alpha: T, q: ReferenceDistribution<T>) -> Result<Self> {
        if !eta.is_finite() || eta <= T::zero() {
            return Err(Error::BadParameter("eta must be finite and positive"));
        }
        if !alpha.is_finite() || alpha <= T::one() || alpha > T::from_real(2.0) {
            return Err(Error::BadParameter("alpha must lie in (1, 2]"));
        }
        Ok(TsallisSpec { eta, alpha, q })
    }
}

/// Value, maximizer, and normalizer of a conjugate evaluation
/// `F*(u) = max_{lam in simplex} <lam, u> - F(lam)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateResult<T> {
    pub value: T,
    /// The maximizing distribution (sums to 1 within [`ARGMAX_SUM_TOL`]).
    pub argmax: Array2<T>,
    /// KL: `log Z` of the softmax; Tsallis: the threshold `x*` that
    /// normalizes the water-filling solution.
    pub normalizer: T,
}

/// One of the supported regularizers.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer<T> {
    Kl(KlSpec<T>),
    Tsallis(TsallisSpec<T>),
}

impl<T: Scalar> Regularizer<T> {
    pub fn eta(&self) -> T {
        match self {
            Regularizer::Kl(k) => k.eta,
            Regularizer::Tsallis(t) => t.eta,
        }
    }

    pub fn reference(&self) -> &ReferenceDistribution<T> {
        match self {
            Regularizer::Kl(k) => &k.q,
            Regularizer::Tsallis(t) => &t.q,
        }
    }

    /// `F(lam)` on a validated occupancy measure.
    pub fn value(&self, lam: &Visitation<T>) -> Result<T> {
        match self {
            Regularizer::Kl(k) => kl_value(lam, k),
            Regularizer::Tsallis(t) => tsallis_value(lam, t),
        }
    }

    /// `F*(u)` with maximizer and normalizer.
    pub fn conjugate(&self, u: &Array2<T>) -> Result<ConjugateResult<T>> {
        match self {
            Regularizer::Kl(k) => kl_conjugate(u, k),
            Regularizer::Tsallis(t) => tsallis_conjugate(u, t),
        }
    }

    /// Strong-convexity modulus of `F` (in l1 for KL, l2 for Tsallis).
    pub fn strong_convexity(&self) -> T {
        match self {
            Regularizer::Kl(k) => k.eta.recip(),
            Regularizer::Tsallis(t) => t.alpha / t.eta,
        }
    }

    /// `F` on a raw nonnegative table of matching shape (no normalization
    /// requirement); used by the brute-force oracle.
    fn value_raw(&self, mass: &Array2<T>) -> T {
        match self {
            Regularizer::Kl(k) => kl_value_raw(mass, k),
            Regularizer::Tsallis(t) => tsallis_value_raw(mass, t),
        }
    }

    /// Gradient of `F` at a raw table, with entries clamped away from zero so
    /// the KL log stays finite (the simplex projection keeps iterates
    /// feasible anyway).
    fn grad_raw(&self, mass: &Array2<T>, out: &mut Array2<T>) {
        let tiny = T::from_real(1e-300).max(T::min_positive_value());
        match self {
            Regularizer::Kl(k) => {
                for (o, (&x, &q)) in out.iter_mut().zip(mass.iter().zip(k.q.q.iter())) {
                    *o = (x.max(tiny) / q).ln() / k.eta;
                }
            }
            Regularizer::Tsallis(t) => {
                let coef = t.alpha / (t.eta * (t.alpha - T::one()));
                let e = t.alpha - T::one();
                for (o, (&x, &q)) in out.iter_mut().zip(mass.iter().zip(t.q.q.iter())) {
                    *o = coef * (x.max(T::zero()) / q).powf(e);
                }
            }
        }
    }
}

fn check_table_shape<T: Scalar>(x: &Array2<T>, q: &ReferenceDistribution<T>) -> Result<()> {
    if x.dim() != q.q.dim() {
        return Err(Error::ShapeMismatch("table shape must match the reference distribution"));
    }
    Ok(())
}

fn kl_value_raw<T: Scalar>(mass: &Array2<T>, spec: &KlSpec<T>) -> T {
    let mut acc = T::zero();
    for (&x, &q) in mass.iter().zip(spec.q.q.iter()) {
        if x > T::zero() {
            // x (log(x/q) - 1); the x = 0 term contributes 0.
            acc += x * ((x / q).ln() - T::one());
        }
    }
    acc / spec.eta
}

/// `F(lam)` for the KL regularizer. Minimized at `lam = q` with value
/// `-1/eta`.
pub fn kl_value<T: Scalar>(lam: &Visitation<T>, spec: &KlSpec<T>) -> Result<T> {
    check_table_shape(&lam.mass, &spec.q)?;
    Ok(kl_value_raw(&lam.mass, spec))
}

/// `F*(u)` for the KL regularizer:
/// `(1/eta) log sum q exp(eta u) + 1/eta`, softmax argmax.
///
/// Evaluated max-shifted, so it is stable for `||eta u||_inf` up to the
/// exponent range of the scalar type.
pub fn kl_conjugate<T: Scalar>(u: &Array2<T>, spec: &KlSpec<T>) -> Result<ConjugateResult<T>> {
    check_table_shape(u, &spec.q)?;
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let shift = u.iter().fold(T::neg_infinity(), |m, &x| m.max(spec.eta * x));
    let mut z_shifted = T::zero();
    let mut argmax = Array2::zeros(u.raw_dim());
    for ((o, &x), &q) in argmax.iter_mut().zip(u.iter()).zip(spec.q.q.iter()) {
        let w = q * (spec.eta * x - shift).exp();
        *o = w;
        z_shifted += w;
    }
    argmax.mapv_inplace(|w| w / z_shifted);
    let log_z = shift + z_shifted.ln();
    let value = (log_z + T::one()) / spec.eta;
    Ok(ConjugateResult { value, argmax, normalizer: log_z })
}

fn tsallis_value_raw<T: Scalar>(mass: &Array2<T>, spec: &TsallisSpec<T>) -> T {
    let mut acc = T::zero();
    for (&x, &q) in mass.iter().zip(spec.q.q.iter()) {
        acc += q * (x.max(T::zero()) / q).powf(spec.alpha);
    }
    (acc - T::one()) / (spec.eta * (spec.alpha - T::one()))
}

/// `F(lam)` for the Tsallis regularizer. Nonnegative, zero iff `lam = q`.
pub fn tsallis_value<T: Scalar>(lam: &Visitation<T>, spec: &TsallisSpec<T>) -> Result<T> {
    check_table_shape(&lam.mass, &spec.q)?;
    Ok(tsallis_value_raw(&lam.mass, spec))
}

/// Water-filling solution `lam_i(x) = q_i ((alpha-1)/alpha * eta (u_i+x))_+^{1/(alpha-1)}`
/// written with the constant pulled out.
fn tsallis_lambda<T: Scalar>(u: &Array2<T>, spec: &TsallisSpec<T>, x: T, out: &mut Array2<T>) -> T {
    let e = (spec.alpha - T::one()).recip();
    let coef = (spec.alpha - T::one()) / spec.alpha * spec.eta;
    let mut total = T::zero();
    for ((o, &ui), &q) in out.iter_mut().zip(u.iter()).zip(spec.q.q.iter()) {
        let base = coef * (ui + x);
        let lam = if base > T::zero() { q * base.powf(e) } else { T::zero() };
        *o = lam;
        total += lam;
    }
    total
}

/// `F*(u)` for the Tsallis regularizer.
///
/// The argmax thresholds at a normalizer `x*` chosen so the water-filling
/// solution sums to 1; `x*` is found by bisection on a guaranteed bracket
/// (the sum is 0 at the low end and >= 1 at the high end) and polished by
/// Newton steps. The value is evaluated variationally as
/// `<lam(u), u> - F(lam(u))`.
pub fn tsallis_conjugate<T: Scalar>(
    u: &Array2<T>,
    spec: &TsallisSpec<T>,
) -> Result<ConjugateResult<T>> {
    check_table_shape(u, &spec.q)?;
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let u_max = u.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let u_inf = u.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    let q_min = spec.q.beta;
    // At x = u_inf + c0, every coordinate satisfies
    // (alpha-1)/alpha * eta (u_i + x) >= (1/q_min)^(alpha-1), so the sum is
    // at least sum q_i / q_min >= 1. At x = -u_max the sum is 0.
    let c0 = spec.alpha / (spec.eta * (spec.alpha - T::one()))
        * q_min.recip().powf(spec.alpha - T::one());
    let mut lo = -u_max;
    let mut hi = u_inf + c0;
    let mut lam = Array2::zeros(u.raw_dim());
    if !(tsallis_lambda(u, spec, hi, &mut lam) >= T::one())
        || !(tsallis_lambda(u, spec, lo, &mut lam) <= T::one())
    {
        return Err(Error::BisectionNoBracket);
    }
    let target = T::from_real(ARGMAX_SUM_TOL).max(T::epsilon() * T::from_real(16.0));
    let mut x = (lo + hi) / T::from_real(2.0);
    let mut total = tsallis_lambda(u, spec, x, &mut lam);
    for _ in 0..200 {
        if (total - T::one()).abs() <= target {
            break;
        }
        if total > T::one() {
            hi = x;
        } else {
            lo = x;
        }
        let next = (lo + hi) / T::from_real(2.0);
        if next == x || next <= lo || next >= hi {
            break;
        }
        x = next;
        total = tsallis_lambda(u, spec, x, &mut lam);
    }
    // Newton polish: on the active set, d lam_i / dx = lam_i / ((alpha-1)(u_i+x)).
    // Runs even once the bisection target is met, sharpening x towards machine
    // precision; steps are kept inside the bracket so it can only improve.
    for _ in 0..8 {
        if total == T::one() {
            break;
        }
        if total > T::one() {
            hi = x;
        } else {
            lo = x;
        }
        let mut slope = T::zero();
        for (&l, &ui) in lam.iter().zip(u.iter()) {
            if l > T::zero() {
                slope += l / ((spec.alpha - T::one()) * (ui + x));
            }
        }
        if !(slope > T::zero()) || !slope.is_finite() {
            break;
        }
        let next = x - (total - T::one()) / slope;
        if !next.is_finite() || next <= lo || next >= hi || next == x {
            break;
        }
        x = next;
        total = tsallis_lambda(u, spec, x, &mut lam);
    }
    let gap = (total - T::one()).abs();
    if gap.to_real() > ARGMAX_SUM_TOL && gap > T::epsilon() * T::from_real(64.0) {
        return Err(Error::BisectionNoBracket);
    }
    // Rescale onto the simplex: the objective is stationary along feasible
    // directions at the maximizer, so this turns the root-finder's remaining
    // first-order value error (of size |x| * gap) into a second-order one.
    lam.mapv_inplace(|l| l / total);
    let inner: T = lam.iter().zip(u.iter()).map(|(&l, &ui)| l * ui).sum();
    let value = inner - tsallis_value_raw(&lam, spec);
    Ok(ConjugateResult { value, argmax: lam, normalizer: x })
}

/// Euclidean projection of `x` onto the probability simplex (in place).
fn project_simplex<T: Scalar>(x: &mut [T]) {
    let mut sorted: Vec<T> = x.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut acc = T::zero();
    let mut theta = T::zero();
    let mut k = T::zero();
    for (j, &v) in sorted.iter().enumerate() {
        acc += v;
        let jn = T::from_real((j + 1) as f64);
        let cand = (acc - T::one()) / jn;
        if v - cand > T::zero() {
            theta = cand;
            k = jn;
        }
    }
    debug_assert!(k > T::zero());
    for v in x.iter_mut() {
        *v = (*v - theta).max(T::zero());
    }
}

/// Independent maximization of `<lam, u> - F(lam)` over the simplex by
/// projected gradient ascent with backtracking, restarted from 32
/// deterministic starting points. Exists as an oracle to cross-check the
/// closed-form conjugates; refuses tables with more than
/// [`BRUTEFORCE_MAX_DIM`] entries.
pub fn conjugate_bruteforce<T: Scalar>(
    u: &Array2<T>,
    reg: &Regularizer<T>,
    tol: T,
) -> Result<T> {
    check_table_shape(u, reg.reference())?;
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let dim = u.len();
    if dim > BRUTEFORCE_MAX_DIM {
        return Err(Error::DimensionTooLarge { dim, max: BRUTEFORCE_MAX_DIM });
    }
    let shape = u.raw_dim();
    let objective = |x: &Array2<T>| -> T {
        let inner: T = x.iter().zip(u.iter()).map(|(&l, &ui)| l * ui).sum();
        inner - reg.value_raw(x)
    };
    let mut best = T::neg_infinity();
    let mut grad_f = Array2::zeros(shape);
    for restart in 0..32u64 {
        let mut x: Array2<T> = if restart == 0 {
            Array2::from_elem(shape, T::from_real(1.0 / dim as f64))
        } else {
            let mut r = rng::substream(0, "conjugate-bruteforce", restart);
            let point = rng::simplex_point(&mut r, dim);
            Array2::from_shape_vec(shape, point.iter().map(|&p| T::from_real(p)).collect())
                .expect("shape matches")
        };
        let mut fx = objective(&x);
        let mut step = T::one();
        for _ in 0..50_000 {
            reg.grad_raw(&x, &mut grad_f);
            // Ascent direction of the concave objective.
            let g: Array2<T> = u - &grad_f;
            step = (step * T::from_real(4.0)).min(T::from_real(1e4));
            let mut advanced = false;
            while step > T::from_real(1e-18) {
                let mut cand = &x + &g.mapv(|v| v * step);
                project_simplex(cand.as_slice_mut().expect("contiguous"));
                let fc = objective(&cand);
                let lin: T =
                    g.iter().zip(cand.iter().zip(x.iter())).map(|(&gi, (&c, &xi))| gi * (c - xi)).sum();
                if fc >= fx + T::from_real(1e-4) * lin && fc.is_finite() {
                    let moved: T =
                        cand.iter().zip(x.iter()).map(|(&c, &xi)| (c - xi).abs()).sum();
                    x = cand;
                    fx = fc;
                    advanced = moved > tol * T::from_real(1e-3);
                    break;
                }
                step = step / T::from_real(2.0);
            }
            if !advanced {
                break;
            }
        }
        if fx > best {
            best = fx;
        }
    }
    Ok(best)
}
