//! Regularizer contracts: closed forms on hand-solved cases, Fenchel-Young
//! consistency, numerical stability, convexity envelopes, and agreement with
//! the independent brute-force maximizer.

mod common;

use common::*;
use ndarray::Array2;
use rand::Rng;
use reps_core::error::Error;
use reps_core::mdp::{ReferenceDistribution, Visitation};
use reps_core::regularizers::*;
use reps_core::rng;

fn uniform_q(n: usize) -> ReferenceDistribution<f64> {
    ReferenceDistribution::uniform(1, n)
}

fn table(vals: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, vals.len()), vals.to_vec()).unwrap()
}

fn kl(eta: f64, n: usize) -> KlSpec<f64> {
    KlSpec::new(eta, uniform_q(n)).unwrap()
}

fn tsallis(eta: f64, alpha: f64, n: usize) -> TsallisSpec<f64> {
    TsallisSpec::new(eta, alpha, uniform_q(n)).unwrap()
}

fn random_table(n: usize, scale: f64, seed: u64) -> Array2<f64> {
    let mut r = rng::substream(seed, "reg-table", 0);
    table(&(0..n).map(|_| (r.random::<f64>() * 2.0 - 1.0) * scale).collect::<Vec<_>>())
}

fn random_simplex_table(n: usize, seed: u64) -> Array2<f64> {
    let mut r = rng::substream(seed, "reg-simplex", 0);
    table(&rng::simplex_point(&mut r, n))
}

#[test]
fn kl_value_reference_point_and_floor() {
    let spec = kl(2.0, 4);
    // F(q) = -1/eta exactly.
    let at_q = kl_value(&Visitation::new(spec.q.q.clone()).unwrap(), &spec).unwrap();
    assert_close(at_q, -0.5, 1e-15, "F(q) = -1/eta");
    // F >= -1/eta everywhere on the simplex, and mass on a zero coordinate
    // is handled by the 0 log 0 = 0 convention.
    for seed in 0..50 {
        let lam = Visitation::new(random_simplex_table(4, seed)).unwrap();
        let f = kl_value(&lam, &spec).unwrap();
        assert!(f >= -0.5 - 1e-12, "F(lam) = {f} below the minimum");
    }
    let corner = Visitation::new(table(&[1.0, 0.0, 0.0, 0.0])).unwrap();
    let f = kl_value(&corner, &spec).unwrap();
    // F(corner) = (1/eta)(log(1/q) - 1) = (log 4 - 1)/2.
    assert_close(f, (4.0f64.ln() - 1.0) / 2.0, 1e-14, "corner value");
}

#[test]
fn kl_conjugate_hand_case() {
    // q = (1/2, 1/2), eta = 1, u = (1, 0):
    //   F*(u) = log(q . e^u) + 1 = log((e + 1)/2) + 1,
    //   argmax = (e/(e+1), 1/(e+1)), log Z = log((e+1)/2).
    let spec = kl(1.0, 2);
    let u = table(&[1.0, 0.0]);
    let res = kl_conjugate(&u, &spec).unwrap();
    let e = std::f64::consts::E;
    assert_close(res.value, ((e + 1.0) / 2.0).ln() + 1.0, 1e-14, "conjugate value");
    assert_close(res.normalizer, ((e + 1.0) / 2.0).ln(), 1e-14, "log Z");
    assert_close(res.argmax[[0, 0]], e / (e + 1.0), 1e-14, "argmax 0");
    assert_close(res.argmax[[0, 1]], 1.0 / (e + 1.0), 1e-14, "argmax 1");
    // At u = 0 the maximizer is q itself and F* = 1/eta.
    let res0 = kl_conjugate(&table(&[0.0, 0.0]), &spec).unwrap();
    assert_close(res0.value, 1.0, 1e-15, "F*(0) = 1/eta");
    assert_close(res0.argmax[[0, 0]], 0.5, 1e-15, "argmax at 0 is q");
}

#[test]
fn kl_conjugate_is_stable_at_large_arguments() {
    // ||eta u||_inf = 1e4: naive exponentiation overflows, the shifted
    // evaluation must not.
    let spec = kl(10.0, 3);
    let u = table(&[1000.0, -1000.0, 999.9]);
    let res = kl_conjugate(&u, &spec).unwrap();
    assert!(res.value.is_finite());
    let total: f64 = res.argmax.iter().sum();
    assert_close(total, 1.0, ARGMAX_SUM_TOL, "argmax normalized");
    assert!(res.argmax.iter().all(|&x| x >= 0.0));
    // The tiny coordinate underflows to zero mass, the big ones split by
    // softmax of 10 * (1000 - 999.9) = 1.
    let e = std::f64::consts::E;
    assert_close(res.argmax[[0, 0]], e / (e + 1.0), 1e-9, "dominant coordinate");
    assert!(matches!(
        kl_conjugate(&table(&[f64::INFINITY, 0.0, 0.0]), &spec),
        Err(Error::NonFiniteInput)
    ));
}

#[test]
fn tsallis_value_basics() {
    let spec = tsallis(2.0, 2.0, 2);
    // F(q) = 0; F >= 0 on the simplex.
    let at_q = tsallis_value(&Visitation::new(spec.q.q.clone()).unwrap(), &spec).unwrap();
    assert_close(at_q, 0.0, 1e-15, "F(q) = 0");
    for seed in 0..50 {
        let lam = Visitation::new(random_simplex_table(2, seed)).unwrap();
        assert!(tsallis_value(&lam, &spec).unwrap() >= -1e-15);
    }
    // alpha = 2: F(lam) = (sum lam^2/q - 1)/eta. At lam = (3/4, 1/4),
    // q = (1/2, 1/2): sum lam^2/q = 2(9/16 + 1/16) = 5/4, F = (1/4)/2 = 1/8.
    let lam = Visitation::new(table(&[0.75, 0.25])).unwrap();
    assert_close(tsallis_value(&lam, &spec).unwrap(), 0.125, 1e-15, "quadratic case");
    // Parameter validation.
    assert!(matches!(
        TsallisSpec::new(2.0, 1.0, uniform_q(2)),
        Err(Error::BadParameter(_))
    ));
    assert!(matches!(
        TsallisSpec::new(2.0, 2.5, uniform_q(2)),
        Err(Error::BadParameter(_))
    ));
    assert!(matches!(KlSpec::new(0.0, uniform_q(2)), Err(Error::BadParameter(_))));
}

#[test]
fn tsallis_conjugate_hand_cases() {
    // Interior case: q = (1/2, 1/2), eta = 2, alpha = 2, u = (1, 0).
    // Water-filling with everything active: lam_i = q_i (u_i + x),
    // sum = 1/2 + x = 1 => x = 1/2, lam = (3/4, 1/4),
    // F* = <lam, u> - F(lam) = 3/4 - 1/8 = 5/8.
    let spec = tsallis(2.0, 2.0, 2);
    let res = tsallis_conjugate(&table(&[1.0, 0.0]), &spec).unwrap();
    assert_close(res.value, 0.625, 1e-12, "interior conjugate value");
    assert_close(res.normalizer, 0.5, 1e-12, "interior threshold");
    assert_close(res.argmax[[0, 0]], 0.75, 1e-12, "interior argmax 0");
    assert_close(res.argmax[[0, 1]], 0.25, 1e-12, "interior argmax 1");
    // Boundary case: u = (10, 0) pushes all mass to the first coordinate:
    // lam = (1, 0) via x = -8 (second coordinate inactive: u_2 + x < 0),
    // F(lam) = 1/2, F* = 10 - 1/2.
    let res = tsallis_conjugate(&table(&[10.0, 0.0]), &spec).unwrap();
    assert_close(res.value, 9.5, 1e-12, "boundary conjugate value");
    assert_close(res.normalizer, -8.0, 1e-12, "boundary threshold");
    assert_close(res.argmax[[0, 0]], 1.0, 1e-12, "boundary argmax 0");
    assert_close(res.argmax[[0, 1]], 0.0, 1e-12, "boundary argmax 1");
    assert!(matches!(
        tsallis_conjugate(&table(&[f64::NAN, 0.0]), &spec),
        Err(Error::NonFiniteInput)
    ));
}

#[test]
fn conjugate_argmax_sums_to_one_everywhere() {
    for seed in 0..40u64 {
        let n = 2 + (seed % 5) as usize;
        let u = random_table(n, 5.0, seed);
        let ks = kl(0.5 + (seed % 3) as f64, n);
        let res = kl_conjugate(&u, &ks).unwrap();
        let total: f64 = res.argmax.iter().sum();
        assert_close(total, 1.0, ARGMAX_SUM_TOL, "KL argmax sum");
        let alpha = 1.0 + 0.25 * (1 + seed % 4) as f64;
        let ts = tsallis(0.5 + (seed % 3) as f64, alpha, n);
        let res = tsallis_conjugate(&u, &ts).unwrap();
        let total: f64 = res.argmax.iter().sum();
        assert_close(total, 1.0, ARGMAX_SUM_TOL, "Tsallis argmax sum");
        assert!(res.argmax.iter().all(|&x| x >= 0.0), "Tsallis argmax nonnegative");
    }
}

#[test]
fn fenchel_young_identity_holds() {
    // F(argmax) + F*(u) - <argmax, u> = 0 at the maximizer.
    for seed in 0..60u64 {
        let n = 2 + (seed % 4) as usize;
        let u = random_table(n, 4.0, seed);
        let ks = kl(1.0 + (seed % 2) as f64, n);
        let res = kl_conjugate(&u, &ks).unwrap();
        let lam = Visitation::new(res.argmax.clone()).unwrap();
        let inner: f64 = res.argmax.iter().zip(u.iter()).map(|(&l, &x)| l * x).sum();
        let gap = kl_value(&lam, &ks).unwrap() + res.value - inner;
        assert!(gap.abs() <= 1e-8, "KL Fenchel-Young gap {gap} at seed {seed}");

        let alpha = 1.0 + 0.25 * (1 + seed % 4) as f64;
        let ts = tsallis(1.0 + (seed % 2) as f64, alpha, n);
        let res = tsallis_conjugate(&u, &ts).unwrap();
        let lam = Visitation::new(res.argmax.clone()).unwrap();
        let inner: f64 = res.argmax.iter().zip(u.iter()).map(|(&l, &x)| l * x).sum();
        let gap = tsallis_value(&lam, &ts).unwrap() + res.value - inner;
        assert!(gap.abs() <= 1e-8, "Tsallis Fenchel-Young gap {gap} at seed {seed}");
    }
}

#[test]
fn tsallis_closed_form_cross_check() {
    // Substituting the stationarity condition
    // u_i + x = alpha (lam_i/q_i)^(alpha-1) / (eta (alpha-1)) (active i)
    // into <lam, u> - F(lam) collapses the divergence term and leaves
    // F*(u) = sum_active lam_i (u_i - (u_i + x)/alpha) + 1/(eta (alpha-1)).
    // Cross-check the variational value against this algebraic form.
    for seed in 0..40u64 {
        let n = 2 + (seed % 4) as usize;
        let alpha = 1.0 + 0.25 * (1 + seed % 4) as f64;
        let eta = 0.5 + (seed % 3) as f64;
        let spec = tsallis(eta, alpha, n);
        let u = random_table(n, 3.0, seed);
        let res = tsallis_conjugate(&u, &spec).unwrap();
        let x = res.normalizer;
        let mut algebraic = 1.0 / (eta * (alpha - 1.0));
        for (&l, &ui) in res.argmax.iter().zip(u.iter()) {
            if l > 0.0 {
                algebraic += l * (ui - (ui + x) / alpha);
            }
        }
        assert_close(res.value, algebraic, 1e-9, "algebraic form agrees");
    }
}

#[test]
fn conjugates_match_bruteforce() {
    // Subset of the acceptance sweep: both conjugates against the projected
    // gradient oracle on small tables.
    for seed in 0..25u64 {
        let n = 2 + (seed % 3) as usize;
        let u = random_table(n, 3.0, 1000 + seed);
        let ks = kl(1.0 + (seed % 2) as f64, n);
        let reg = Regularizer::Kl(ks.clone());
        let exact = kl_conjugate(&u, &ks).unwrap().value;
        let brute = conjugate_bruteforce(&u, &reg, 1e-8).unwrap();
        assert_close(brute, exact, 1e-6, "KL vs bruteforce");

        let alpha = 1.0 + 0.25 * (1 + seed % 4) as f64;
        let ts = tsallis(1.0 + (seed % 2) as f64, alpha, n);
        let reg = Regularizer::Tsallis(ts.clone());
        let exact = tsallis_conjugate(&u, &ts).unwrap().value;
        let brute = conjugate_bruteforce(&u, &reg, 1e-8).unwrap();
        assert_close(brute, exact, 1e-4, "Tsallis vs bruteforce");
    }
}

#[test]
fn bruteforce_rejects_large_tables() {
    let q = ReferenceDistribution::<f64>::uniform(13, 5);
    let reg = Regularizer::Kl(KlSpec::new(1.0, q).unwrap());
    let u = Array2::zeros((13, 5));
    assert!(matches!(
        conjugate_bruteforce(&u, &reg, 1e-6),
        Err(Error::DimensionTooLarge { dim: 65, max: 64 })
    ));
}

#[test]
fn strong_convexity_envelopes() {
    // Gradient-free characterization along segments:
    // F((1-t) a + t b) <= (1-t) F(a) + t F(b) - (sigma/2) t (1-t) ||a-b||^2
    // with sigma = 1/eta in l1 (KL) and alpha/eta in l2 (Tsallis).
    let t = 0.375;
    for seed in 0..30u64 {
        let n = 3;
        let a = random_simplex_table(n, 7000 + seed);
        let b = random_simplex_table(n, 8000 + seed);
        let mix = Visitation::new(&a * (1.0 - t) + &b * t).unwrap();
        let d1: f64 = a.iter().zip(b.iter()).map(|(&x, &y)| (x - y).abs()).sum();
        let d2: f64 = a.iter().zip(b.iter()).map(|(&x, &y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let va = Visitation::new(a.clone()).unwrap();
        let vb = Visitation::new(b.clone()).unwrap();

        let ks = kl(2.0, n);
        let lhs = kl_value(&mix, &ks).unwrap();
        let rhs = (1.0 - t) * kl_value(&va, &ks).unwrap() + t * kl_value(&vb, &ks).unwrap()
            - 0.5 * (1.0 / 2.0) * t * (1.0 - t) * d1 * d1;
        assert!(lhs <= rhs + 1e-10, "KL strong convexity violated: {lhs} > {rhs}");

        let ts = tsallis(2.0, 1.5, n);
        let lhs = tsallis_value(&mix, &ts).unwrap();
        let rhs = (1.0 - t) * tsallis_value(&va, &ts).unwrap()
            + t * tsallis_value(&vb, &ts).unwrap()
            - 0.5 * (1.5 / 2.0) * t * (1.0 - t) * d2 * d2;
        assert!(lhs <= rhs + 1e-10, "Tsallis strong convexity violated: {lhs} > {rhs}");
    }
}

#[test]
fn conjugate_smoothness_envelopes() {
    // Dual side of strong convexity: F* is eta-smooth in l-inf (KL) and
    // (eta/alpha)-smooth in l2 (Tsallis):
    // F*(u') <= F*(u) + <argmax(u), u' - u> + (L/2) ||u' - u||^2.
    for seed in 0..30u64 {
        let n = 4;
        let u = random_table(n, 3.0, 100 + seed);
        let w = random_table(n, 3.0, 200 + seed);
        let dinf = u.iter().zip(w.iter()).fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()));
        let d2: f64 = u.iter().zip(w.iter()).map(|(&a, &b)| (a - b) * (a - b)).sum::<f64>().sqrt();

        let eta = 1.5;
        let ks = kl(eta, n);
        let ru = kl_conjugate(&u, &ks).unwrap();
        let rw = kl_conjugate(&w, &ks).unwrap();
        let inner: f64 = ru.argmax.iter().zip(w.iter().zip(u.iter())).map(|(&l, (&b, &a))| l * (b - a)).sum();
        assert!(
            rw.value <= ru.value + inner + 0.5 * eta * dinf * dinf + 1e-10,
            "KL conjugate smoothness violated at seed {seed}"
        );

        let alpha = 1.5;
        let ts = tsallis(eta, alpha, n);
        let ru = tsallis_conjugate(&u, &ts).unwrap();
        let rw = tsallis_conjugate(&w, &ts).unwrap();
        let inner: f64 = ru.argmax.iter().zip(w.iter().zip(u.iter())).map(|(&l, (&b, &a))| l * (b - a)).sum();
        assert!(
            rw.value <= ru.value + inner + 0.5 * (eta / alpha) * d2 * d2 + 1e-10,
            "Tsallis conjugate smoothness violated at seed {seed}"
        );
    }
}

#[test]
fn conjugates_shift_with_constants() {
    // sup over the simplex: F*(u + c 1) = F*(u) + c for any constant c.
    let c = 2.75;
    for seed in 0..20u64 {
        let n = 3;
        let u = random_table(n, 4.0, 300 + seed);
        let shifted = u.mapv(|x| x + c);
        let ks = kl(1.25, n);
        assert_close(
            kl_conjugate(&shifted, &ks).unwrap().value,
            kl_conjugate(&u, &ks).unwrap().value + c,
            1e-9,
            "KL shift identity",
        );
        let ts = tsallis(1.25, 1.75, n);
        assert_close(
            tsallis_conjugate(&shifted, &ts).unwrap().value,
            tsallis_conjugate(&u, &ts).unwrap().value + c,
            1e-9,
            "Tsallis shift identity",
        );
    }
}

#[test]
fn shape_mismatch_is_rejected() {
    let ks = kl(1.0, 3);
    assert!(matches!(
        kl_conjugate(&table(&[0.0, 0.0]), &ks),
        Err(Error::ShapeMismatch(_))
    ));
    let ts = tsallis(1.0, 2.0, 3);
    assert!(matches!(
        tsallis_conjugate(&table(&[0.0, 0.0]), &ts),
        Err(Error::ShapeMismatch(_))
    ));
}
