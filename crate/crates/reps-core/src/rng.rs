//! Deterministic random-stream derivation.
//!
//! Every random quantity in the crate comes from a ChaCha8 stream keyed by a
//! `(master seed, purpose label)` pair — adding a new consumer never perturbs
//! existing streams, and the same seed reproduces the same run bit for bit on
//! any platform. Derivation is FNV-1a (64-bit) over the little-endian master
//! seed followed by the label bytes; the constants below are the standard
//! FNV-1a offset basis and prime, fixed here forever as part of the
//! reproducibility contract.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Stream seed for `label` under `master`.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let h = fnv1a(FNV_OFFSET, &master.to_le_bytes());
    fnv1a(h, label.as_bytes())
}

/// Seeded generator for one purpose, e.g. `stream(seed, "instance")`.
pub fn stream(master: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label))
}

/// Indexed child stream under a purpose, e.g. one per trial or per policy.
pub fn substream(master: u64, label: &str, index: u64) -> ChaCha8Rng {
    let h = fnv1a(derive_seed(master, label), &index.to_le_bytes());
    ChaCha8Rng::seed_from_u64(h)
}

/// Uniform sample from the probability simplex in `n` coordinates
/// (equivalently Dirichlet(1,...,1)): normalized Exp(1) draws.
///
/// Sampling happens in `f64` regardless of the consumer's scalar type so
/// that instance generation is identical across instantiations.
pub fn simplex_point(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    assert!(n > 0, "simplex_point needs n >= 1");
    loop {
        let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let total: f64 = e.iter().sum();
        if total > 0.0 && total.is_finite() {
            return e.iter().map(|x| x / total).collect();
        }
    }
}

/// First `k` elements of a Fisher–Yates shuffle of `0..n`: a uniform random
/// `k`-subset in random order.
pub fn random_subset(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    assert!(k <= n);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

/// Sample an index from a (not necessarily normalized) nonnegative weight
/// table by inverse CDF on a single uniform draw.
pub fn sample_weighted(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0 && total.is_finite());
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}
