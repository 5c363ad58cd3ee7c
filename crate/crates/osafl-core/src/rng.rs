//! Deterministic random streams keyed by `(seed, domain, client, round)`.
//!
//! Every source of randomness in the simulator draws from its own ChaCha
//! stream derived from the experiment seed plus a purpose tag (the
//! [`domain`] constants) and the client/round it belongs to. Streams never
//! depend on which protocol is running or on execution order, so a parallel
//! run is bit-identical to a serial one and two protocols under the same
//! seed see identical request streams.

use crate::math;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Purpose tags separating the independent streams of one experiment.
pub mod domain {
    /// Catalog generation (features, popularity orders). Keyed by seed only.
    pub const CATALOG: u64 = 1;
    /// Global model initialization. Keyed by seed only.
    pub const MODEL_INIT: u64 = 2;
    /// Client capability/profile/position sampling. Keyed by (seed, client).
    pub const POPULATION: u64 = 3;
    /// Content requests, including the warm-up fill at round 0.
    pub const REQUESTS: u64 = 4;
    /// Per-round Bernoulli sample arrivals.
    pub const ARRIVALS: u64 = 5;
    /// Per-round link realization (shadowing).
    pub const LINK: u64 = 6;
    /// Mini-batch index sampling during local training.
    pub const TRAINING: u64 = 7;
    /// Held-out evaluation request streams (never fed back into training).
    pub const EVAL: u64 = 8;
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the ChaCha stream for `(seed, domain, client, round)`.
///
/// Streams for distinct keys are statistically independent; identical keys
/// always produce identical streams.
pub fn stream(seed: u64, domain: u64, client: u64, round: u64) -> ChaCha8Rng {
    let h0 = splitmix64(seed ^ 0xA076_1D64_78BD_642F);
    let h1 = splitmix64(h0 ^ domain);
    let h2 = splitmix64(h1 ^ client);
    let mut z = splitmix64(h2 ^ round);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        z = splitmix64(z);
        chunk.copy_from_slice(&z.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Uniform draw from `[0, 1)` with 53-bit resolution.
pub fn uniform_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw from `[lo, hi)`.
pub fn uniform_range(rng: &mut impl RngCore, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform_f64(rng)
}

/// Uniform index in `[0, n)`. `n` must be positive.
pub fn uniform_index(rng: &mut impl RngCore, n: usize) -> usize {
    debug_assert!(n > 0);
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

/// Standard normal draw (Box-Muller; fixed two u64 draws per call).
pub fn standard_normal(rng: &mut impl RngCore) -> f64 {
    let u1 = uniform_f64(rng).max(f64::MIN_POSITIVE);
    let u2 = uniform_f64(rng);
    math::sqrt(-2.0 * math::ln(u1)) * math::cos(math::TAU * u2)
}

/// Sample an index from a (close to normalized) probability vector.
///
/// Floating-point shortfall in the cumulative sum falls through to the last
/// index, so the draw is always valid.
pub fn sample_categorical(rng: &mut impl RngCore, probs: &[f64]) -> usize {
    debug_assert!(!probs.is_empty());
    let u = uniform_f64(rng);
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Fisher-Yates shuffle driven by the given stream.
pub fn shuffle<T>(rng: &mut impl RngCore, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = uniform_index(rng, i + 1);
        items.swap(i, j);
    }
}
