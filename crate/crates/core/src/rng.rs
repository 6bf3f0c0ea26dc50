//! Seeded randomness: substream derivation and counter-indexed sampling.
//!
//! A run owns one master seed. Every stochastic subsystem (traffic, channel,
//! HARQ, policy) derives its own independent stream from that seed, so
//! changing how one subsystem consumes randomness never perturbs the others.
//! Derivation is `seed_from_u64(splitmix64(master_seed ^ fnv1a64(tag)))`.
//!
//! Fast fading is not drawn from a sequential stream at all: it is a pure
//! function of `(key, tti, source cell, ue, rb)`, so gains can be evaluated
//! lazily for exactly the links a TTI touches.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// Stochastic subsystems with a dedicated random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Substream {
    Traffic,
    Channel,
    Harq,
    Policy,
}

impl Substream {
    fn tag(self) -> &'static str {
        match self {
            Substream::Traffic => "traffic",
            Substream::Channel => "channel",
            Substream::Harq => "harq",
            Substream::Policy => "policy",
        }
    }
}

/// SplitMix64 finalizer: cheap avalanche, stable across platforms.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over bytes; used for stream tags and scenario fingerprints.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive the RNG of one subsystem from the run's master seed.
pub fn substream(master_seed: u64, which: Substream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(master_seed ^ fnv1a64(which.tag().as_bytes())))
}

/// Map a 64-bit hash to a uniform double in [0, 1).
pub fn hash_to_uniform(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Map a 64-bit hash to a unit-mean exponential variate (inverse CDF).
pub fn hash_to_exp1(h: u64) -> f64 {
    -(1.0 - hash_to_uniform(h)).ln()
}

/// Combine a fading key with a (tti, cell, ue, rb) index into one hash.
pub fn fading_hash(key: u64, tti: u64, src_cell: usize, ue: usize, rb: usize) -> u64 {
    let idx = ((src_cell as u64) << 40) | ((ue as u64) << 16) | rb as u64;
    splitmix64(key ^ splitmix64(tti).wrapping_add(splitmix64(idx)))
}
