//! Deterministic stream derivation.
//!
//! Every stochastic stage of the pipeline draws from a ChaCha12 stream whose
//! seed is derived from the master seed and a purpose tag, so results are
//! reproducible bit-for-bit regardless of execution order or thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 finalizer; good avalanche, used for seed mixing only.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds an ordered tag sequence into one seed.
pub fn mix_seq(parts: &[u64]) -> u64 {
    let mut h = 0x51_7c_c1_b7_27_22_0a_95u64;
    for &p in parts {
        h = mix(h ^ p);
    }
    h
}

/// Tags naming the independent random streams of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Experimental design sampling.
    Design,
    /// Simulator driving noise for one design point.
    Simulate(u64),
    /// Optimizer restarts.
    Restart(u64),
    /// Pick-freeze sampling.
    PickFreeze,
    /// Bootstrap replicate b.
    Bootstrap(u64),
    /// Monte Carlo estimation of a scalar (entropy, validation error).
    Estimate(u64),
    /// Repetition r of a convergence study.
    Repetition(u64),
}

impl Stream {
    fn parts(self) -> (u64, u64) {
        match self {
            Stream::Design => (1, 0),
            Stream::Simulate(i) => (2, i),
            Stream::Restart(i) => (3, i),
            Stream::PickFreeze => (4, 0),
            Stream::Bootstrap(b) => (5, b),
            Stream::Estimate(i) => (6, i),
            Stream::Repetition(r) => (7, r),
        }
    }
}

/// Independent generator for `stream`, derived from `master`.
pub fn substream(master: u64, stream: Stream) -> ChaCha12Rng {
    let (tag, idx) = stream.parts();
    ChaCha12Rng::seed_from_u64(mix_seq(&[master, tag, idx]))
}

/// Derives a child seed for a stage that spawns its own substreams. The tag
/// namespace is the caller's; stages must not reuse tags for distinct purposes.
pub fn child_seed(master: u64, tag: u64) -> u64 {
    mix_seq(&[master, !tag])
}

/// Seed tied to an input point, for per-point streams that must not depend
/// on the point's position in the design.
pub fn point_seed(master: u64, x: &[f64]) -> u64 {
    let mut parts = Vec::with_capacity(x.len() + 1);
    parts.push(master);
    for &xi in x {
        parts.push(xi.to_bits());
    }
    mix_seq(&parts)
}

/// Uniform draw on the open interval (0, 1); never returns an endpoint, so
/// quantile transforms stay finite.
pub fn uniform_open01<R: rand::RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
}
