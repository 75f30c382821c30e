//! Deterministic random streams.
//!
//! Every random decision in a run is drawn from a stream keyed by the run
//! seed plus a tuple of tags (day, agent, purpose...). Keying by role rather
//! than drawing from one shared generator keeps scenarios that share a seed
//! on common random numbers: a change in one agent's behaviour does not
//! shift the draws of every other agent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used for all simulation streams.
pub type SimRng = ChaCha8Rng;

/// splitmix64 finaliser.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Purpose tags keep streams for different decisions disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u64)]
pub enum Purpose {
    WorldBuild = 1,
    Seeding,
    Itinerary,
    DistanceBand,
    Transmission,
    Environment,
    DiseaseCourse,
    Symptoms,
    TestSeeking,
    TestResult,
    BackgroundIllness,
    MessageDelay,
    Pseudonym,
    Mix,
    Policy,
}

/// A stream key: run seed folded with tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn new(seed: u64, purpose: Purpose) -> Self {
        StreamKey(mix64(seed ^ mix64(purpose as u64)))
    }

    /// Fold another tag into the key.
    #[inline]
    pub fn with(self, tag: u64) -> Self {
        StreamKey(mix64(self.0 ^ mix64(tag.wrapping_add(0x632B_E59B_D9B4_E019))))
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    /// A full generator for decisions needing several draws.
    pub fn rng(self) -> SimRng {
        SimRng::seed_from_u64(self.0)
    }

    /// A single uniform draw on `[0, 1)`.
    #[inline]
    pub fn uniform(self) -> f64 {
        (mix64(self.0) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
