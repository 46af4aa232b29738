//! Counter-addressable Gaussian streams.
//!
//! Each stream is a ChaCha20 keystream keyed by `mix(base_seed, trial)` with a
//! purpose-specific stream id. Normals are produced in Box–Muller pairs, each
//! pair consuming exactly two `u64` draws (four 32-bit words), so the `j`-th
//! pair lives at word position `4 j` and can be fetched in any order.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

const WORDS_PER_PAIR: u128 = 4;

/// Independent sub-streams derived from one key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamPurpose {
    Samples = 0,
    Init = 1,
    Model = 2,
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key for trial `trial` of an experiment seeded with `base_seed`.
pub fn mix(base_seed: u64, trial: u64) -> u64 {
    splitmix64(base_seed ^ splitmix64(trial.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

#[derive(Debug, Clone)]
pub struct GaussianStream {
    rng: ChaCha20Rng,
}

impl GaussianStream {
    pub fn new(key: u64, purpose: StreamPurpose) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(key);
        rng.set_stream(purpose as u64);
        GaussianStream { rng }
    }

    /// Positions the stream at normal pair `pair`.
    pub fn seek_pair(&mut self, pair: u64) {
        self.rng.set_word_pos(pair as u128 * WORDS_PER_PAIR);
    }

    /// Uniform in `(0, 1]` with 53 bits of resolution.
    pub fn next_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn next_pair(&mut self) -> (f64, f64) {
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        (r * c, r * s)
    }

    /// Fills `out` with standard normals. An odd length discards the second
    /// half of the final pair so that the stream stays pair-aligned.
    pub fn fill_normals(&mut self, out: &mut [f64]) {
        let mut chunks = out.chunks_exact_mut(2);
        for pair in &mut chunks {
            let (a, b) = self.next_pair();
            pair[0] = a;
            pair[1] = b;
        }
        if let [last] = chunks.into_remainder() {
            *last = self.next_pair().0;
        }
    }

    pub fn normals(&mut self, len: usize) -> Vec<f64> {
        let mut v = vec![0.0; len];
        self.fill_normals(&mut v);
        v
    }
}
