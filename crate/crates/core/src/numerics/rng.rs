//! Counter-based random streams.
//!
//! A stream is identified by a 64-bit key and a 64-bit stream index. The
//! underlying generator is ChaCha8 keyed by the expanded key with the stream
//! index as its nonce, so the i-th draw of `(key, stream)` is a pure function
//! of `(key, stream, i)` regardless of how work is scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{LidError, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Purpose tags used to derive independent keys from one user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Embedding = 1,
    Permutation = 2,
    Points = 3,
    GeneratorWeights = 4,
    Anchors = 5,
    Noise = 6,
    Probes = 7,
    ModelInit = 8,
    Training = 9,
    Jacobian = 10,
}

/// Derive a key for `domain` from a user-facing seed.
pub fn derive_key(seed: u64, domain: Domain) -> u64 {
    mix64(seed ^ mix64((domain as u64).wrapping_mul(GOLDEN_GAMMA)))
}

/// A reproducible random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    key: u64,
    stream: u64,
    counter: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(key: u64, stream: u64) -> Self {
        let mut seed = [0u8; 32];
        let mut state = key;
        for chunk in seed.chunks_exact_mut(8) {
            state = state.wrapping_add(GOLDEN_GAMMA);
            chunk.copy_from_slice(&mix64(state).to_le_bytes());
        }
        let mut inner = ChaCha8Rng::from_seed(seed);
        inner.set_stream(stream);
        Self {
            key,
            stream,
            counter: 0,
            inner,
        }
    }

    /// Stream `index` in the given domain of a user seed.
    pub fn derived(seed: u64, domain: Domain, index: u64) -> Self {
        Self::new(derive_key(seed, domain), index)
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 64-bit words consumed so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        const DEN: f64 = (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 / DEN
    }

    /// Uniform integer in `0..n` by rejection.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }

    /// `±1` with equal probability.
    pub fn rademacher(&mut self) -> f64 {
        if self.next_u64() >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Fisher–Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i as u64 + 1) as usize;
            p.swap(i, j);
        }
        p
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.next_u64() as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// `dim` independent standard-normal draws.
pub fn gaussian_vector(rng: &mut RngStream, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(LidError::EmptyDimension(
            "gaussian_vector requires dim >= 1",
        ));
    }
    Ok((0..dim).map(|_| rng.normal()).collect())
}

/// `dim` independent Rademacher draws.
pub fn rademacher_vector(rng: &mut RngStream, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.rademacher()).collect()
}
