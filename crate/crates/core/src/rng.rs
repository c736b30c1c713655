//! Counter-based keyed random numbers.
//!
//! Every draw is addressed by `(seed, domain, stream, position)`. The stream is
//! a ChaCha8 stream id and the position is a word offset inside it, so any
//! value can be regenerated in O(1) without replaying earlier draws. This is
//! what makes graph sampling and Brownian increments independent of iteration
//! order and thread count.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Independent key families. Two domains never share a ChaCha key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    Graph = 1,
    Initial = 2,
    Brownian = 3,
    Points = 4,
    Subsample = 5,
    Probe = 6,
}

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform in `[0, 1)` from the top 53 bits.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * TWO_POW_M53
}

/// Uniform in `(0, 1]`; safe as a logarithm argument.
#[inline]
pub fn open_unit_f64(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * TWO_POW_M53
}

/// Box-Muller (cosine branch) from two raw words.
#[inline]
pub fn box_muller(a: u64, b: u64) -> f64 {
    let r = (-2.0 * open_unit_f64(a).ln()).sqrt();
    r * (std::f64::consts::TAU * unit_f64(b)).cos()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyedRng {
    key: [u8; 32],
}

impl KeyedRng {
    pub fn new(seed: u64, domain: Domain) -> Self {
        let mut state = seed ^ (domain as u64).wrapping_mul(0xA076_1D64_78BD_642F);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self { key }
    }

    /// A sequential generator positioned at the start of `stream`.
    pub fn stream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(stream);
        rng
    }

    /// A sequential generator positioned at 64-bit word `index` of `stream`.
    pub fn stream_at(&self, stream: u64, index: u64) -> ChaCha8Rng {
        let mut rng = self.stream(stream);
        rng.set_word_pos(2 * index as u128);
        rng
    }

    /// The `index`-th 64-bit word of `stream`.
    pub fn u64_at(&self, stream: u64, index: u64) -> u64 {
        self.stream_at(stream, index).next_u64()
    }

    pub fn uniform_at(&self, stream: u64, index: u64) -> f64 {
        unit_f64(self.u64_at(stream, index))
    }

    /// Standard normal built from words `2 * index` and `2 * index + 1`.
    pub fn normal_at(&self, stream: u64, index: u64) -> f64 {
        let mut rng = self.stream_at(stream, 2 * index);
        let a = rng.next_u64();
        let b = rng.next_u64();
        box_muller(a, b)
    }
}

/// Sequential reader producing the same values as the `*_at` accessors.
pub struct Draws {
    rng: ChaCha8Rng,
}

impl Draws {
    pub fn new(keyed: &KeyedRng, stream: u64) -> Self {
        Self {
            rng: keyed.stream(stream),
        }
    }

    /// Positioned at 64-bit word `index`, matching `KeyedRng::u64_at`.
    pub fn at(keyed: &KeyedRng, stream: u64, index: u64) -> Self {
        Self {
            rng: keyed.stream_at(stream, index),
        }
    }

    pub fn uniform(&mut self) -> f64 {
        unit_f64(self.rng.next_u64())
    }

    pub fn normal(&mut self) -> f64 {
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        box_muller(a, b)
    }
}
