//! Seeded, stream-splittable random numbers.
//!
//! Every stream is a ChaCha8 keystream. The 256-bit key is derived from the
//! master seed by taking four successive SplitMix64 outputs (state initialised
//! to `master_seed`) and laying them out little-endian; the ChaCha stream
//! (nonce) word is `stream_id`; the block counter starts at zero. The keystream
//! is consumed in 32-bit words, and the position in it is the only mutable
//! state, so `(master_seed, stream_id, word_pos)` identifies the generator
//! exactly on every platform.
//!
//! Draw costs, in keystream words:
//! - [`RngStream::next_u64`] and [`RngStream::uniform01`]: 2 words.
//! - [`RngStream::uniform_int`]: 2 words per attempt; attempts are rejected
//!   only when they fall in the biased zone (probability below
//!   `range / 2^64`).

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RngError {
    #[error("invalid integer range: lo = {lo} > hi = {hi}")]
    InvalidRange { lo: i64, hi: i64 },
}

/// Identifies one reproducible stream: a master seed plus a replicate index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }
}

/// Serializable position of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub master_seed: u64,
    pub stream_id: u64,
    pub word_pos: u128,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn key_for(master_seed: u64) -> [u8; 32] {
    let mut sm = master_seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut sm).to_le_bytes());
    }
    key
}

/// A single-owner random stream. Not `Clone`: two owners of the same stream
/// would silently share draws. Use [`RngStream::state`] to checkpoint.
#[derive(Debug)]
pub struct RngStream {
    spec: SeedSpec,
    inner: ChaCha8Rng,
}

/// Creates the stream identified by `spec`.
pub fn create_stream(spec: SeedSpec) -> RngStream {
    RngStream::new(spec)
}

impl RngStream {
    pub fn new(spec: SeedSpec) -> Self {
        let mut inner = ChaCha8Rng::from_seed(key_for(spec.master_seed));
        inner.set_stream(spec.stream_id);
        Self { spec, inner }
    }

    pub fn spec(&self) -> SeedSpec {
        self.spec
    }

    pub fn state(&self) -> RngState {
        RngState {
            master_seed: self.spec.master_seed,
            stream_id: self.spec.stream_id,
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn from_state(state: RngState) -> Self {
        let mut s = Self::new(SeedSpec::new(state.master_seed, state.stream_id));
        s.inner.set_word_pos(state.word_pos);
        s
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform real in `[0, 1)` with 53 random bits.
    pub fn uniform01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in the inclusive range `[lo, hi]`, without modulo bias.
    pub fn uniform_int(&mut self, lo: i64, hi: i64) -> Result<i64, RngError> {
        if lo > hi {
            return Err(RngError::InvalidRange { lo, hi });
        }
        let range = (hi as u64).wrapping_sub(lo as u64).wrapping_add(1);
        if range == 0 {
            // Full 64-bit span.
            return Ok(self.next_u64() as i64);
        }
        Ok(lo.wrapping_add(self.below(range) as i64))
    }

    /// Uniform index in `0..n`. Panics if `n == 0`.
    pub fn uniform_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "uniform_index over an empty range");
        self.below(n as u64) as usize
    }

    // Lemire's multiply-and-reject.
    fn below(&mut self, range: u64) -> u64 {
        let threshold = range.wrapping_neg() % range;
        loop {
            let m = (self.next_u64() as u128) * (range as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.uniform_index(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_specs_give_identical_sequences() {
        let mut a = create_stream(SeedSpec::new(7, 0));
        let mut b = create_stream(SeedSpec::new(7, 0));
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_streams_differ() {
        let mut a = create_stream(SeedSpec::new(7, 0));
        let mut b = create_stream(SeedSpec::new(7, 1));
        let same = (0..100).filter(|_| a.next_u64() == b.next_u64()).count();
        assert!(same < 100);
        assert_eq!(same, 0);
    }

    #[test]
    fn different_master_seeds_differ() {
        let mut a = create_stream(SeedSpec::new(7, 0));
        let mut b = create_stream(SeedSpec::new(8, 0));
        assert_ne!(
            (0..4).map(|_| a.next_u64()).collect::<Vec<_>>(),
            (0..4).map(|_| b.next_u64()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn state_round_trip_continues_identically() {
        let mut a = create_stream(SeedSpec::new(7, 3));
        for _ in 0..37 {
            a.uniform01();
        }
        let json = serde_json::to_string(&a.state()).unwrap();
        let mut b = RngStream::from_state(serde_json::from_str(&json).unwrap());
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn uniform01_advances_two_words() {
        let mut a = create_stream(SeedSpec::new(1, 1));
        let before = a.state().word_pos;
        a.uniform01();
        assert_eq!(a.state().word_pos - before, 2);
    }

    #[test]
    fn degenerate_range() {
        let mut s = create_stream(SeedSpec::new(7, 0));
        for _ in 0..10 {
            assert_eq!(s.uniform_int(5, 5).unwrap(), 5);
        }
    }

    #[test]
    fn inverted_range_is_an_error() {
        let mut s = create_stream(SeedSpec::new(7, 0));
        assert_eq!(
            s.uniform_int(6, 3),
            Err(RngError::InvalidRange { lo: 6, hi: 3 })
        );
    }

    #[test]
    fn infectious_period_range() {
        let mut s = create_stream(SeedSpec::new(7, 0));
        let mut seen = [false; 4];
        for _ in 0..1000 {
            let v = s.uniform_int(3, 6).unwrap();
            assert!((3..=6).contains(&v));
            seen[(v - 3) as usize] = true;
        }
        assert!(seen.iter().all(|&x| x));
    }

    #[test]
    fn extreme_ranges() {
        let mut s = create_stream(SeedSpec::new(2, 0));
        s.uniform_int(i64::MIN, i64::MAX).unwrap();
        let v = s.uniform_int(i64::MAX - 1, i64::MAX).unwrap();
        assert!(v >= i64::MAX - 1);
        let v = s.uniform_int(i64::MIN, i64::MIN + 1).unwrap();
        assert!(v <= i64::MIN + 1);
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut s = create_stream(SeedSpec::new(4, 4));
        let mut v: Vec<usize> = (0..50).collect();
        s.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(v, sorted);
    }
}
