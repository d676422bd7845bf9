//! Deterministic randomness.
//!
//! Every random choice in the engine flows through [`SeededRng`], a ChaCha8
//! stream keyed by a 64-bit seed: the seed sits little-endian in bytes 0..8
//! of the 32-byte key (remaining bytes zero) and the stream id selects one of
//! 2^64 independent substreams. Bounded integers use Lemire's
//! widening-multiply rejection and floats use the top 53 bits of a raw draw,
//! so identical `(seed, stream)` pairs yield identical sequences on every
//! platform. Batch- or shard-parallel callers derive one substream per unit
//! of work instead of sharing a generator.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};

/// Reproducible random stream (ChaCha8 keyed by a 64-bit seed).
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    /// Stream 0 of `seed`.
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// An independent substream of `seed`.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    /// Seed this generator was created from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream id of this generator.
    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Fresh generator on another substream of the same seed, independent of
    /// how far this one has advanced.
    pub fn substream(&self, stream: u64) -> Self {
        Self::with_stream(self.seed, stream)
    }

    /// Next raw 64-bit draw.
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53-bit resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[low, high)`.
    #[inline]
    pub fn next_range(&mut self, low: f64, high: f64) -> f64 {
        low + self.next_f64() * (high - low)
    }

    /// Fair coin from the low bit of a raw draw.
    #[inline]
    pub fn next_bit(&mut self) -> bool {
        self.next_u64() & 1 == 1
    }

    /// Unbiased uniform integer in `[0, bound)` via Lemire's
    /// widening-multiply rejection. Panics if `bound` is zero.
    pub fn next_index(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "next_index requires a positive bound");
        let bound64 = bound as u64;
        // Reject the low word below (2^64 - bound) mod bound to remove bias.
        let threshold = bound64.wrapping_neg() % bound64;
        loop {
            let wide = u128::from(self.next_u64()) * u128::from(bound64);
            if (wide as u64) >= threshold {
                return (wide >> 64) as usize;
            }
        }
    }
}

/// Draw `count` distinct indices from `[0, population)`, uniform over all
/// `count`-element subsets. Partial Fisher-Yates over the index pool; the
/// returned set is sorted ascending (the set, not the draw order, is the
/// contract).
pub fn sample_without_replacement(
    population: usize,
    count: usize,
    rng: &mut SeededRng,
) -> Result<Vec<usize>> {
    if count > population {
        return Err(Error::arg(
            "tensor.sample_without_replacement",
            format!("cannot draw {count} distinct indices from a population of {population}"),
        ));
    }
    let mut pool: Vec<usize> = (0..population).collect();
    for i in 0..count {
        let j = i + rng.next_index(population - i);
        pool.swap(i, j);
    }
    pool.truncate(count);
    pool.sort_unstable();
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_seeds_reproduce_sequences() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_are_independent() {
        let mut a = SeededRng::with_stream(42, 0);
        let mut b = SeededRng::with_stream(42, 1);
        let first: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let second: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(first, second);
    }

    #[test]
    fn next_f64_stays_in_unit_interval() {
        let mut rng = SeededRng::new(7);
        for _ in 0..10_000 {
            let x = rng.next_f64();
            assert!((0.0..1.0).contains(&x), "draw {x} escaped [0, 1)");
        }
    }

    #[test]
    fn next_index_covers_small_ranges_uniformly() {
        let mut rng = SeededRng::new(11);
        let mut counts = [0usize; 5];
        for _ in 0..50_000 {
            counts[rng.next_index(5)] += 1;
        }
        for (value, &count) in counts.iter().enumerate() {
            let freq = count as f64 / 50_000.0;
            assert!(
                (freq - 0.2).abs() < 0.01,
                "index {value} frequency {freq} strays from 0.2"
            );
        }
    }

    #[test]
    fn sample_of_zero_is_empty() {
        let mut rng = SeededRng::new(1);
        assert!(sample_without_replacement(5, 0, &mut rng)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn sample_of_full_population_is_identity() {
        let mut rng = SeededRng::new(1);
        assert_eq!(
            sample_without_replacement(5, 5, &mut rng).unwrap(),
            vec![0, 1, 2, 3, 4]
        );
    }

    #[test]
    fn sample_larger_than_population_is_rejected() {
        let mut rng = SeededRng::new(1);
        let err = sample_without_replacement(3, 4, &mut rng).unwrap_err();
        assert!(err.to_string().contains("population"), "got: {err}");
    }

    #[test]
    fn sample_is_deterministic_per_seed() {
        let mut a = SeededRng::new(99);
        let mut b = SeededRng::new(99);
        for _ in 0..20 {
            assert_eq!(
                sample_without_replacement(20, 6, &mut a).unwrap(),
                sample_without_replacement(20, 6, &mut b).unwrap()
            );
        }
    }

    /// Each of the 10 indices should land in a 3-of-10 sample with frequency
    /// 0.3; the tolerance 0.02 is ~4.4 standard errors at 10000 draws.
    #[test]
    fn sample_frequencies_match_inclusion_probability() {
        let mut rng = SeededRng::new(2024);
        let mut hits = [0usize; 10];
        for _ in 0..10_000 {
            for idx in sample_without_replacement(10, 3, &mut rng).unwrap() {
                hits[idx] += 1;
            }
        }
        for (idx, &count) in hits.iter().enumerate() {
            let freq = count as f64 / 10_000.0;
            assert!(
                (freq - 0.3).abs() <= 0.02,
                "index {idx} frequency {freq} outside 0.3 +/- 0.02"
            );
        }
    }
}
