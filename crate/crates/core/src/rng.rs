//! Portable seeded generator for test and CLI inputs.
//!
//! SplitMix64, so that other implementations can regenerate identical
//! cases from the same seed:
//!
//! ```text
//! state = state + 0x9E3779B97F4A7C15            (mod 2^64)
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9      (mod 2^64)
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB      (mod 2^64)
//! return z ^ (z >> 31)
//! ```
//!
//! `below(n)` is `next() % n`. A value of `b` bits is `below(2^b)`.
//! [`random_values`] draws values in order, one `next()` per element.

/// SplitMix64 state.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform-ish in `0..n` by modulo; `n` must be non-zero.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        self.next_u64() % n
    }

    /// Inclusive range `lo..=hi`.
    pub fn range(&mut self, lo: u64, hi: u64) -> u64 {
        lo + self.below(hi - lo + 1)
    }
}

/// `len` unsigned values of `bits` bits each.
pub fn random_values(rng: &mut SplitMix64, len: usize, bits: u32) -> Vec<u32> {
    (0..len).map(|_| rng.below(1u64 << bits) as u32).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_stream() {
        // Published SplitMix64 outputs for seed 1234567.
        let mut r = SplitMix64::new(1234567);
        let got: Vec<u64> = (0..5).map(|_| r.next_u64()).collect();
        assert_eq!(
            got,
            [6457827717110365317, 3203168211198807973, 9817491932198370423, 4593380528125082431, 16408922859458223821]
        );
    }

    #[test]
    fn values_in_range() {
        let mut r = SplitMix64::new(7);
        assert!(random_values(&mut r, 1000, 3).iter().all(|&v| v < 8));
        for _ in 0..100 {
            let v = r.range(2, 8);
            assert!((2..=8).contains(&v));
        }
    }
}
