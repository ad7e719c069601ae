//! Deterministic counter-based random numbers for the bootstrap and
//! simulation harnesses.
//!
//! Each output is a pure function of `(key, counter)` (SplitMix64's
//! finalizer over a Weyl sequence), so substreams derived from
//! `(seed, replication index)` produce identical draws no matter how
//! replications are scheduled across threads.

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// SplitMix64 stream: `next() = mix(key + counter·γ)`.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    key: u64,
    counter: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 {
            key: mix64(seed ^ GOLDEN_GAMMA),
            counter: 0,
        }
    }

    /// Substream for replication `index` under a run-level `seed`.
    pub fn substream(seed: u64, index: u64) -> Self {
        SplitMix64 {
            key: mix64(mix64(seed ^ GOLDEN_GAMMA).wrapping_add(index.wrapping_mul(GOLDEN_GAMMA))),
            counter: 0,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform draw in [0, 1) with 53-bit resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..n` (rejection-free modulo bias is negligible for
    /// the panel sizes in play; n is at most a few thousand).
    #[inline]
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal draw (Box-Muller; uses one cached value per pair).
    pub fn next_normal(&mut self) -> f64 {
        // Box-Muller without caching keeps the stream state a pure function
        // of the number of calls, which is what determinism tests pin.
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        let r = crate::fmath::sqrt(-2.0 * crate::fmath::ln(u1));
        r * crate::fmath::cos(2.0 * core::f64::consts::PI * u2)
    }
}
