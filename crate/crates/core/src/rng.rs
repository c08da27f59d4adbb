//! Seedable counter-based generator used for all simulation sampling.
//!
//! The generator is the SplitMix64 sequence: the state is a 64-bit counter
//! advanced by the golden-gamma constant, and each output is an avalanche mix
//! of the counter. The algorithm is fixed here (not delegated to a dependency)
//! so that transcripts are bit-reproducible across platforms and versions:
//! every operation is exact 64-bit integer arithmetic.
//!
//! Independent streams for parallel tasks are derived by mixing the master
//! seed with the task index (`derive_seed`), which keeps campaign cells
//! statistically independent and order-free.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based pseudo-random generator (SplitMix64).
#[derive(Debug, Clone)]
pub struct CounterRng {
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { counter: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(GOLDEN_GAMMA);
        mix64(self.counter)
    }

    /// Uniform double in [0, 1) with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Index into a cumulative-probability walk over `weights`.
    ///
    /// `weights` need not be exactly normalized; the last index absorbs any
    /// rounding slack so the draw is always valid.
    pub fn sample_index(&mut self, weights: &[f64]) -> usize {
        let mut r = self.next_f64();
        for (i, w) in weights.iter().enumerate() {
            let w = w.max(0.0);
            if r < w {
                return i;
            }
            r -= w;
        }
        weights.len() - 1
    }
}

/// Derive an independent stream seed from a master seed and a task index.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index.wrapping_add(GOLDEN_GAMMA)))
}

// Adapter so distribution samplers (binomial counts) can draw from the same
// deterministic stream.
impl rand_core::RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        CounterRng::next_u64(self)
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
