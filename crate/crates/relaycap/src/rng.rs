//! Deterministic counter-based random streams.
//!
//! Every randomized computation in this crate derives an independent stream
//! from a master seed plus a list of context labels (cut index, trial index,
//! sample index, ...). Results are therefore independent of thread count and
//! evaluation order: the stream for a given context is always the same.

/// SplitMix64 step. Good 64-bit mixing, passes BigCrush as a stream generator.
#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A small deterministic generator seeded from a master seed and a context path.
#[derive(Debug, Clone)]
pub struct Stream {
    state: u64,
}

impl Stream {
    /// Derives a stream from `seed` and the context labels in `path`.
    ///
    /// Distinct paths give statistically independent streams; the same path
    /// always gives the same stream.
    pub fn derive(seed: u64, path: &[u64]) -> Self {
        let mut state = seed ^ 0x6a09_e667_f3bc_c908;
        let _ = splitmix64(&mut state);
        for &label in path {
            // Absorb a hash of each label, then advance, so nearby labels
            // (0, 1, 2, ...) land far apart in state space.
            let mut h = label;
            state ^= splitmix64(&mut h);
            let _ = splitmix64(&mut state);
        }
        Stream { state }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        splitmix64(&mut self.state)
    }

    /// Uniform draw in `[0, n)`. `n` must be nonzero.
    #[inline]
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        // Rejection sampling on the top bits to avoid modulo bias.
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Samples an index from a probability vector by inverse CDF.
    ///
    /// Probabilities need not sum exactly to one; the last positive entry
    /// absorbs the rounding slack.
    pub fn sample_index(&mut self, probs: &[f64]) -> usize {
        let u = self.next_f64();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                last_positive = i;
                acc += p;
                if u < acc {
                    return i;
                }
            }
        }
        last_positive
    }
}
