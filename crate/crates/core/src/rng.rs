//! Counter-based deterministic random number generation.
//!
//! Every draw is a pure function of `(key, counter)`: the generator hashes an
//! incrementing counter with a fixed key using the SplitMix64 finalizer. This
//! makes streams splittable (parallel trials derive independent keys instead
//! of sharing mutable state) and guarantees that the same seed reproduces the
//! same bytes on every platform.

/// Golden-ratio increment used by SplitMix64.
const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based RNG: output(i) = mix(key + i·γ).
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    counter: u64,
    spare: Option<f64>,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        // Pre-mix the seed so that nearby seeds give unrelated streams.
        Self { key: mix64(seed ^ GAMMA), counter: 0, spare: None }
    }

    /// Derive an independent stream from this seed. Streams with distinct
    /// indices never collide, so parallel trials can each take their own.
    pub fn stream(seed: u64, stream: u64) -> Self {
        Self {
            key: mix64(mix64(seed ^ GAMMA).wrapping_add(mix64(stream))),
            counter: 0,
            spare: None,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform in [0, 1). Uses the top 53 bits so the value is exact in f64.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, bound). Rejection-free; the modulo bias is
    /// below 2^-53 for any bound that fits in a usize.
    #[inline]
    pub fn next_index(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        (self.next_u64() % bound as u64) as usize
    }

    /// Standard normal via the Marsaglia polar method. Consumes a variable
    /// number of uniforms but is fully determined by the stream position.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.next_f64() - 1.0;
            let v = 2.0 * self.next_f64() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let scale = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * scale);
                return u * scale;
            }
        }
    }
}

impl CounterRng {
    /// Fisher–Yates selection of `k` indices out of `n`, uniform without
    /// replacement. Returned indices are sorted ascending.
    pub fn choose_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        debug_assert!(k <= n);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.next_index(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx.sort_unstable();
        idx
    }
}
