//! Counter-based deterministic random number generation.
//!
//! Every consumer derives a named stream from `(seed, label)`. Draws are pure
//! functions of `(seed, label, counter)`, so two streams never interact and
//! parallel workers that each derive their own stream produce results
//! independent of scheduling order.

/// FNV-1a hash of a label string, used to separate named streams.
fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 finalizer: bijective avalanche over a 64-bit counter.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A deterministic, counter-based random stream.
///
/// Cloning forks the stream state; `derive` creates an unrelated child stream.
#[derive(Debug, Clone)]
pub struct DetRng {
    /// Mixed key combining the user seed and the stream label.
    key: u64,
    /// Monotone draw counter.
    counter: u64,
    /// Second Box-Muller variate, held for the next `normal` call.
    cached_normal: Option<f64>,
}

impl DetRng {
    /// Create the stream identified by `(seed, label)`.
    pub fn new(seed: u64, label: &str) -> Self {
        let key = splitmix64(seed ^ fnv1a(label).rotate_left(17));
        DetRng { key, counter: 0, cached_normal: None }
    }

    /// Derive an independent child stream. Equal `(seed, label)` pairs always
    /// yield the same child, regardless of how much this stream was used.
    pub fn derive(&self, label: &str) -> Self {
        let key = splitmix64(self.key ^ fnv1a(label).rotate_left(29));
        DetRng { key, counter: 0, cached_normal: None }
    }

    /// Next raw 64-bit draw.
    pub fn next_u64(&mut self) -> u64 {
        let x = splitmix64(self.key ^ self.counter.wrapping_mul(0xd6e8_feb8_6659_fd93));
        self.counter += 1;
        x
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)` via Lemire's widening-multiply reduction.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0) is undefined");
        ((u128::from(self.next_u64()) * u128::from(n)) >> 64) as u64
    }

    /// Standard normal via Box-Muller; the paired variate is cached.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        // u1 in (0, 1] so the log is finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fill a buffer with iid standard normals.
    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.normal();
        }
    }
}
