//! Deterministic splittable random streams.
//!
//! Keys are derived counter-style from `(seed, purpose tag, index)` so any
//! stream can be regenerated in isolation; generation order and thread
//! scheduling never affect the draws. The stream core is SplitMix64, which
//! is more than adequate for synthetic data and weight initialization.

use crate::math;

const GOLDEN: u64 = 0x9e3779b97f4a7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derived key identifying one independent random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn root(seed: u64) -> Self {
        StreamKey(mix64(seed ^ GOLDEN))
    }

    /// Splits off a stream for a named purpose.
    pub fn tagged(self, tag: &str) -> Self {
        // FNV-1a over the tag bytes, then a finalizer mix.
        let mut h = self.0 ^ 0xcbf29ce484222325;
        for &b in tag.as_bytes() {
            h = (h ^ b as u64).wrapping_mul(0x100000001b3);
        }
        StreamKey(mix64(h))
    }

    /// Splits off the `index`-th stream under this key.
    pub fn at(self, index: u64) -> Self {
        StreamKey(mix64(self.0 ^ index.wrapping_mul(GOLDEN).wrapping_add(0x2545f4914f6cdd1d)))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn from_value(v: u64) -> Self {
        StreamKey(v)
    }

    pub fn stream(self) -> Stream {
        Stream {
            state: self.0,
            spare_normal: None,
        }
    }
}

/// Sequential generator for one stream.
pub struct Stream {
    state: u64,
    spare_normal: Option<f64>,
}

impl Stream {
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform in (0, 1].
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) * (1.0 / 9007199254740992.0)
    }

    /// Standard normal via Box-Muller (pairs cached).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = math::sqrt(-2.0 * math::ln(u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        self.spare_normal = Some(r * math::sin(theta));
        r * math::cos(theta)
    }

    /// Uniform integer in `[0, n)` via widening multiply.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        (((self.next_u64() as u128) * (n as u128)) >> 64) as u64
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() <= p
    }
}
