//! Counter-based random numbers.
//!
//! Every Gaussian increment is a pure function of `(seed, stream, particle,
//! index)` computed with Philox4x32-10, so a simulation produces the same
//! numbers regardless of how particles are split across workers, and two
//! coupled systems can share noise simply by sharing keys.

use rand_core::RngCore;
use rand_distr::{Distribution, StandardNormal};

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// Philox4x32 with 10 rounds.
#[inline]
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let p0 = u64::from(PHILOX_M0) * u64::from(c[0]);
        let p1 = u64::from(PHILOX_M1) * u64::from(c[2]);
        c = [((p1 >> 32) as u32) ^ c[1] ^ k[0], p1 as u32, ((p0 >> 32) as u32) ^ c[3] ^ k[1], p0 as u32];
    }
    c
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A child seed for the `k`-th independent repetition under `seed`.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    splitmix64(seed ^ splitmix64(k.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Named sub-streams so that unrelated consumers of one seed never overlap.
pub mod streams {
    pub const DYNAMICS: u64 = 1;
    pub const BOOTSTRAP: u64 = 2;
    pub const SAMPLING: u64 = 3;
    pub const DISSIPATIVITY: u64 = 4;
}

/// A Philox key derived from a user seed and a stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    key: [u32; 2],
}

impl StreamKey {
    pub fn new(seed: u64, stream: u64) -> Self {
        let k = splitmix64(seed ^ splitmix64(stream.wrapping_mul(0xA076_1D64_78BD_642F)));
        Self { key: [k as u32, (k >> 32) as u32] }
    }

    #[inline]
    pub fn block(&self, a: u64, b: u64) -> [u32; 4] {
        philox4x32_10([a as u32, (a >> 32) as u32, b as u32, (b >> 32) as u32], self.key)
    }

    /// Two independent standard normals for counter `(a, b)` (`b < 2^55`).
    ///
    /// Each half of the block seeds one ziggurat draw; the rare rejections
    /// continue on a disjoint counter range derived from `(a, b, lane)`.
    #[inline]
    pub fn normal_pair(&self, a: u64, b: u64) -> [f64; 2] {
        let w = self.block(a, b);
        let first = |hi: u32, lo: u32| (u64::from(hi) << 32) | u64::from(lo);
        [
            StandardNormal.sample(&mut Fallback::new(*self, first(w[0], w[1]), a, b << 1)),
            StandardNormal.sample(&mut Fallback::new(*self, first(w[2], w[3]), a, (b << 1) | 1)),
        ]
    }

    /// Sequential generator over counters `(a, 0), (a, 1), ...`.
    pub fn sequence(&self, a: u64) -> CounterRng {
        CounterRng { key: *self, lane: a, counter: 0, buf: [0; 4], used: 4 }
    }
}

/// One pre-drawn word, then Philox blocks on the counter range reserved for
/// rejections: lane `a` with its top bit flipped, counters `lane·2^8 + k`.
struct Fallback {
    key: StreamKey,
    first: Option<u64>,
    a: u64,
    base: u64,
    next_block: u64,
    buf: [u32; 4],
    used: usize,
}

impl Fallback {
    #[inline]
    fn new(key: StreamKey, first: u64, a: u64, lane: u64) -> Self {
        Self { key, first: Some(first), a: a ^ (1 << 63), base: lane << 8, next_block: 0, buf: [0; 4], used: 4 }
    }
}

impl RngCore for Fallback {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        if let Some(v) = self.first.take() {
            return v;
        }
        if self.used == 4 {
            self.buf = self.key.block(self.a, self.base + self.next_block);
            self.next_block += 1;
            self.used = 0;
        }
        let v = (u64::from(self.buf[self.used]) << 32) | u64::from(self.buf[self.used + 1]);
        self.used += 2;
        v
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let v = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}

/// 53-bit uniform in [0, 1).
#[inline]
fn unit_closed_open(hi: u32, lo: u32) -> f64 {
    let bits = (u64::from(hi) << 21) ^ (u64::from(lo) >> 11);
    (bits & ((1 << 53) - 1)) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normals indexed by a monotone counter for a single particle.
///
/// Normal number `n` lives in Philox block `n / 2`, lane `n % 2`; the most
/// recent block is cached so consecutive requests cost one block per pair.
#[derive(Debug, Clone)]
pub struct NormalStream {
    key: StreamKey,
    particle: u64,
    cached_block: u64,
    cached: [f64; 2],
}

impl NormalStream {
    pub fn new(key: StreamKey, particle: u64) -> Self {
        Self { key, particle, cached_block: u64::MAX, cached: [0.0; 2] }
    }

    #[inline]
    pub fn normal(&mut self, n: u64) -> f64 {
        let block = n >> 1;
        if block != self.cached_block {
            self.cached = self.key.normal_pair(self.particle, block);
            self.cached_block = block;
        }
        self.cached[(n & 1) as usize]
    }
}

/// Sequential draws on one counter lane; used for resampling and test data.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: StreamKey,
    lane: u64,
    counter: u64,
    buf: [u32; 4],
    used: usize,
}

impl CounterRng {
    pub fn from_seed(seed: u64, stream: u64) -> Self {
        StreamKey::new(seed, stream).sequence(0)
    }

    pub fn next_u32(&mut self) -> u32 {
        if self.used == 4 {
            self.buf = self.key.block(self.lane, self.counter);
            self.counter += 1;
            self.used = 0;
        }
        let v = self.buf[self.used];
        self.used += 1;
        v
    }

    pub fn next_u64(&mut self) -> u64 {
        (u64::from(self.next_u32()) << 32) | u64::from(self.next_u32())
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        let (a, b) = (self.next_u32(), self.next_u32());
        unit_closed_open(a, b)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }

    /// Uniform integer in `0..n` (Lemire's nearly-divisionless method).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        let n = n as u64;
        loop {
            let m = u128::from(self.next_u64()) * u128::from(n);
            let lo = m as u64;
            if lo >= n.wrapping_neg() % n {
                return (m >> 64) as usize;
            }
        }
    }
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        CounterRng::next_u32(self)
    }

    fn next_u64(&mut self) -> u64 {
        CounterRng::next_u64(self)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(4) {
            let v = CounterRng::next_u32(self).to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}
