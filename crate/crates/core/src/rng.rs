//! Counter-based normal variates.
//!
//! Every draw is a pure function of `(seed, stream, level, index)`, so paths
//! can be generated in any order, extended, refined or split across threads
//! without changing a single bit.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const STREAM_MUL: u64 = 0xd1b5_4a32_d192_ed03;
const LEVEL_MUL: u64 = 0x8cb9_2ba7_2f3d_8dd7;
const INDEX_MUL: u64 = 0xaef1_7502_108e_f2d9;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn key(seed: u64, stream: u64, level: u64, index: u64) -> u64 {
    let mut h = mix64(seed.wrapping_add(GOLDEN));
    h = mix64(h ^ stream.wrapping_add(1).wrapping_mul(STREAM_MUL));
    h = mix64(h ^ level.wrapping_add(1).wrapping_mul(LEVEL_MUL));
    mix64(h ^ index.wrapping_add(1).wrapping_mul(INDEX_MUL))
}

#[inline]
fn to_open_unit(bits: u64) -> f64 {
    // 53 random bits mapped to (0, 1]
    ((bits >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

/// Uniform variate on (0, 1].
#[inline]
pub fn uniform(seed: u64, stream: u64, level: u64, index: u64) -> f64 {
    to_open_unit(mix64(key(seed, stream, level, index) ^ 0x5555))
}

/// Standard normal variate keyed by `(seed, stream, level, index)` (Box-Muller).
#[inline]
pub fn standard_normal(seed: u64, stream: u64, level: u64, index: u64) -> f64 {
    let h = key(seed, stream, level, index);
    let u1 = to_open_unit(mix64(h ^ 1));
    let u2 = to_open_unit(mix64(h ^ 2));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Derives an independent child seed, e.g. one per Monte Carlo replicate.
#[inline]
pub fn child_seed(seed: u64, index: u64) -> u64 {
    key(seed, u64::MAX, u64::MAX, index)
}

/// Sequential view over one `(seed, stream, level)` counter stream.
#[derive(Debug, Clone)]
pub struct CounterRng {
    seed: u64,
    stream: u64,
    level: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64, level: u64) -> Self {
        Self {
            seed,
            stream,
            level,
            counter: 0,
        }
    }

    pub fn next_normal(&mut self) -> f64 {
        let z = standard_normal(self.seed, self.stream, self.level, self.counter);
        self.counter += 1;
        z
    }

    pub fn next_uniform(&mut self) -> f64 {
        let u = uniform(self.seed, self.stream, self.level, self.counter);
        self.counter += 1;
        u
    }
}
