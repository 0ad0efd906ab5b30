//! Counter-based random streams.
//!
//! Every random number is a pure function of `(seed, stream, slot, draw)`:
//! the Philox4x32-10 block cipher is applied to a 128-bit counter built from
//! the stream id, a slot (typically a cell index) and the draw index, keyed
//! by the seed. Streams split into independent substreams by hashing, so a
//! sample's randomness does not depend on iteration order or thread count.

use statrs::function::erf::erfc_inv;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = (a as u64) * (b as u64);
    ((p >> 32) as u32, p as u32)
}

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
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
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

#[inline]
fn to_open_unit(hi: u32, lo: u32) -> f64 {
    let bits = ((hi as u64) << 32) | lo as u64;
    ((bits >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal quantile.
#[inline]
pub fn standard_normal_quantile(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// A seeded, splittable stream of random numbers addressed by `(slot, draw)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamRng {
    key: [u32; 2],
    stream: u64,
}

impl StreamRng {
    pub fn new(seed: u64) -> Self {
        Self {
            key: [seed as u32, (seed >> 32) as u32],
            stream: 0,
        }
    }

    /// Derives an independent child stream. Children of distinct ids (and of
    /// distinct parents) address disjoint counters with overwhelming probability.
    pub fn substream(&self, id: u64) -> Self {
        Self {
            key: self.key,
            stream: splitmix64(splitmix64(self.stream) ^ splitmix64(id ^ 0x5851_F42D_4C95_7F2D)),
        }
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    #[inline]
    fn block(&self, slot: u32, pair: u32) -> [u32; 4] {
        philox4x32_10(
            [pair, slot, self.stream as u32, (self.stream >> 32) as u32],
            self.key,
        )
    }

    /// Uniform draw in the open interval (0, 1).
    #[inline]
    pub fn uniform(&self, slot: u32, draw: u32) -> f64 {
        let b = self.block(slot, draw / 2);
        if draw % 2 == 0 {
            to_open_unit(b[0], b[1])
        } else {
            to_open_unit(b[2], b[3])
        }
    }

    /// Standard normal draw via the inverse normal CDF.
    #[inline]
    pub fn normal(&self, slot: u32, draw: u32) -> f64 {
        standard_normal_quantile(self.uniform(slot, draw))
    }

    /// Fills `out` with the draws `0..out.len()` of `slot`; equal to calling
    /// [`StreamRng::normal`] for each index.
    #[inline]
    pub fn fill_normals(&self, slot: u32, out: &mut [f64]) {
        let mut chunks = out.chunks_mut(2);
        let mut pair = 0u32;
        for chunk in &mut chunks {
            let b = self.block(slot, pair);
            chunk[0] = standard_normal_quantile(to_open_unit(b[0], b[1]));
            if chunk.len() > 1 {
                chunk[1] = standard_normal_quantile(to_open_unit(b[2], b[3]));
            }
            pair += 1;
        }
    }
}
