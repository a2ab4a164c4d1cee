//! Deterministic random streams.
//!
//! Every random draw in the simulator comes from a [`ChaCha8Rng`] obtained
//! through [`stream`]. The generator is keyed and positioned as follows:
//!
//! 1. The 256-bit ChaCha key is four successive outputs of SplitMix64
//!    seeded with the 64-bit seed, each written little-endian.
//! 2. The 64-bit ChaCha stream number packs the [`StreamId`]:
//!    bits 56..64 hold the [`Purpose`] tag, bits 32..56 the low 24 bits of
//!    `major` and bits 0..32 the `minor` value.
//! 3. The word position starts at zero.
//!
//! ChaCha8 is a counter-based generator, so the streams for distinct ids
//! are independent and can be handed out to parallel workers without any
//! shared state. Gaussian variates use `rand_distr::StandardNormal`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

/// What a stream is used for. The tag keeps streams for different
/// purposes apart even when they share `major`/`minor` coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Taps = 1,
    Locations = 2,
    Adc = 3,
    Link = 4,
    Codebook = 5,
    Training = 6,
    Oracle = 7,
}

/// Coordinates of a stream: `major` is usually a location (or antenna
/// count), `minor` a frame (or tone count).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub purpose: Purpose,
    pub major: u32,
    pub minor: u32,
}

impl StreamId {
    pub fn new(purpose: Purpose, major: u32, minor: u32) -> Self {
        Self {
            purpose,
            major,
            minor,
        }
    }

    fn word(self) -> u64 {
        ((self.purpose as u64) << 56) | ((u64::from(self.major) & 0xFF_FFFF) << 32) | u64::from(self.minor)
    }
}

/// One SplitMix64 step. Also used as the seed mixing function for
/// per-location seeds.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and an index.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut state = seed ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    splitmix64(&mut state)
}

/// The stream for `id` under `seed`.
pub fn stream(seed: u64, id: StreamId) -> SimRng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(id.word());
    rng
}

/// Zero-mean circularly-symmetric complex Gaussian with the given variance
/// (E|z|² = variance).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let sigma = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(sigma * re, sigma * im)
}
