//! Seeded randomness. Every random draw in the crate flows through a [`SeededRng`]
//! derived from an explicit seed and a stream label, so unrelated consumers of the
//! same seed never share a sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

/// Derives an independent generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: &str) -> SeededRng {
    // FNV-1a over the label, folded into the ChaCha stream id.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(h);
    rng
}

/// Standard normal draw (Box-Muller, one value per call).
pub fn normal(rng: &mut SeededRng) -> f64 {
    // u1 in (0, 1] so the log is finite.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}
