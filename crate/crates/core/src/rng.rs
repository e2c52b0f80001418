//! Seeded random streams.
//!
//! Every Monte Carlo consumer derives an independent ChaCha stream from the
//! master seed and a stream number, so results never depend on how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream reserved for Blahut-Arimoto initial channels.
pub const STREAM_SOLVER_INIT: u64 = 1 << 60;
/// Stream reserved for multivariate normal samples.
pub const STREAM_MVN: u64 = 2 << 60;

/// Independent sub-stream `stream` of the master `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes two words into a new seed (splitmix64 finalizer).
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
