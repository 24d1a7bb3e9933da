//! Seeded generators. Each consumer draws from its own ChaCha stream so that
//! equal user seeds in different places do not produce correlated draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const INIT: u64 = 1;
pub(crate) const SHUFFLE: u64 = 2;
pub(crate) const QUERY: u64 = 3;
pub(crate) const INVERSION: u64 = 4;
pub(crate) const BASELINE: u64 = 5;
pub(crate) const TRACE: u64 = 6;
pub(crate) const SYMBOLS: u64 = 7;
pub(crate) const NOISE: u64 = 8;

pub(crate) fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
