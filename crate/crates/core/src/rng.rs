use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random stream per (seed, purpose) pair.
pub(crate) fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) mod streams {
    pub const SPLIT: u64 = 1;
    pub const SYNTHETIC: u64 = 2;
    pub const INIT: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    pub const ORACLE: u64 = 5;
    pub const RANDOM_SAMPLER: u64 = 6;
    pub const SCHEDULE: u64 = 7;
}
