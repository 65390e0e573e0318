use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// Identifier recorded next to every seed so that stored keys name their generator.
pub const RNG_ALGORITHM: &str = "chacha20";

/// Seeded, platform-stable random stream.
///
/// Every randomized operation in the crate takes `&mut RngState`; the state is
/// owned by the caller and never shared, so output is a pure function of the
/// seed and the sequence of calls.
#[derive(Clone, Debug)]
pub struct RngState {
    seed: u64,
    inner: ChaCha20Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState {
            seed,
            inner: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream for a sub-task, e.g. `derive(seed, &[client_id, round])`.
    pub fn derive(seed: u64, path: &[u64]) -> Self {
        let mixed = path.iter().fold(splitmix64(seed), |acc, &p| {
            splitmix64(acc ^ splitmix64(p.wrapping_add(0x5851_F42D)))
        });
        RngState::new(mixed)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm(&self) -> &'static str {
        RNG_ALGORITHM
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn gaussian(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random::<u64>()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
