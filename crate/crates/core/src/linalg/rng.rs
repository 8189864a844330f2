//! Seeded randomness shared by every experiment.
//!
//! All randomness flows from [`ChaCha8Rng`], a counter-based stream cipher
//! generator with a stable, platform-independent output stream, so runs are
//! reproducible bit-for-bit for a fixed seed.

use rand::{Rng as _, SeedableRng};
use rand_distr::StandardNormal;

use crate::scalar::Scalar;

pub type Rng = rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Derives an independent stream for a sub-task (e.g. per grid row or per seed).
pub fn derive(seed: u64, stream: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn normal<T: Scalar>(rng: &mut Rng) -> T {
    T::lit(rng.sample::<f64, _>(StandardNormal))
}

pub fn normal_vec<T: Scalar>(rng: &mut Rng, n: usize) -> Vec<T> {
    (0..n).map(|_| normal(rng)).collect()
}

pub fn uniform<T: Scalar>(rng: &mut Rng, lo: T, hi: T) -> T {
    lo + (hi - lo) * T::lit(rng.random::<f64>())
}
