//! Seeded random streams.
//!
//! Every random consumer in the crate draws from a ChaCha20 stream keyed by a
//! `(seed, stream)` pair, so independent units (chains, ensemble members,
//! splits) get non-overlapping sequences that do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Rng = ChaCha20Rng;

pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fills `out` with i.i.d. standard normal draws.
pub fn fill_standard_normal(rng: &mut Rng, out: &mut [f64]) {
    use rand_distr::{Distribution, StandardNormal};
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}
