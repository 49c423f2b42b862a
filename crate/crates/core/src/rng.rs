//! Seeded, splittable random streams.
//!
//! Every experiment draws from ChaCha8 keyed by the user seed. Independent
//! pieces of work (one replicate of one grid point of one experiment) get
//! their own ChaCha stream, so results never depend on how replicates are
//! scheduled across workers.
//!
//! Stream derivation: `stream = mix(mix(mix(experiment) ^ group) ^ replicate)`
//! where `mix` is the SplitMix64 finalizer. `group` identifies the grid
//! point (callers use `f64::to_bits(c)` so a given `c` keeps its stream when
//! the grid changes).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Experiment families with disjoint stream spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Experiment {
    Allocation = 1,
    Assignment = 2,
    Dimension = 3,
    Bayes = 4,
    Popest = 5,
    Test = 99,
}

/// SplitMix64 output function.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_stream(experiment: Experiment, group: u64, replicate: u64) -> u64 {
    mix(mix(mix(experiment as u64) ^ group) ^ replicate)
}

/// Generator for one replicate of one grid point.
pub fn replicate_rng(seed: u64, experiment: Experiment, group: u64, replicate: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(derive_stream(experiment, group, replicate));
    rng
}
