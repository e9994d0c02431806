//! The two case studies, opinion dynamics and demand response, and the
//! experiment drivers built on them.

pub mod demand;
pub mod experiments;
pub mod opinion;

pub use demand::{DemandResponseConfig, DemandResponseGame, LoadDynamics};
pub use opinion::{AgentKind, OpinionConfig, OpinionGame, OpinionPopulation};

/// Mixes a user seed with cell coordinates into an independent stream seed.
pub(crate) fn cell_seed(seed: u64, coords: &[u64]) -> u64 {
    // SplitMix64 finalizer over the running combination.
    let mut x = seed;
    for &c in coords {
        x ^= c.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(x << 6).wrapping_add(x >> 2);
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x ^= x >> 31;
    }
    x
}
