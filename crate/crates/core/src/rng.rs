//! Seeded random streams. Every stochastic step draws from a
//! xoshiro256** generator whose state is filled by SplitMix64, one stream per
//! `(seed, job)` pair so results do not depend on scheduling order.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;

pub type JobRng = Xoshiro256StarStar;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for one unit of work (one generated sequence, one
/// sampled dataset, ...).
pub fn job_rng(seed: u64, job: u64) -> JobRng {
    Xoshiro256StarStar::seed_from_u64(splitmix64(seed ^ splitmix64(job)))
}

pub fn seeded(seed: u64) -> JobRng {
    job_rng(seed, 0)
}
