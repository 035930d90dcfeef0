//! Deterministic per-replicate seeding and the bounded worker pool.
//!
//! A replicate stream is seeded with
//! `hash64(master_seed, module_id, replicate_index)`, where `hash64` chains
//! the SplitMix64 finalizer over the three words. The generator family is
//! xoshiro256++ seeded through `seed_from_u64`.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub type SimRng = Xoshiro256PlusPlus;

/// Module identifiers mixed into replicate seeds.
pub mod module_id {
    pub const STABLE_KERNEL: u64 = 1;
    pub const STABLE_PROCESS: u64 = 2;
    pub const SUPERPROCESS_SIM: u64 = 3;
    pub const LOGLAP_ORACLE: u64 = 4;
    pub const DENSITY_ESTIMATOR: u64 = 5;
    pub const REGULARITY: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn hash64(master_seed: u64, module: u64, replicate: u64) -> u64 {
    let h = splitmix64(master_seed);
    let h = splitmix64(h ^ module);
    splitmix64(h ^ replicate)
}

pub fn replicate_seed(master_seed: u64, module: u64, replicate: u64) -> u64 {
    hash64(master_seed, module, replicate)
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

pub fn replicate_rng(master_seed: u64, module: u64, replicate: u64) -> SimRng {
    rng_from_seed(replicate_seed(master_seed, module, replicate))
}

/// Runs `job(i)` for `i in 0..count` on a pool of `workers` threads and
/// returns the results in index order.
pub fn run_replicates<T, F>(count: usize, workers: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers <= 1 {
        return Ok((0..count).map(job).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Resource(format!("worker pool: {e}")))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(job).collect()))
}
