//! Seed derivation and replicate ensembles.
//!
//! Every random stream comes from one master seed: replicate `i` uses the ChaCha8
//! generator keyed by the master seed with stream number `i`. Streams are independent
//! and do not depend on how replicates are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Random stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs `f(i, rng_i)` for `i in 0..n` and returns results in replicate order.
///
/// `workers` bounds the pool size (`None` uses rayon's default). `Some(1)` runs
/// sequentially on the calling thread.
pub fn run_replicates<T, F>(n: usize, seed: u64, workers: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, ChaCha8Rng) -> T + Sync + Send,
{
    if workers == Some(1) || n <= 1 {
        return (0..n).map(|i| f(i, stream_rng(seed, i as u64))).collect();
    }
    let run = || {
        (0..n)
            .into_par_iter()
            .map(|i| f(i, stream_rng(seed, i as u64)))
            .collect()
    };
    match workers {
        Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        },
        None => run(),
    }
}
