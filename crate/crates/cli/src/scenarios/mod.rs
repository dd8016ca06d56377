//! Scenario drivers behind the CLI subcommands.

pub mod onestep;
pub mod plan;
pub mod sde;
pub mod statics;

use pos_core::ensemble::Ensemble;
use pos_core::stats::pairwise_sum;

/// Runs `f` on a rayon pool with the configured worker count (0 = library
/// default). Record order never depends on scheduling: workers only
/// parallelize independent attempts, and results are sorted afterwards.
pub fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    Ok(pool.install(f))
}

/// Sampled mean of `f(x)` over a one-dimensional ensemble, pairwise.
pub fn mean_map(x: &Ensemble, f: impl Fn(f64) -> f64) -> f64 {
    let vals: Vec<f64> = x.as_slice().iter().map(|&v| f(v)).collect();
    pairwise_sum(&vals) / vals.len() as f64
}

/// Normal-distribution moment targets `m = 1..=order` about zero.
pub fn normal_targets(order: usize, sigma: f64) -> Vec<f64> {
    (1..=order).map(|m| pos_core::stats::normal_moment(m, sigma).expect("valid order")).collect()
}
