//! Shared inputs for the benchmarks.

use tailrate_core::preprocess::ExceedanceSet;
use tailrate_core::{gpd, GpdParams};

/// Parameters of the heavier-tailed benchmark sample.
pub fn bench_params() -> GpdParams {
    GpdParams::new(0.1, 2.0).expect("valid parameters")
}

/// `n` GPD exceedances drawn from [`bench_params`].
pub fn exceedances(n: usize, seed: u64) -> ExceedanceSet {
    let values = gpd::sample(&bench_params(), n, seed).expect("valid sample size");
    ExceedanceSet::from_values(0.0, values, 10 * n, false).expect("samples are nonnegative")
}
