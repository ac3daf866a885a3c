//! Lower-tail channel modelling for ultra-reliable rate selection.
//!
//! The crate fits a generalized Pareto distribution (GPD) to deep fades of a
//! received-power trace, turns the fitted tail into a transmission rate for a
//! target packet error rate, and propagates t-distribution confidence
//! intervals on the fitted parameters into a confidence band on that rate.
//!
//! Modules follow the processing order:
//!
//! - [`gpd`]: distribution function, quantile, likelihood and sampling.
//! - [`preprocess`]: traces, unit conversion, stationary grouping,
//!   exceedance extraction and runs declustering.
//! - [`threshold`]: mean residual life and parameter-stability diagnostics.
//! - [`estimate`]: maximum-likelihood fitting and PP/QQ data.
//! - [`confidence`]: resampled parameter confidence intervals.
//! - [`rate`]: outage probability, rate selection and rate bands.
//! - [`synth`]: seeded synthetic traces with a known GPD tail.
//! - [`pipeline`] and [`report`]: end-to-end runs and their serialized form.

pub mod confidence;
pub mod error;
pub mod estimate;
pub mod gpd;
pub mod optimize;
pub mod pipeline;
pub mod preprocess;
pub mod rate;
pub mod report;
pub mod special;
pub mod synth;
pub mod threshold;

pub use confidence::{ci_range, param_ci, ConfidenceInterval, ParamCi, ResampleMode, SpreadDivisor};
pub use error::{Error, Result};
pub use estimate::{fit_gpd_mle, pp_points, qq_points, TailFit};
pub use gpd::GpdParams;
pub use preprocess::{ChannelTrace, ExceedanceSet, PowerUnit};
pub use rate::{outage_epsilon_n, rate_band, rate_select, EpsilonPolicy, RateBand};
pub use special::t_critical;
pub use synth::{simulate_trace, SynthConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic random stream used everywhere a seed is accepted.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}
