//! Confidence intervals for fitted GPD parameters.
//!
//! The parameters are re-estimated `M` times, by default on bootstrap
//! resamples of the exceedances. From the `M` estimates `θ_j` the interval
//! is
//!
//! ```text
//! [θ̄ - t* s, θ̄ + t* s],   s = sqrt((1/M) Σ (θ_j - θ̄)²),   t* = Q(1 - α/2; M - 1)
//! ```
//!
//! The population divisor `M` is the default; [`SpreadDivisor::Sample`]
//! switches to `M - 1`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{mle, MIN_EXCEEDANCES};
use crate::preprocess::ExceedanceSet;
use crate::special::t_critical;

pub const DEFAULT_ITERATIONS: usize = 30;
/// Largest tolerated share of failed resample fits.
pub const MAX_FAILURE_SHARE: f64 = 0.2;

/// How the `M` parameter re-estimates are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMode {
    /// Same-size resamples drawn with replacement.
    #[default]
    Bootstrap,
    /// `M` contiguous non-overlapping blocks of the exceedance sequence.
    Blocks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadDivisor {
    /// Divide the squared deviations by `M`.
    #[default]
    Population,
    /// Divide by `M - 1`.
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    /// Number of estimates the interval was built from.
    pub iterations: usize,
    pub mean: f64,
    pub std: f64,
}

/// Scale and shape intervals at one α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamCi {
    pub alpha: f64,
    pub scale: ConfidenceInterval,
    pub shape: ConfidenceInterval,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiConfig {
    pub iterations: usize,
    pub mode: ResampleMode,
    pub divisor: SpreadDivisor,
    pub seed: u64,
}

impl CiConfig {
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self { iterations, mode: ResampleMode::Bootstrap, divisor: SpreadDivisor::Population, seed }
    }
}

/// Parameter estimates from the successful resample fits, in resample order.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampleEstimates {
    pub scales: Vec<f64>,
    pub shapes: Vec<f64>,
    pub attempted: usize,
    pub failed: usize,
}

/// Width of an interval.
pub fn ci_range(ci: &ConfidenceInterval) -> f64 {
    ci.upper - ci.lower
}

/// Fits every resample of `values` prescribed by `config`.
pub fn resample_estimates(values: &[f64], config: &CiConfig) -> Result<ResampleEstimates> {
    let m = config.iterations;
    if m < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 iterations, got {m}")));
    }
    let samples: Vec<Vec<f64>> = match config.mode {
        ResampleMode::Bootstrap => {
            if values.len() < MIN_EXCEEDANCES {
                return Err(Error::InsufficientData { needed: MIN_EXCEEDANCES, got: values.len() });
            }
            let mut master = crate::seeded_rng(config.seed);
            let seeds: Vec<u64> = (0..m).map(|_| master.random()).collect();
            seeds
                .into_iter()
                .map(|s| {
                    let mut rng = crate::seeded_rng(s);
                    (0..values.len()).map(|_| values[rng.random_range(0..values.len())]).collect()
                })
                .collect()
        }
        ResampleMode::Blocks => {
            let size = values.len() / m;
            if size < MIN_EXCEEDANCES {
                return Err(Error::InsufficientData { needed: MIN_EXCEEDANCES * m, got: values.len() });
            }
            values.chunks_exact(size).take(m).map(<[f64]>::to_vec).collect()
        }
    };

    let fits: Vec<Option<(f64, f64)>> = samples
        .par_iter()
        .map(|s| match mle(s) {
            Ok(est) if est.converged => Some((est.params.scale(), est.params.shape())),
            _ => None,
        })
        .collect();
    let failed = fits.iter().filter(|f| f.is_none()).count();
    let (scales, shapes) = fits.into_iter().flatten().unzip();
    Ok(ResampleEstimates { scales, shapes, attempted: m, failed })
}

/// Interval `θ̄ ± t* s` from a set of estimates.
pub fn interval_from_estimates(estimates: &[f64], alpha: f64, divisor: SpreadDivisor) -> Result<ConfidenceInterval> {
    let m = estimates.len();
    if m < 2 {
        return Err(Error::InsufficientData { needed: 2, got: m });
    }
    let mean = estimates.iter().sum::<f64>() / m as f64;
    let ss = estimates.iter().map(|t| (t - mean).powi(2)).sum::<f64>();
    let denom = match divisor {
        SpreadDivisor::Population => m as f64,
        SpreadDivisor::Sample => (m - 1) as f64,
    };
    let std = (ss / denom).sqrt();
    let half = t_critical(alpha, (m - 1) as u64)? * std;
    Ok(ConfidenceInterval { lower: mean - half, upper: mean + half, alpha, iterations: m, mean, std })
}

/// Scale and shape intervals at every α from one shared set of resample fits.
pub fn intervals_from_resamples(
    estimates: &ResampleEstimates,
    alphas: &[f64],
    divisor: SpreadDivisor,
) -> Result<Vec<ParamCi>> {
    if estimates.failed as f64 > MAX_FAILURE_SHARE * estimates.attempted as f64 || estimates.scales.len() < 2 {
        return Err(Error::CiUnavailable { failed: estimates.failed, total: estimates.attempted });
    }
    alphas
        .iter()
        .map(|&alpha| {
            Ok(ParamCi {
                alpha,
                scale: interval_from_estimates(&estimates.scales, alpha, divisor)?,
                shape: interval_from_estimates(&estimates.shapes, alpha, divisor)?,
            })
        })
        .collect()
}

/// Intervals at every α for an exceedance set.
pub fn param_cis(set: &ExceedanceSet, config: &CiConfig, alphas: &[f64]) -> Result<Vec<ParamCi>> {
    for &a in alphas {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Domain(format!("alpha must lie in (0, 1), got {a}")));
        }
    }
    let estimates = resample_estimates(&set.values, config)?;
    intervals_from_resamples(&estimates, alphas, config.divisor)
}

/// Bootstrap `(scale, shape)` intervals with `m` resamples at one α.
pub fn param_ci(set: &ExceedanceSet, m: usize, alpha: f64, seed: u64) -> Result<(ConfidenceInterval, ConfidenceInterval)> {
    let cis = param_cis(set, &CiConfig::new(m, seed), &[alpha])?;
    Ok((cis[0].scale, cis[0].shape))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpd::{sample, GpdParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn gpd_set(n: usize, seed: u64) -> ExceedanceSet {
        let p = GpdParams::new(0.1, 2.0).unwrap();
        ExceedanceSet::from_values(0.0, sample(&p, n, seed).unwrap(), n, true).unwrap()
    }

    #[test]
    fn constant_estimates_give_zero_width() {
        let ci = interval_from_estimates(&[0.25; 30], 0.05, SpreadDivisor::Population).unwrap();
        assert_eq!(ci.lower, 0.25);
        assert_eq!(ci.upper, 0.25);
        assert_eq!(ci_range(&ci), 0.0);
    }

    #[test]
    fn range_of_explicit_interval() {
        let ci = ConfidenceInterval { lower: 1.0, upper: 3.0, alpha: 0.05, iterations: 2, mean: 2.0, std: 0.1 };
        assert_eq!(ci_range(&ci), 2.0);
    }

    #[test]
    fn population_divisor_is_the_default() {
        let est = [1.0, 2.0, 3.0, 4.0];
        let pop = interval_from_estimates(&est, 0.05, SpreadDivisor::Population).unwrap();
        let smp = interval_from_estimates(&est, 0.05, SpreadDivisor::Sample).unwrap();
        assert_relative_eq!(pop.std, (1.25f64).sqrt(), max_relative = 1e-15);
        assert_relative_eq!(smp.std, (5.0f64 / 3.0).sqrt(), max_relative = 1e-15);
        let t = t_critical(0.05, 3).unwrap();
        assert_relative_eq!(ci_range(&pop), 2.0 * t * pop.std, max_relative = 1e-14);
        assert_eq!(CiConfig::new(30, 0).divisor, SpreadDivisor::Population);
    }

    #[test]
    fn bootstrap_is_deterministic_and_seed_sensitive() {
        let set = gpd_set(500, 1);
        let a = param_ci(&set, 10, 0.05, 9).unwrap();
        assert_eq!(a, param_ci(&set, 10, 0.05, 9).unwrap());
        assert_ne!(a, param_ci(&set, 10, 0.05, 10).unwrap());
    }

    #[test]
    fn smaller_alpha_nests_larger_alpha() {
        let set = gpd_set(2_000, 2);
        let cis = param_cis(&set, &CiConfig::new(30, 4), &[0.01, 0.5]).unwrap();
        for (wide, narrow) in [(cis[0].scale, cis[1].scale), (cis[0].shape, cis[1].shape)] {
            assert_eq!(wide.mean, narrow.mean);
            assert!(wide.lower <= narrow.lower && narrow.upper <= wide.upper);
            assert!(ci_range(&wide) >= ci_range(&narrow));
        }
    }

    #[test]
    fn block_mode_uses_disjoint_segments() {
        let set = gpd_set(3_000, 3);
        let config = CiConfig { mode: ResampleMode::Blocks, ..CiConfig::new(10, 0) };
        let est = resample_estimates(&set.values, &config).unwrap();
        assert_eq!(est.attempted, 10);
        let small = gpd_set(200, 3);
        assert!(matches!(resample_estimates(&small.values, &config), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn too_many_failures_make_the_interval_unavailable() {
        let est = ResampleEstimates { scales: vec![1.0; 7], shapes: vec![0.1; 7], attempted: 10, failed: 3 };
        assert!(matches!(
            intervals_from_resamples(&est, &[0.05], SpreadDivisor::Population),
            Err(Error::CiUnavailable { failed: 3, total: 10 })
        ));
        let ok = ResampleEstimates { scales: vec![1.0; 8], shapes: vec![0.1; 8], attempted: 10, failed: 2 };
        let cis = intervals_from_resamples(&ok, &[0.05], SpreadDivisor::Population).unwrap();
        assert_eq!(cis[0].scale.iterations, 8);
    }

    #[test]
    fn rejects_bad_arguments() {
        let set = gpd_set(100, 1);
        assert!(param_ci(&set, 1, 0.05, 0).is_err());
        assert!(param_ci(&set, 5, 0.0, 0).is_err());
        assert!(param_ci(&set, 5, 1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn interval_invariants(est in prop::collection::vec(-5.0f64..5.0, 2..60), alpha in 0.001f64..0.999) {
            let ci = interval_from_estimates(&est, alpha, SpreadDivisor::Population).unwrap();
            prop_assert!(ci.lower <= ci.mean && ci.mean <= ci.upper);
            let t = t_critical(alpha, (est.len() - 1) as u64).unwrap();
            prop_assert!((ci_range(&ci) - 2.0 * t * ci.std).abs() <= 1e-12 * (1.0 + ci.mean.abs()));
        }
    }
}
