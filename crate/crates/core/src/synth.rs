//! Synthetic received-power traces with a known lower tail.
//!
//! A latent Gaussian AR(1) sequence `z_t = φ z_{t-1} + sqrt(1 - φ²) e_t` is
//! mapped through `U = Φ(z)` and then through the inverse distribution
//! function of a two-part mixture in dBm:
//!
//! - `U < p_tail`: `x = u₀ - y` with `y` the GPD value whose survival
//!   probability is `U / p_tail`, so the part below `u₀` is exactly GPD;
//! - otherwise: a normal body (lognormal power) conditioned to lie at or
//!   above `u₀`.
//!
//! The map is increasing in `U`, so `φ > 0` produces clustered deep fades
//! while every sample keeps the mixture marginal.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::gpd::{self, GpdParams};
use crate::preprocess::{ChannelTrace, PowerUnit, DEFAULT_SAMPLE_PERIOD_MS};

/// Preset trace shapes modelled on the two stationary groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Body well above -12 dBm, bounded tail below -5 dBm.
    Group1,
    /// Body straddling -12 dBm, heavier unbounded tail below -20 dBm.
    Group2,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "group1" => Ok(Profile::Group1),
            "group2" => Ok(Profile::Group2),
            other => Err(Error::Usage(format!("unknown profile {other:?}, expected group1 or group2"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub body_mean_dbm: f64,
    pub body_std_db: f64,
    pub tail: GpdParams,
    /// `u₀`: tail samples lie strictly below it.
    pub tail_boundary_dbm: f64,
    pub tail_fraction: f64,
    /// AR(1) coefficient of the latent sequence.
    pub phi: f64,
    pub n: usize,
    pub seed: u64,
    pub sample_period_ms: f64,
    pub profile: Option<Profile>,
}

impl SynthConfig {
    pub fn profile(profile: Profile, n: usize, seed: u64) -> Self {
        let (mean, std, shape, scale, u0, p) = match profile {
            Profile::Group1 => (0.0, 2.0, -0.2, 1.0, -5.0, 0.1),
            Profile::Group2 => (-14.0, 3.0, 0.1, 2.0, -20.0, 0.05),
        };
        Self {
            body_mean_dbm: mean,
            body_std_db: std,
            tail: GpdParams::new(shape, scale).expect("preset parameters are valid"),
            tail_boundary_dbm: u0,
            tail_fraction: p,
            phi: 0.0,
            n,
            seed,
            sample_period_ms: DEFAULT_SAMPLE_PERIOD_MS,
            profile: Some(profile),
        }
    }

    pub fn group1(n: usize, seed: u64) -> Self {
        Self::profile(Profile::Group1, n, seed)
    }

    pub fn group2(n: usize, seed: u64) -> Self {
        Self::profile(Profile::Group2, n, seed)
    }

    pub fn with_phi(mut self, phi: f64) -> Self {
        self.phi = phi;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction < 0.5) {
            return bad(format!("tail fraction must lie in (0, 0.5), got {}", self.tail_fraction));
        }
        if !(0.0..1.0).contains(&self.phi) {
            return bad(format!("phi must lie in [0, 1), got {}", self.phi));
        }
        if !(self.body_std_db > 0.0 && self.body_std_db.is_finite()) {
            return bad(format!("body std must be positive, got {}", self.body_std_db));
        }
        if !self.body_mean_dbm.is_finite() || !self.tail_boundary_dbm.is_finite() {
            return bad("body mean and tail boundary must be finite".into());
        }
        if !(self.sample_period_ms > 0.0 && self.sample_period_ms.is_finite()) {
            return bad(format!("sample period must be positive, got {}", self.sample_period_ms));
        }
        Ok(())
    }
}

/// The latent AR(1) sequence, stationary with unit variance.
pub fn latent_stream(config: &SynthConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let mut rng = crate::seeded_rng(config.seed);
    let innovation = (1.0 - config.phi * config.phi).sqrt();
    let mut z: f64 = rng.sample(StandardNormal);
    let mut out = Vec::with_capacity(config.n);
    out.push(z);
    for _ in 1..config.n {
        let e: f64 = rng.sample(StandardNormal);
        z = config.phi * z + innovation * e;
        out.push(z);
    }
    Ok(out)
}

/// Generates a dBm trace from `config`.
pub fn simulate_trace(config: &SynthConfig) -> Result<ChannelTrace> {
    let latent = latent_stream(config)?;
    let std_normal = Normal::standard();
    let body = Normal::new(config.body_mean_dbm, config.body_std_db)
        .map_err(|e| Error::InvalidParameter(format!("body distribution: {e}")))?;
    let u0 = config.tail_boundary_dbm;
    let p = config.tail_fraction;
    let body_floor = body.cdf(u0);
    let below_u0 = u0.next_down();

    let samples = latent
        .into_iter()
        .map(|z| {
            let u = std_normal.cdf(z);
            if u < p {
                let y = gpd::inverse_survival(u / p, &config.tail).expect("ratio lies in (0, 1)");
                (u0 - y).min(below_u0)
            } else {
                let v = (u - p) / (1.0 - p);
                body.inverse_cdf(body_floor + v * (1.0 - body_floor)).max(u0)
            }
        })
        .collect();
    ChannelTrace::new(samples, PowerUnit::Dbm, config.sample_period_ms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{split_stationary_groups, GroupLabel, DEFAULT_LEVEL_DBM, DEFAULT_WINDOW};

    fn lag1(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let c0: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
        let c1: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        c1 / c0
    }

    #[test]
    fn same_seed_same_trace() {
        let c = SynthConfig::group1(10_000, 3).with_phi(0.5);
        assert_eq!(simulate_trace(&c).unwrap(), simulate_trace(&c).unwrap());
        let other = SynthConfig { seed: 4, ..c.clone() };
        assert_ne!(simulate_trace(&c).unwrap(), simulate_trace(&other).unwrap());
    }

    #[test]
    fn independent_latent_stream() {
        let z = latent_stream(&SynthConfig::group1(1_000_000, 11)).unwrap();
        assert!(lag1(&z).abs() < 0.01);
    }

    #[test]
    fn correlated_latent_stream() {
        let z = latent_stream(&SynthConfig::group1(200_000, 11).with_phi(0.8)).unwrap();
        assert!((lag1(&z) - 0.8).abs() < 0.01);
    }

    #[test]
    fn tail_fraction_and_placement() {
        for c in [SynthConfig::group1(400_000, 1), SynthConfig::group2(400_000, 2)] {
            let t = simulate_trace(&c).unwrap();
            let u0 = c.tail_boundary_dbm;
            let k = t.samples().iter().filter(|&&x| x < u0).count() as f64;
            let p = c.tail_fraction;
            let n = c.n as f64;
            assert!((k / n - p).abs() < 3.0 * (p * (1.0 - p) / n).sqrt());
        }
    }

    #[test]
    fn profiles_land_in_their_groups() {
        let t1 = simulate_trace(&SynthConfig::group1(100_000, 5)).unwrap();
        assert!(t1.samples().iter().all(|&x| x > DEFAULT_LEVEL_DBM));
        let w = split_stationary_groups(t1.samples(), DEFAULT_WINDOW, DEFAULT_LEVEL_DBM).unwrap();
        assert!(w.iter().all(|w| w.label == GroupLabel::One));

        let t2 = simulate_trace(&SynthConfig::group2(100_000, 5)).unwrap();
        let w = split_stationary_groups(t2.samples(), DEFAULT_WINDOW, DEFAULT_LEVEL_DBM).unwrap();
        assert!(w.iter().all(|w| w.label == GroupLabel::Two));
        assert_eq!(t2.sample_period_ms(), 2.0);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = SynthConfig::group1(10, 0);
        for c in [
            SynthConfig { tail_fraction: 0.5, ..base.clone() },
            SynthConfig { tail_fraction: 0.0, ..base.clone() },
            SynthConfig { phi: 1.0, ..base.clone() },
            SynthConfig { phi: -0.1, ..base.clone() },
            SynthConfig { n: 0, ..base.clone() },
            SynthConfig { body_std_db: 0.0, ..base.clone() },
        ] {
            assert!(simulate_trace(&c).is_err());
        }
        assert!("group3".parse::<Profile>().is_err());
        assert_eq!("group2".parse::<Profile>().unwrap(), Profile::Group2);
    }
}
