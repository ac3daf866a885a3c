//! Transmission-rate selection from a fitted lower tail.
//!
//! With threshold `u` and fitted `(σ̂, ξ̂)`, the rate for outage
//! probability `ε_n` at unit bandwidth is
//!
//! ```text
//! R = log2(1 + u + (σ̂/ξ̂) (1 - ε_n^(-ξ̂)))
//! ```
//!
//! which is `log2(1 + u - y)` with `y` the `(1 - ε_n)`-quantile of the
//! fitted exceedance distribution: the power level reached by all but an
//! `ε_n` share of deep fades. `u` and `σ̂` must be in linear power (or SNR)
//! units for the expression to be a Shannon rate.
//!
//! `ε_n` corrects the target `ε` for estimation error when the true tail is
//! known; in production it is taken equal to `ε`.
//!
//! The band evaluates the same expression at the corners of the parameter
//! confidence intervals, pairing the scale's lower bound with the shape's
//! upper bound for the lower rate and vice versa for the upper rate. The
//! rate decreases in both parameters, so the two remaining corners always
//! straddle the band; they are reported for inspection.

use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceInterval;
use crate::error::{Error, Result};
use crate::estimate::TailFit;
use crate::gpd::GpdParams;

/// Default target packet error rate.
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Rate confidence band at one α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBand {
    /// Significance level of the parameter intervals behind the band.
    pub alpha: f64,
    /// Point estimate, bits/s/Hz.
    pub rate: f64,
    pub lower: f64,
    pub upper: f64,
    pub epsilon: f64,
    pub epsilon_n: f64,
    pub threshold_linear: f64,
    /// Rates at the two corners not used by the band, `(σ_l, ξ_l)` and
    /// `(σ_u, ξ_u)`; `None` when either is infeasible.
    pub off_corners: Option<(f64, f64)>,
}

/// How `ε_n` is chosen for rate selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonPolicy {
    /// `ε_n = ε`, valid once the training size is of order `1/ε`.
    Approximate,
    /// `ε_n` from the exact correction against known true parameters.
    Oracle(GpdParams),
}

fn check_probability(p: f64, what: &str) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("{what} must lie in (0, 1), got {p}")));
    }
    Ok(())
}

/// `(σ/ξ)(1 - ε^(-ξ))`, or `σ ln ε` in the exponential limit.
fn tail_offset(params: &GpdParams, eps: f64) -> f64 {
    let log_eps = eps.ln();
    if params.is_exponential() {
        params.scale() * log_eps
    } else {
        -(params.scale() / params.shape()) * (-params.shape() * log_eps).exp_m1()
    }
}

/// Outage probability of the estimated tail at the true `ε`-quantile:
/// `[1 - (ξ̂/σ̂)(σ/ξ)(1 - ε^(-ξ))]^(-1/ξ̂)`.
pub fn outage_epsilon_n(true_params: &GpdParams, est_params: &GpdParams, epsilon: f64) -> Result<f64> {
    check_probability(epsilon, "epsilon")?;
    let offset = tail_offset(true_params, epsilon);
    if est_params.is_exponential() {
        return Ok((offset / est_params.scale()).exp());
    }
    let w = -est_params.shape() * offset / est_params.scale();
    if !(w > -1.0) {
        return Err(Error::Domain(format!(
            "outage base 1 + {w} is nonpositive for true (shape {}, scale {}) and estimated (shape {}, scale {})",
            true_params.shape(),
            true_params.scale(),
            est_params.shape(),
            est_params.scale()
        )));
    }
    Ok((-w.ln_1p() / est_params.shape()).exp())
}

/// `ε_n` under the chosen policy.
pub fn epsilon_n_policy(fit: &TailFit, epsilon: f64, policy: EpsilonPolicy) -> Result<f64> {
    check_probability(epsilon, "epsilon")?;
    match policy {
        EpsilonPolicy::Approximate => Ok(epsilon),
        EpsilonPolicy::Oracle(truth) => outage_epsilon_n(&truth, &fit.params, epsilon),
    }
}

/// Domain of the fitted tail, which fixes how the `ε_n` power level enters
/// the logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "domain")]
pub enum RateDomain {
    /// Threshold and exceedances in linear power/SNR units: `log2(1 + u - y)`.
    #[default]
    Linear,
    /// Threshold and exceedances in dB: the level `u - y` is converted to a
    /// linear SNR against `reference_dbm` before taking `log2(1 + ·)`.
    Decibel { reference_dbm: f64 },
}

impl RateDomain {
    /// `u` expressed in linear units.
    pub fn threshold_linear(self, u: f64) -> f64 {
        match self {
            RateDomain::Linear => u,
            RateDomain::Decibel { reference_dbm } => 10f64.powf((u - reference_dbm) / 10.0),
        }
    }
}

/// Rate for threshold `u` and parameters `params` at outage `epsilon_n`.
pub fn rate_for(u: f64, params: &GpdParams, epsilon_n: f64, which: &'static str) -> Result<f64> {
    rate_in(RateDomain::Linear, u, params, epsilon_n, which)
}

/// [`rate_for`] in a given tail domain.
pub fn rate_in(domain: RateDomain, u: f64, params: &GpdParams, epsilon_n: f64, which: &'static str) -> Result<f64> {
    check_probability(epsilon_n, "epsilon_n")?;
    let level = u + tail_offset(params, epsilon_n);
    let argument = match domain {
        RateDomain::Linear => 1.0 + level,
        RateDomain::Decibel { reference_dbm } => 1.0 + 10f64.powf((level - reference_dbm) / 10.0),
    };
    if !(argument > 0.0) {
        return Err(Error::RateInfeasible { which, argument });
    }
    Ok(argument.log2())
}

/// Rate selected from a fitted tail.
pub fn rate_select(fit: &TailFit, epsilon_n: f64) -> Result<f64> {
    rate_for(fit.threshold, &fit.params, epsilon_n, "point")
}

fn corner(scale: f64, shape: f64, which: &'static str) -> Result<GpdParams> {
    GpdParams::new(shape, scale)
        .map_err(|_| Error::Domain(format!("{which}: scale bound {scale} is not positive")))
}

/// Rate band from the parameter intervals, sharing `epsilon_n` across the
/// point estimate and both bounds.
pub fn rate_band(
    fit: &TailFit,
    scale_ci: &ConfidenceInterval,
    shape_ci: &ConfidenceInterval,
    epsilon: f64,
    epsilon_n: f64,
) -> Result<RateBand> {
    rate_band_in(RateDomain::Linear, fit, scale_ci, shape_ci, epsilon, epsilon_n)
}

/// [`rate_band`] in a given tail domain.
pub fn rate_band_in(
    domain: RateDomain,
    fit: &TailFit,
    scale_ci: &ConfidenceInterval,
    shape_ci: &ConfidenceInterval,
    epsilon: f64,
    epsilon_n: f64,
) -> Result<RateBand> {
    let u = fit.threshold;
    let at = |scale: f64, shape: f64, which: &'static str| {
        corner(scale, shape, which).and_then(|p| rate_in(domain, u, &p, epsilon_n, which))
    };
    let rate = rate_in(domain, u, &fit.params, epsilon_n, "point")?;
    let lower = at(scale_ci.lower, shape_ci.upper, "lower bound")?;
    let upper = at(scale_ci.upper, shape_ci.lower, "upper bound")?;

    let off_corners = match (at(scale_ci.lower, shape_ci.lower, "corner"), at(scale_ci.upper, shape_ci.upper, "corner")) {
        (Ok(a), Ok(b)) => Some((a, b)),
        _ => None,
    };
    if let Some((a, b)) = off_corners {
        if a.max(b) > upper || a.min(b) < lower {
            log::info!("rate band [{lower}, {upper}] excludes off-diagonal corner rates ({a}, {b})");
        }
    }
    Ok(RateBand {
        alpha: shape_ci.alpha,
        rate,
        lower,
        upper,
        epsilon,
        epsilon_n,
        threshold_linear: domain.threshold_linear(u),
        off_corners,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpd;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fit(u: f64, shape: f64, scale: f64) -> TailFit {
        TailFit {
            threshold: u,
            params: GpdParams::new(shape, scale).unwrap(),
            n_exceedances: 100,
            tail_fraction: 0.1,
            log_likelihood: 0.0,
            standard_errors: None,
            converged: true,
        }
    }

    fn point_ci(v: f64) -> ConfidenceInterval {
        ConfidenceInterval { lower: v, upper: v, alpha: 0.05, iterations: 30, mean: v, std: 0.0 }
    }

    #[test]
    fn identity_collapse() {
        for &(xi, s) in &[(0.2, 2.0), (-0.3, 0.5), (0.0, 1.0), (1e-10, 3.0)] {
            let p = GpdParams::new(xi, s).unwrap();
            assert_relative_eq!(outage_epsilon_n(&p, &p, 1e-5).unwrap(), 1e-5, max_relative = 1e-13);
        }
    }

    #[test]
    fn epsilon_n_against_high_precision_value() {
        // mpmath, 50 digits: [1 - (0.18/2.2)(2/0.2)(1 - 1e-5^-0.2)]^(-1/0.18)
        let truth = GpdParams::new(0.2, 2.0).unwrap();
        let est = GpdParams::new(0.18, 2.2).unwrap();
        assert_relative_eq!(
            outage_epsilon_n(&truth, &est, 1e-5).unwrap(),
            7.509_007_591_673_970e-6,
            max_relative = 1e-12
        );
    }

    #[test]
    fn nonpositive_outage_base_is_reported() {
        let truth = GpdParams::new(0.5, 1.0).unwrap();
        let est = GpdParams::new(-0.9, 0.1).unwrap();
        let err = outage_epsilon_n(&truth, &est, 1e-5).unwrap_err();
        assert!(matches!(err, Error::Domain(ref m) if m.contains("shape -0.9")));
    }

    #[test]
    fn exponential_limit_rate() {
        let f = fit(1.0, 0.0, 0.05);
        let expected = 0.510_307_472_468_672_2;
        assert_relative_eq!(rate_select(&f, 1e-5).unwrap(), expected, max_relative = 1e-14);
    }

    #[test]
    fn decibel_domain_converts_the_outage_level() {
        let p = GpdParams::new(0.1, 2.0).unwrap();
        let y = gpd::inverse_survival(1e-5, &p).unwrap();
        let d = RateDomain::Decibel { reference_dbm: -74.0 };
        let r = rate_in(d, -20.0, &p, 1e-5, "point").unwrap();
        let snr = 10f64.powf((-20.0 - y + 74.0) / 10.0);
        assert!((r - (1.0 + snr).log2()).abs() < 1e-12 * r);
        assert_eq!(d.threshold_linear(-74.0), 1.0);
    }

    #[test]
    fn infeasible_rate() {
        let f = fit(0.1, 0.5, 1.0);
        assert!(matches!(rate_select(&f, 1e-5), Err(Error::RateInfeasible { which: "point", .. })));
    }

    #[test]
    fn policies() {
        let f = fit(10.0, 0.1, 1.0);
        assert_eq!(epsilon_n_policy(&f, 1e-5, EpsilonPolicy::Approximate).unwrap(), 1e-5);
        let e = epsilon_n_policy(&f, 1e-5, EpsilonPolicy::Oracle(f.params)).unwrap();
        assert_relative_eq!(e, 1e-5, max_relative = 1e-13);
    }

    #[test]
    fn zero_width_band_is_degenerate() {
        let f = fit(50.0, 0.1, 2.0);
        let b = rate_band(&f, &point_ci(2.0), &point_ci(0.1), 1e-5, 1e-5).unwrap();
        assert_eq!(b.lower, b.rate);
        assert_eq!(b.upper, b.rate);
    }

    #[test]
    fn band_bounds_are_corner_rates() {
        let f = fit(100.0, 0.1, 2.0);
        let s = ConfidenceInterval { lower: 1.8, upper: 2.2, ..point_ci(2.0) };
        let x = ConfidenceInterval { lower: 0.05, upper: 0.15, ..point_ci(0.1) };
        let b = rate_band(&f, &s, &x, 1e-5, 1e-5).unwrap();
        assert_eq!(b.lower, rate_select(&fit(100.0, 0.15, 1.8), 1e-5).unwrap());
        assert_eq!(b.upper, rate_select(&fit(100.0, 0.05, 2.2), 1e-5).unwrap());
        assert!(b.lower <= b.rate && b.rate <= b.upper);
        let (a, c) = b.off_corners.unwrap();
        assert!(c < b.lower && a > b.lower);
    }

    #[test]
    fn band_reports_which_bound_failed() {
        let f = fit(0.5, 0.1, 0.05);
        let s = ConfidenceInterval { lower: -0.01, upper: 0.1, ..point_ci(0.05) };
        let x = point_ci(0.1);
        assert!(matches!(rate_band(&f, &s, &x, 1e-5, 1e-5), Err(Error::Domain(ref m)) if m.starts_with("lower bound")));
        let s = ConfidenceInterval { lower: 0.04, upper: 0.06, ..point_ci(0.05) };
        let x = ConfidenceInterval { lower: 0.05, upper: 0.9, ..point_ci(0.1) };
        assert!(matches!(
            rate_band(&f, &s, &x, 1e-5, 1e-5),
            Err(Error::RateInfeasible { which: "lower bound", .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn quantile_identity(xi in -0.45f64..0.6, s in 0.01f64..5.0, u in 0.0f64..50.0, log_eps in -12.0f64..-1.0) {
            let eps_n = 10f64.powf(log_eps);
            let f = fit(u, xi, s);
            let y = gpd::quantile(1.0 - eps_n, &f.params).unwrap();
            prop_assume!(1.0 + u - y > 0.1);
            let r = rate_select(&f, eps_n).unwrap();
            // 1 - eps_n rounds by up to 1e-16 absolute, i.e. 1e-16/eps_n relative in the tail
            let tol = 1e-10_f64.max(4.0 * f64::EPSILON / eps_n) * (1.0 + y) / (1.0 + u - y);
            prop_assert!((r - (1.0 + u - y).log2()).abs() <= tol * r.abs().max(1.0));
        }

        #[test]
        fn rate_increases_with_epsilon_n(xi in 0.01f64..0.6, s in 0.01f64..2.0, a in -10.0f64..-1.5, d in 0.01f64..1.0) {
            let deep = gpd::inverse_survival(10f64.powf(a), &GpdParams::new(xi, s).unwrap()).unwrap();
            let u = 2.0 * deep;
            let f = fit(u, xi, s);
            let lo = rate_select(&f, 10f64.powf(a)).unwrap();
            let hi = rate_select(&f, 10f64.powf(a + d)).unwrap();
            prop_assert!(hi > lo);
            prop_assert!(lo < (1.0 + u).log2());
        }
    }
}
