//! Maximum-likelihood GPD fitting and probability-plot data.
//!
//! The likelihood is maximized by a Nelder–Mead simplex over `(ln σ, ξ)`,
//! so the scale stays positive without constraints. Four starting points
//! are screened to a coarse tolerance: the method-of-moments estimate and
//! `ξ ∈ {-0.2, 0, 0.2}` with a mean-matched scale. The best screened vertex
//! is then polished until the simplex diameter drops below
//! [`CONVERGENCE_TOL`].
//!
//! Exceedances are divided by a power of two close to their mean before
//! optimization. Power-of-two rescaling is exact in floating point, so data
//! scaled by `2^k` follows the identical optimizer path and yields a scale
//! estimate multiplied by exactly `2^k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpd::{self, GpdParams};
use crate::optimize::NelderMead;
use crate::preprocess::ExceedanceSet;

/// Fewest exceedances accepted by the estimator.
pub const MIN_EXCEEDANCES: usize = 30;
/// Simplex diameter, in `(ln σ, ξ)`, below which a fit counts as converged.
pub const CONVERGENCE_TOL: f64 = 1e-8;
/// Relative finite-difference step for the observed information.
pub const FD_STEP: f64 = 1e-5;

const SCREEN_TOL: f64 = 1e-3;
const START_SHAPES: [f64; 3] = [-0.2, 0.0, 0.2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardErrors {
    pub shape: f64,
    pub scale: f64,
}

/// A GPD fitted to the exceedances below a threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub threshold: f64,
    pub params: GpdParams,
    pub n_exceedances: usize,
    /// Exceedance count over the number of source samples.
    pub tail_fraction: f64,
    pub log_likelihood: f64,
    /// From the inverse observed information; absent when the numerical
    /// Hessian is not negative definite.
    pub standard_errors: Option<StandardErrors>,
    pub converged: bool,
}

/// Bare maximum-likelihood estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct MleEstimate {
    pub params: GpdParams,
    pub log_likelihood: f64,
    pub converged: bool,
    pub evaluations: usize,
}

/// Fits a GPD to an exceedance set.
pub fn fit_gpd_mle(set: &ExceedanceSet) -> Result<TailFit> {
    let est = mle(&set.values)?;
    if !est.converged {
        log::warn!(
            "GPD fit at threshold {} did not converge after {} evaluations",
            set.threshold,
            est.evaluations
        );
    }
    Ok(TailFit {
        threshold: set.threshold,
        params: est.params,
        n_exceedances: set.len(),
        tail_fraction: set.tail_fraction(),
        log_likelihood: est.log_likelihood,
        standard_errors: observed_standard_errors(&set.values, &est.params),
        converged: est.converged,
    })
}

fn check_values(values: &[f64]) -> Result<()> {
    if values.len() < MIN_EXCEEDANCES {
        return Err(Error::InsufficientData { needed: MIN_EXCEEDANCES, got: values.len() });
    }
    if let Some(y) = values.iter().find(|y| !(**y >= 0.0) || !y.is_finite()) {
        return Err(Error::InvalidParameter(format!("exceedance {y} is not a nonnegative number")));
    }
    Ok(())
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Method-of-moments start: `ξ = (1 - m²/v)/2`, `σ = m (1 + m²/v)/2`,
/// nudged into the support when needed.
pub fn moment_start(values: &[f64]) -> Result<GpdParams> {
    check_values(values)?;
    let (mean, var) = mean_var(values);
    if !(mean > 0.0) || !(var > 0.0) {
        return Err(Error::Domain("exceedances are degenerate (zero mean or variance)".into()));
    }
    let ratio = mean * mean / var;
    let shape = (0.5 * (1.0 - ratio)).max(-0.5);
    let scale = 0.5 * mean * (1.0 + ratio);
    feasible_start(values, shape, scale)
}

/// Widens `scale` until every value lies inside the support.
fn feasible_start(values: &[f64], shape: f64, scale: f64) -> Result<GpdParams> {
    let max = values.iter().copied().fold(0.0, f64::max);
    let scale = if shape < 0.0 && max * -shape >= scale { max * -shape * 1.01 } else { scale };
    GpdParams::new(shape, scale)
}

const EXP_MASK: u64 = 0x7ff << 52;
const UNIT_EXP: u64 = 1023 << 52;

/// `Σ ln(1 + a y)` over nonnegative `values` with largest element `max`,
/// from running products kept in `[1, 2)` with the binary exponents counted
/// separately, so one logarithm per lane replaces one per value. `None`
/// when a term leaves the support.
fn sum_ln_1p_scaled(values: &[f64], max: f64, a: f64) -> Option<f64> {
    const LANES: usize = 4;
    // every factor lies between 1 and this
    let extreme = 1.0 + a * max;
    if !(extreme > 0.0) {
        return None;
    }
    if !(extreme > 1e-100 && extreme < 1e100) {
        // the products could leave the normal range
        return Some(values.iter().map(|&y| (a * y).ln_1p()).sum());
    }
    let mut mant = [1.0f64; LANES];
    let mut exps = [0i64; LANES];
    let mut chunks = values.chunks_exact(LANES);
    for chunk in &mut chunks {
        for k in 0..LANES {
            let bits = (mant[k] * (1.0 + a * chunk[k])).to_bits();
            exps[k] += ((bits & EXP_MASK) >> 52) as i64;
            mant[k] = f64::from_bits((bits & !EXP_MASK) | UNIT_EXP);
        }
    }
    let bias = 1023 * (values.len() / LANES) as i64;
    let lanes: f64 = (0..LANES)
        .map(|k| mant[k].ln() + (exps[k] - bias) as f64 * std::f64::consts::LN_2)
        .sum();
    let rest: f64 = chunks.remainder().iter().map(|&y| (a * y).ln_1p()).sum();
    Some(lanes + rest)
}

/// Negative log-likelihood over `(ln σ, ξ)` for nonnegative `values` with
/// largest element `max`; shapes at or below -1 (where the likelihood is
/// unbounded) are infeasible.
fn objective(values: &[f64], max: f64, theta: &[f64]) -> f64 {
    let (log_sigma, xi) = (theta[0], theta[1]);
    if !(xi > -1.0) || !log_sigma.is_finite() {
        return f64::INFINITY;
    }
    let sigma = log_sigma.exp();
    if !(sigma > 0.0 && sigma < f64::INFINITY) {
        return f64::INFINITY;
    }
    let n = values.len() as f64;
    if xi.abs() < gpd::SHAPE_SWITCH_TOL {
        return n * log_sigma + values.iter().sum::<f64>() / sigma;
    }
    match sum_ln_1p_scaled(values, max, xi / sigma) {
        Some(s) => n * log_sigma + (1.0 + 1.0 / xi) * s,
        None => f64::INFINITY,
    }
}

/// Maximum-likelihood estimate of the GPD parameters of `values`.
pub fn mle(values: &[f64]) -> Result<MleEstimate> {
    check_values(values)?;
    let (mean, _) = mean_var(values);
    if !(mean > 0.0) {
        return Err(Error::Domain("exceedances are all zero".into()));
    }
    let unit = 2f64.powi(mean.log2().round() as i32);
    let z: Vec<f64> = values.iter().map(|y| y / unit).collect();
    let z_mean = mean / unit;
    let z_max = z.iter().copied().fold(0.0, f64::max);

    let mut starts = vec![moment_start(&z)?];
    for xi in START_SHAPES {
        starts.push(feasible_start(&z, xi, z_mean * (1.0 - xi))?);
    }

    let screen = NelderMead::new(SCREEN_TOL, vec![0.1, 0.1]).with_max_iterations(400);
    let mut evaluations = 0;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in &starts {
        let m = screen.minimize(|t| objective(&z, z_max, t), &[s.scale().ln(), s.shape()]);
        evaluations += m.evaluations;
        if best.as_ref().is_none_or(|(_, v)| m.value < *v) {
            best = Some((m.point, m.value));
        }
    }
    let (point, _) = best.expect("at least one start");

    let polish = NelderMead::new(CONVERGENCE_TOL, vec![0.01, 0.01]).with_max_iterations(5_000);
    let m = polish.minimize(|t| objective(&z, z_max, t), &point);
    evaluations += m.evaluations;
    if !m.value.is_finite() {
        return Err(Error::Domain("likelihood is infinite at every explored point".into()));
    }

    let params = GpdParams::new(m.point[1], m.point[0].exp() * unit)?;
    Ok(MleEstimate {
        params,
        log_likelihood: gpd::log_likelihood(values, &params)?,
        converged: m.converged,
        evaluations,
    })
}

/// Standard errors from the inverse observed information, with the Hessian
/// of the log-likelihood in `(σ, ξ)` taken by central differences.
pub fn observed_standard_errors(values: &[f64], params: &GpdParams) -> Option<StandardErrors> {
    let ll = |sigma: f64, xi: f64| -> f64 {
        GpdParams::new(xi, sigma)
            .ok()
            .and_then(|p| gpd::log_likelihood(values, &p).ok())
            .unwrap_or(f64::NEG_INFINITY)
    };
    let (s, x) = (params.scale(), params.shape());
    let hs = FD_STEP * s;
    let hx = FD_STEP * x.abs().max(1.0);
    let f0 = ll(s, x);
    let h_ss = (ll(s + hs, x) - 2.0 * f0 + ll(s - hs, x)) / (hs * hs);
    let h_xx = (ll(s, x + hx) - 2.0 * f0 + ll(s, x - hx)) / (hx * hx);
    let h_sx = (ll(s + hs, x + hx) - ll(s + hs, x - hx) - ll(s - hs, x + hx) + ll(s - hs, x - hx))
        / (4.0 * hs * hx);
    // observed information is the negated Hessian
    let (i_ss, i_xx, i_sx) = (-h_ss, -h_xx, -h_sx);
    let det = i_ss * i_xx - i_sx * i_sx;
    if !(det > 0.0) || !(i_ss > 0.0) || !det.is_finite() {
        return None;
    }
    Some(StandardErrors { scale: (i_xx / det).sqrt(), shape: (i_ss / det).sqrt() })
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// PP plot points `(i/(n+1), F(y_(i)))` for the sorted exceedances.
pub fn pp_points(values: &[f64], fit: &TailFit) -> Result<Vec<(f64, f64)>> {
    let n = values.len() as f64;
    sorted(values)
        .into_iter()
        .enumerate()
        .map(|(i, y)| Ok(((i + 1) as f64 / (n + 1.0), gpd::cdf(y, &fit.params)?)))
        .collect()
}

/// QQ plot points `(Q(i/(n+1)), y_(i))` for the sorted exceedances.
pub fn qq_points(values: &[f64], fit: &TailFit) -> Result<Vec<(f64, f64)>> {
    let n = values.len() as f64;
    sorted(values)
        .into_iter()
        .enumerate()
        .map(|(i, y)| Ok((gpd::quantile((i + 1) as f64 / (n + 1.0), &fit.params)?, y)))
        .collect()
}

/// Largest vertical distance of PP points from the diagonal.
pub fn pp_max_deviation(points: &[(f64, f64)]) -> f64 {
    points.iter().map(|(e, m)| (e - m).abs()).fold(0.0, f64::max)
}
