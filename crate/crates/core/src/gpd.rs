//! Generalized Pareto distribution for threshold exceedances.
//!
//! With shape ξ and scale σ the distribution function of an exceedance
//! `y >= 0` is
//!
//! ```text
//! F(y) = 1 - (1 + ξ y / σ)^(-1/ξ)      ξ != 0
//! F(y) = 1 - exp(-y / σ)               ξ  = 0
//! ```
//!
//! For ξ < 0 the support ends at `-σ/ξ`. Whenever `|ξ|` is below
//! [`SHAPE_SWITCH_TOL`] the exponential-limit formulas are used; all other
//! evaluations go through `ln_1p`/`exp_m1` so the tail probabilities stay
//! accurate near `y = 0` and for `p` close to one.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this `|ξ|` the exponential limit is used.
pub const SHAPE_SWITCH_TOL: f64 = 1e-8;

/// Shape and scale of a generalized Pareto distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct GpdParams {
    shape: f64,
    scale: f64,
}

#[derive(Deserialize)]
struct RawParams {
    shape: f64,
    scale: f64,
}

impl TryFrom<RawParams> for GpdParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        GpdParams::new(raw.shape, raw.scale)
    }
}

impl GpdParams {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !shape.is_finite() {
            return Err(Error::InvalidParameter(format!("shape must be finite, got {shape}")));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "scale must be positive and finite, got {scale}"
            )));
        }
        Ok(Self { shape, scale })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// True when the exponential-limit formulas apply.
    pub fn is_exponential(&self) -> bool {
        self.shape.abs() < SHAPE_SWITCH_TOL
    }

    /// Right end of the support, `-σ/ξ` for ξ < 0 and infinity otherwise.
    pub fn upper_endpoint(&self) -> f64 {
        if self.shape < 0.0 && !self.is_exponential() {
            -self.scale / self.shape
        } else {
            f64::INFINITY
        }
    }

    /// Analytic mean `σ/(1-ξ)`; infinite for ξ >= 1.
    pub fn mean(&self) -> f64 {
        if self.shape >= 1.0 {
            f64::INFINITY
        } else {
            self.scale / (1.0 - self.shape)
        }
    }
}

/// Distribution function `F(y)`.
pub fn cdf(y: f64, params: &GpdParams) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::Domain(format!("exceedance must be nonnegative, got {y}")));
    }
    if y > params.upper_endpoint() {
        return Err(Error::Domain(format!(
            "exceedance {y} beyond support endpoint {}",
            params.upper_endpoint()
        )));
    }
    Ok(-log_survival(y, params).exp_m1())
}

/// `ln(1 - F(y))` for `y` inside the support.
fn log_survival(y: f64, params: &GpdParams) -> f64 {
    let z = y / params.scale;
    if params.is_exponential() {
        -z
    } else {
        let t = (params.shape * z).max(-1.0);
        -t.ln_1p() / params.shape
    }
}

/// Quantile function: the `y` with `F(y) = p`.
pub fn quantile(p: f64, params: &GpdParams) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Domain(format!("probability must lie in [0, 1), got {p}")));
    }
    let log_tail = (-p).ln_1p();
    Ok(if params.is_exponential() {
        -params.scale * log_tail
    } else {
        params.scale * (-params.shape * log_tail).exp_m1() / params.shape
    })
}

/// The `y` with `1 - F(y) = q`, exact in the deep tail where `1 - q`
/// would round to one.
pub fn inverse_survival(q: f64, params: &GpdParams) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Domain(format!("tail probability must lie in (0, 1], got {q}")));
    }
    let log_tail = q.ln();
    Ok(if params.is_exponential() {
        -params.scale * log_tail
    } else {
        params.scale * (-params.shape * log_tail).exp_m1() / params.shape
    })
}

/// Log-likelihood of `exceedances` under `params`.
///
/// Points outside the support (negative, non-finite, or beyond `-σ/ξ`)
/// make the result `f64::NEG_INFINITY` instead of an error, so optimizers
/// can treat infeasible iterates as arbitrarily bad.
pub fn log_likelihood(exceedances: &[f64], params: &GpdParams) -> Result<f64> {
    if exceedances.is_empty() {
        return Err(Error::EmptyInput("exceedances"));
    }
    let n = exceedances.len() as f64;
    let sigma = params.scale;
    if params.is_exponential() {
        let mut sum = 0.0;
        for &y in exceedances {
            if !(y >= 0.0) || !y.is_finite() {
                return Ok(f64::NEG_INFINITY);
            }
            sum += y / sigma;
        }
        return Ok(-n * sigma.ln() - sum);
    }
    let xi = params.shape;
    let mut sum = 0.0;
    for &y in exceedances {
        if !(y >= 0.0) || !y.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        let t = xi * (y / sigma);
        if t <= -1.0 {
            return Ok(f64::NEG_INFINITY);
        }
        sum += t.ln_1p();
    }
    Ok(-n * sigma.ln() - (1.0 + 1.0 / xi) * sum)
}

/// Draws `n` exceedances by inverse-transform sampling with a seeded stream.
pub fn sample(params: &GpdParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be at least 1".into()));
    }
    let mut rng = crate::seeded_rng(seed);
    Ok((0..n).map(|_| draw(params, &mut rng)).collect())
}

/// One inverse-transform draw from `rng`.
pub fn draw<R: Rng + ?Sized>(params: &GpdParams, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    // u is in [0, 1), so the quantile cannot fail
    quantile(u, params).expect("uniform draw lies in [0, 1)")
}
