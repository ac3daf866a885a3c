//! Threshold diagnostics for the lower tail.
//!
//! For a candidate threshold `v` the mean residual life is the mean of
//! `v - x` over the samples below `v`; where a GPD holds it is linear in
//! `v`. The stability diagnostic refits the GPD at every candidate and
//! reports the shape and the modified scale `σ*(v) = σ̂(v) + ξ̂(v) v`, both
//! constant in `v` where a GPD holds. (Exceedances below `v` of a GPD tail
//! starting at `u₀` have scale `σ + ξ (u₀ - v)`, hence the `+` sign.)

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{fit_gpd_mle, MIN_EXCEEDANCES};
use crate::preprocess::extract_exceedances;

pub const DEFAULT_GRID_SIZE: usize = 50;
pub const DEFAULT_GRID_LOW: f64 = 0.01;
pub const DEFAULT_GRID_HIGH: f64 = 0.25;
/// Stability rows examined together when looking for a plateau.
pub const DEFAULT_PLATEAU_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrlRow {
    pub threshold: f64,
    pub mean_excess: f64,
    pub std_error: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub threshold: f64,
    pub shape: f64,
    pub shape_se: f64,
    pub scale: f64,
    pub mod_scale: f64,
    pub count: usize,
    /// The fit failed or produced no standard error; estimates are NaN.
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDiagnostics {
    /// Increasing, so the most extreme candidate comes first.
    pub candidates: Vec<f64>,
    pub mrl: Vec<MrlRow>,
    pub stability: Vec<StabilityRow>,
    pub selected: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    /// No plateau was found and the minimum-variance window was used.
    pub fallback: bool,
}

/// Empirical quantile with linear interpolation between order statistics.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `size` thresholds at evenly spaced quantile levels in `[low, high]`,
/// with duplicates removed.
pub fn candidate_grid(samples: &[f64], size: usize, low: f64, high: f64) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("samples"));
    }
    if size == 0 || !(0.0..=1.0).contains(&low) || !(low..=1.0).contains(&high) {
        return Err(Error::InvalidParameter(format!("bad candidate grid: {size} levels in [{low}, {high}]")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let step = if size > 1 { (high - low) / (size - 1) as f64 } else { 0.0 };
    let mut grid: Vec<f64> = (0..size).map(|i| quantile_sorted(&sorted, low + step * i as f64)).collect();
    grid.dedup();
    Ok(grid)
}

/// Candidate grid with the default 50 levels between the 1% and 25% quantiles.
pub fn default_candidates(samples: &[f64]) -> Result<Vec<f64>> {
    candidate_grid(samples, DEFAULT_GRID_SIZE, DEFAULT_GRID_LOW, DEFAULT_GRID_HIGH)
}

/// Mean excess below every candidate retaining enough exceedances.
pub fn mean_residual_life(samples: &[f64], candidates: &[f64]) -> Result<Vec<MrlRow>> {
    let rows: Vec<MrlRow> = candidates
        .iter()
        .filter_map(|&v| {
            let y: Vec<f64> = samples.iter().filter(|&&x| x < v).map(|&x| v - x).collect();
            let k = y.len();
            if k < MIN_EXCEEDANCES {
                return None;
            }
            let mean = y.iter().sum::<f64>() / k as f64;
            let var = y.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
            Some(MrlRow { threshold: v, mean_excess: mean, std_error: (var / k as f64).sqrt(), count: k })
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::InsufficientDiagnostics { needed: 1, got: 0 });
    }
    Ok(rows)
}

/// GPD refits at every candidate retaining enough exceedances. Candidates
/// are fitted concurrently; rows come back in candidate order.
pub fn parameter_stability(samples: &[f64], candidates: &[f64]) -> Vec<StabilityRow> {
    candidates
        .par_iter()
        .filter_map(|&v| {
            let set = extract_exceedances(samples, v);
            if set.len() < MIN_EXCEEDANCES {
                return None;
            }
            let count = set.len();
            let row = match fit_gpd_mle(&set) {
                Ok(fit) if fit.converged && fit.standard_errors.is_some() => {
                    let (shape, scale) = (fit.params.shape(), fit.params.scale());
                    StabilityRow {
                        threshold: v,
                        shape,
                        shape_se: fit.standard_errors.map_or(f64::NAN, |se| se.shape),
                        scale,
                        mod_scale: scale + shape * v,
                        count,
                        failed: false,
                    }
                }
                other => {
                    if let Err(e) = other {
                        log::warn!("stability fit at {v} failed: {e}");
                    }
                    StabilityRow {
                        threshold: v,
                        shape: f64::NAN,
                        shape_se: f64::NAN,
                        scale: f64::NAN,
                        mod_scale: f64::NAN,
                        count,
                        failed: true,
                    }
                }
            };
            Some(row)
        })
        .collect()
}

/// Both diagnostics over `candidates`.
pub fn diagnose(samples: &[f64], candidates: &[f64]) -> Result<ThresholdDiagnostics> {
    if candidates.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter("candidates must be strictly increasing".into()));
    }
    Ok(ThresholdDiagnostics {
        candidates: candidates.to_vec(),
        mrl: mean_residual_life(samples, candidates)?,
        stability: parameter_stability(samples, candidates),
        selected: None,
    })
}

/// Picks the least extreme (highest) candidate `v` whose shape estimates,
/// over `v` and the `window - 1` next more extreme candidates, span less
/// than their pooled (root-mean-square) standard error. Without such a
/// plateau, the start of the run of `window` rows with the smallest shape
/// variance is returned and flagged as a fallback.
pub fn select_threshold(diagnostics: &ThresholdDiagnostics, window: usize) -> Result<ThresholdChoice> {
    if window == 0 {
        return Err(Error::InvalidParameter("plateau window must be at least 1".into()));
    }
    let mut rows: Vec<&StabilityRow> = diagnostics.stability.iter().filter(|r| !r.failed).collect();
    if rows.len() < window {
        return Err(Error::InsufficientDiagnostics { needed: window, got: rows.len() });
    }
    rows.sort_by(|a, b| b.threshold.total_cmp(&a.threshold));

    for run in rows.windows(window) {
        let (lo, hi) = run
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.shape), hi.max(r.shape)));
        let pooled = (run.iter().map(|r| r.shape_se * r.shape_se).sum::<f64>() / window as f64).sqrt();
        if hi - lo < pooled {
            return Ok(ThresholdChoice { threshold: run[0].threshold, fallback: false });
        }
    }

    let variance = |run: &[&StabilityRow]| {
        let m = run.iter().map(|r| r.shape).sum::<f64>() / run.len() as f64;
        run.iter().map(|r| (r.shape - m).powi(2)).sum::<f64>()
    };
    let best = rows
        .windows(window)
        .min_by(|a, b| variance(a).total_cmp(&variance(b)))
        .expect("at least one window");
    Ok(ThresholdChoice { threshold: best[0].threshold, fallback: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpd::{sample, GpdParams};

    fn row(threshold: f64, shape: f64, se: f64) -> StabilityRow {
        StabilityRow { threshold, shape, shape_se: se, scale: 1.0, mod_scale: 1.0, count: 100, failed: false }
    }

    fn diag(stability: Vec<StabilityRow>) -> ThresholdDiagnostics {
        let candidates = stability.iter().map(|r| r.threshold).collect();
        ThresholdDiagnostics { candidates, mrl: vec![], stability, selected: None }
    }

    #[test]
    fn grid_is_increasing_and_within_levels() {
        let x: Vec<f64> = (0..1000).map(f64::from).collect();
        let g = default_candidates(&x).unwrap();
        assert_eq!(g.len(), 50);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!((g[0] - 9.99).abs() < 1e-9 && (g[49] - 249.75).abs() < 1e-9);
        assert_eq!(candidate_grid(&[1.0; 10], 5, 0.1, 0.2).unwrap(), vec![1.0]);
    }

    #[test]
    fn mrl_rows_below_minimum_are_omitted() {
        let x: Vec<f64> = (0..100).map(f64::from).collect();
        let rows = mean_residual_life(&x, &[-5.0, 10.0, 50.0]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].threshold, 50.0);
        assert_eq!(rows[0].count, 50);
        assert!((rows[0].mean_excess - 25.5).abs() < 1e-12);
        assert!(matches!(mean_residual_life(&x, &[-1.0]), Err(Error::InsufficientDiagnostics { .. })));
    }

    #[test]
    fn exponential_mean_excess_is_flat() {
        let p = GpdParams::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = sample(&p, 100_000, 5).unwrap().into_iter().map(|y| -y).collect();
        let rows = mean_residual_life(&x, &[-3.0, -2.0, -1.0, -0.5, 0.0]).unwrap();
        for r in rows {
            assert!((r.mean_excess - 1.0).abs() < 3.0 * r.std_error, "{r:?}");
        }
    }

    #[test]
    fn single_candidate_gives_single_row() {
        let p = GpdParams::new(0.2, 1.0).unwrap();
        let x: Vec<f64> = sample(&p, 1_000, 6).unwrap().into_iter().map(|y| -y).collect();
        let rows = parameter_stability(&x, &[-0.1]);
        assert_eq!(rows.len(), 1);
        assert!(!rows[0].failed);
        assert_eq!(rows[0].mod_scale, rows[0].scale + rows[0].shape * -0.1);
    }

    #[test]
    fn plateau_picks_least_extreme_stable_candidate() {
        let d = diag(vec![
            row(-4.0, 0.10, 0.05),
            row(-3.0, 0.11, 0.05),
            row(-2.0, 0.12, 0.05),
            row(-1.0, 0.30, 0.05),
            row(0.0, 0.60, 0.05),
        ]);
        let c = select_threshold(&d, 3).unwrap();
        assert_eq!(c, ThresholdChoice { threshold: -2.0, fallback: false });
    }

    #[test]
    fn fallback_uses_minimum_variance_window() {
        let d = diag(vec![
            row(-3.0, 0.0, 0.01),
            row(-2.0, 0.5, 0.01),
            row(-1.0, 0.52, 0.01),
            row(0.0, 1.5, 0.01),
        ]);
        let c = select_threshold(&d, 2).unwrap();
        assert_eq!(c, ThresholdChoice { threshold: -1.0, fallback: true });
    }

    #[test]
    fn failed_rows_are_skipped_and_counted() {
        let mut bad = row(0.0, 0.1, 0.1);
        bad.failed = true;
        let d = diag(vec![row(-1.0, 0.1, 0.1), bad]);
        assert!(matches!(select_threshold(&d, 2), Err(Error::InsufficientDiagnostics { needed: 2, got: 1 })));
        assert_eq!(select_threshold(&d, 1).unwrap().threshold, -1.0);
    }

    #[test]
    fn unsorted_candidates_are_rejected() {
        assert!(diagnose(&[1.0; 100], &[2.0, 1.0]).is_err());
    }
}
