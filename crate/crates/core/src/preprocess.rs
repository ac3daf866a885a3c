//! Received-power traces and their lower-tail exceedances.
//!
//! Everything here is oriented towards deep fades: a sample `x` exceeds the
//! threshold `u` when `x < u`, and its exceedance is `y = u - x >= 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default declustering run length, 20 ms at a 2 ms sample period.
pub const DEFAULT_RUN_LENGTH: usize = 10;
/// Default grouping window, in samples.
pub const DEFAULT_WINDOW: usize = 1000;
/// Default grouping level in dBm.
pub const DEFAULT_LEVEL_DBM: f64 = -12.0;
/// Default sample period in milliseconds.
pub const DEFAULT_SAMPLE_PERIOD_MS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerUnit {
    Dbm,
    LinearMw,
}

/// Time-ordered received-power samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTrace {
    samples: Vec<f64>,
    unit: PowerUnit,
    sample_period_ms: f64,
}

impl ChannelTrace {
    pub fn new(samples: Vec<f64>, unit: PowerUnit, sample_period_ms: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("trace"));
        }
        if let Some((i, x)) = samples.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("sample {i} is not finite ({x})")));
        }
        if unit == PowerUnit::LinearMw {
            if let Some((i, x)) = samples.iter().enumerate().find(|(_, &x)| x <= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "linear sample {i} must be positive, got {x}"
                )));
            }
        }
        if !(sample_period_ms > 0.0) || !sample_period_ms.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sample period must be positive, got {sample_period_ms}"
            )));
        }
        Ok(Self { samples, unit, sample_period_ms })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn unit(&self) -> PowerUnit {
        self.unit
    }

    pub fn sample_period_ms(&self) -> f64 {
        self.sample_period_ms
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

pub fn dbm_to_mw(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

pub fn mw_to_dbm(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("cannot express nonpositive power {x} in dBm")));
    }
    Ok(10.0 * x.log10())
}

/// Re-expresses a trace in `target` units.
pub fn convert_units(trace: &ChannelTrace, target: PowerUnit) -> Result<ChannelTrace> {
    let samples = match (trace.unit, target) {
        (a, b) if a == b => trace.samples.clone(),
        (PowerUnit::Dbm, PowerUnit::LinearMw) => trace.samples.iter().map(|&x| dbm_to_mw(x)).collect(),
        (PowerUnit::LinearMw, PowerUnit::Dbm) => {
            trace.samples.iter().map(|&x| mw_to_dbm(x)).collect::<Result<_>>()?
        }
        _ => unreachable!(),
    };
    ChannelTrace::new(samples, target, trace.sample_period_ms)
}

/// Stationary group of a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum GroupLabel {
    /// Every sample of the window is at or above the level.
    One,
    /// At least one sample of the window is below the level.
    Two,
}

impl GroupLabel {
    pub fn number(self) -> u8 {
        match self {
            GroupLabel::One => 1,
            GroupLabel::Two => 2,
        }
    }
}

impl From<GroupLabel> for u8 {
    fn from(label: GroupLabel) -> u8 {
        label.number()
    }
}

impl TryFrom<u8> for GroupLabel {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(GroupLabel::One),
            2 => Ok(GroupLabel::Two),
            other => Err(Error::InvalidParameter(format!("unknown group label {other}"))),
        }
    }
}

impl std::fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// One consecutive window of the trace and its group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupWindow {
    pub label: GroupLabel,
    pub index: usize,
    pub start: usize,
    pub len: usize,
    /// Set on a trailing window shorter than the requested size.
    pub partial: bool,
}

/// Partitions `samples` into consecutive windows and labels each one.
///
/// A window whose minimum is at least `level` is group 1, otherwise group 2.
/// The trailing partial window is labelled by the same rule and flagged.
pub fn split_stationary_groups(samples: &[f64], window: usize, level: f64) -> Result<Vec<GroupWindow>> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("trace"));
    }
    if window == 0 {
        return Err(Error::InvalidParameter("window must be at least 1".into()));
    }
    Ok(samples
        .chunks(window)
        .enumerate()
        .map(|(index, chunk)| {
            let label = if chunk.iter().all(|&x| x >= level) { GroupLabel::One } else { GroupLabel::Two };
            GroupWindow { label, index, start: index * window, len: chunk.len(), partial: chunk.len() < window }
        })
        .collect())
}

/// Concatenates the samples of every window carrying `label`, in time order.
pub fn group_samples(samples: &[f64], windows: &[GroupWindow], label: GroupLabel) -> Vec<f64> {
    windows
        .iter()
        .filter(|w| w.label == label)
        .flat_map(|w| samples[w.start..w.start + w.len].iter().copied())
        .collect()
}

/// Lower-tail exceedances `y = u - x` of the samples below `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceSet {
    pub threshold: f64,
    pub values: Vec<f64>,
    /// Position in the source sequence of each value.
    pub indices: Vec<usize>,
    pub source_count: usize,
    pub declustered: bool,
}

impl ExceedanceSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tail_fraction(&self) -> f64 {
        if self.source_count == 0 {
            0.0
        } else {
            self.values.len() as f64 / self.source_count as f64
        }
    }

    /// Builds a set from bare values, e.g. exceedances read back from a file.
    pub fn from_values(threshold: f64, values: Vec<f64>, source_count: usize, declustered: bool) -> Result<Self> {
        if let Some(y) = values.iter().find(|y| !(**y >= 0.0) || !y.is_finite()) {
            return Err(Error::InvalidParameter(format!("exceedance {y} is not a nonnegative number")));
        }
        if values.len() > source_count {
            return Err(Error::InvalidParameter(format!(
                "{} exceedances exceed the source count {source_count}",
                values.len()
            )));
        }
        let indices = (0..values.len()).collect();
        Ok(Self { threshold, values, indices, source_count, declustered })
    }
}

fn warn_if_outside(samples: &[f64], threshold: f64) {
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if threshold <= lo || threshold > hi {
        log::warn!("threshold {threshold} outside observed range [{lo}, {hi}]");
    }
}

/// All exceedances below `threshold`, in original order.
pub fn extract_exceedances(samples: &[f64], threshold: f64) -> ExceedanceSet {
    warn_if_outside(samples, threshold);
    let (indices, values) = samples
        .iter()
        .enumerate()
        .filter(|(_, &x)| x < threshold)
        .map(|(i, &x)| (i, threshold - x))
        .unzip();
    ExceedanceSet { threshold, values, indices, source_count: samples.len(), declustered: false }
}

/// Runs declustering of the lower tail.
///
/// Below-threshold samples separated by fewer than `run_length`
/// at-or-above-threshold samples belong to the same cluster, and each
/// cluster contributes its deepest exceedance. `run_length = 0` keeps every
/// exceedance.
pub fn decluster(samples: &[f64], threshold: f64, run_length: usize) -> ExceedanceSet {
    warn_if_outside(samples, threshold);
    let mut values = Vec::new();
    let mut indices = Vec::new();
    // (index, exceedance) of the current cluster's peak
    let mut peak: Option<(usize, f64)> = None;
    let mut gap = 0usize;
    for (i, &x) in samples.iter().enumerate() {
        if x < threshold {
            let y = threshold - x;
            peak = match peak {
                Some((pi, py)) if gap < run_length => Some(if y > py { (i, y) } else { (pi, py) }),
                Some((pi, py)) => {
                    indices.push(pi);
                    values.push(py);
                    Some((i, y))
                }
                None => Some((i, y)),
            };
            gap = 0;
        } else {
            gap += 1;
        }
    }
    if let Some((pi, py)) = peak {
        indices.push(pi);
        values.push(py);
    }
    ExceedanceSet { threshold, values, indices, source_count: samples.len(), declustered: true }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn trace_validation() {
        assert!(ChannelTrace::new(vec![], PowerUnit::Dbm, 2.0).is_err());
        assert!(ChannelTrace::new(vec![1.0, f64::NAN], PowerUnit::Dbm, 2.0).is_err());
        assert!(ChannelTrace::new(vec![1.0, 0.0], PowerUnit::LinearMw, 2.0).is_err());
        assert!(ChannelTrace::new(vec![-3.0], PowerUnit::Dbm, 0.0).is_err());
        assert!(ChannelTrace::new(vec![-3.0], PowerUnit::Dbm, 2.0).is_ok());
    }

    #[test]
    fn unit_definitions() {
        let t = ChannelTrace::new(vec![0.0, -20.0, 10.0], PowerUnit::Dbm, 2.0).unwrap();
        let lin = convert_units(&t, PowerUnit::LinearMw).unwrap();
        assert_relative_eq!(lin.samples()[0], 1.0);
        assert_relative_eq!(lin.samples()[1], 0.01, max_relative = 1e-15);
        assert_relative_eq!(lin.samples()[2], 10.0, max_relative = 1e-15);
        assert!(mw_to_dbm(0.0).is_err());
        assert!(mw_to_dbm(-1.0).is_err());
    }

    #[test]
    fn unit_round_trip() {
        use rand::Rng;
        let mut rng = crate::seeded_rng(5);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.random_range(-90.0..30.0)).collect();
        let t = ChannelTrace::new(xs.clone(), PowerUnit::Dbm, 2.0).unwrap();
        let back = convert_units(&convert_units(&t, PowerUnit::LinearMw).unwrap(), PowerUnit::Dbm).unwrap();
        let worst = xs
            .iter()
            .zip(back.samples())
            .map(|(a, b)| ((a - b) / a).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-12, "max relative error {worst}");
    }

    #[test]
    fn grouping_rule() {
        let flat = vec![-10.0; 3000];
        let w = split_stationary_groups(&flat, 1000, -12.0).unwrap();
        assert_eq!(w.len(), 3);
        assert!(w.iter().all(|w| w.label == GroupLabel::One && !w.partial));

        let mut dip = flat.clone();
        dip[1500] = -15.0;
        let w = split_stationary_groups(&dip, 1000, -12.0).unwrap();
        let labels: Vec<_> = w.iter().map(|w| w.label).collect();
        assert_eq!(labels, [GroupLabel::One, GroupLabel::Two, GroupLabel::One]);
    }

    #[test]
    fn grouping_keeps_trailing_partial_window() {
        let mut xs = vec![-10.0; 2500];
        xs[2400] = -13.0;
        let w = split_stationary_groups(&xs, 1000, -12.0).unwrap();
        assert_eq!(w.len(), 3);
        assert!(w[2].partial);
        assert_eq!(w[2].len, 500);
        assert_eq!(w[2].label, GroupLabel::Two);
        assert_eq!(group_samples(&xs, &w, GroupLabel::One).len(), 2000);
        assert!(split_stationary_groups(&[], 10, 0.0).is_err());
        assert!(split_stationary_groups(&xs, 0, 0.0).is_err());
    }

    #[test]
    fn exceedances_by_definition() {
        let e = extract_exceedances(&[-3.0, -6.0, -4.0, -9.0], -5.0);
        assert_eq!(e.values, vec![1.0, 4.0]);
        assert_eq!(e.indices, vec![1, 3]);
        assert!(!e.declustered);
        assert_relative_eq!(e.tail_fraction(), 0.5);
        assert!(extract_exceedances(&[-3.0, -4.0], -10.0).is_empty());
    }

    #[test]
    fn decluster_hand_traced() {
        let e = decluster(&[-3.0, -7.0, -6.0, -3.0], -5.0, 2);
        assert_eq!(e.values, vec![2.0]);
        assert_eq!(e.indices, vec![1]);
        assert!(e.declustered);

        // gap of exactly run_length separates clusters
        let e = decluster(&[-7.0, -3.0, -3.0, -8.0, -3.0, -6.0], -5.0, 2);
        assert_eq!(e.values, vec![2.0, 3.0]);
    }

    #[test]
    fn decluster_zero_run_length_is_plain_extraction() {
        let xs = [-3.0, -7.0, -6.0, -3.0, -9.0, -9.5];
        let d = decluster(&xs, -5.0, 0);
        let e = extract_exceedances(&xs, -5.0);
        assert_eq!(d.values, e.values);
        assert_eq!(d.indices, e.indices);
    }

    proptest! {
        #[test]
        fn exceedance_count_partitions_trace(xs in prop::collection::vec(-30.0f64..0.0, 1..300), u in -30.0f64..0.0) {
            let e = extract_exceedances(&xs, u);
            let above = xs.iter().filter(|&&x| x >= u).count();
            prop_assert_eq!(e.len() + above, xs.len());
            prop_assert!(e.values.iter().all(|&y| y >= 0.0));
        }

        #[test]
        fn decluster_is_subset_of_raw(xs in prop::collection::vec(-30.0f64..0.0, 1..300), u in -30.0f64..0.0, r in 0usize..20) {
            let raw = extract_exceedances(&xs, u);
            let d = decluster(&xs, u, r);
            prop_assert!(d.len() <= raw.len());
            for (i, y) in d.indices.iter().zip(&d.values) {
                let pos = raw.indices.iter().position(|j| j == i).expect("index present in raw");
                prop_assert_eq!(raw.values[pos], *y);
            }
        }

        #[test]
        fn windows_partition_trace(n in 1usize..5000, window in 1usize..1500) {
            let xs: Vec<f64> = (0..n).map(|i| -((i % 17) as f64)).collect();
            let w = split_stationary_groups(&xs, window, -12.0).unwrap();
            let mut next = 0;
            for win in &w {
                prop_assert_eq!(win.start, next);
                next += win.len;
            }
            prop_assert_eq!(next, n);
            prop_assert_eq!(w.iter().filter(|w| w.partial).count(), usize::from(n % window != 0));
        }
    }
}
