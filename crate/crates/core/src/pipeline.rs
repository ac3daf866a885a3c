//! End-to-end processing of a received-power trace.
//!
//! Per stationary group: grouping → threshold (diagnostics or override, in
//! dBm) → conversion to fit units → declustering → MLE fit → shared
//! resample fits → parameter intervals and rate bands at every α. The
//! windows of a group are concatenated before fitting.
//!
//! The training-size sweep truncates the trace to its first `n` samples and
//! repeats grouping through rate bands with the threshold held at the value
//! chosen on the full trace, so the sweep isolates the effect of `n`.
//!
//! Stage failures are collected with the stage name instead of aborting the
//! run.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confidence::{
    intervals_from_resamples, resample_estimates, CiConfig, ParamCi, ResampleMode, SpreadDivisor, DEFAULT_ITERATIONS,
};
use crate::error::{Error, Result};
use crate::estimate::{fit_gpd_mle, pp_points, qq_points, TailFit};
use crate::preprocess::{
    convert_units, decluster, group_samples, split_stationary_groups, ChannelTrace, ExceedanceSet, GroupLabel,
    GroupWindow, PowerUnit, DEFAULT_LEVEL_DBM, DEFAULT_RUN_LENGTH, DEFAULT_WINDOW,
};
use crate::rate::{epsilon_n_policy, rate_band_in, EpsilonPolicy, RateBand, RateDomain, DEFAULT_EPSILON};
use crate::report::SCHEMA_VERSION;
use crate::threshold::{default_candidates, diagnose, select_threshold, ThresholdDiagnostics, DEFAULT_PLATEAU_WINDOW};

/// Units the tail is fitted in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitUnits {
    /// Linear power relative to the reference level (mW at 0 dBm), as the
    /// rate formula requires.
    #[default]
    Linear,
    /// dBm values used as-is; rates are then only formal.
    Raw,
    /// Tail fitted in dB; the outage level is converted to linear units
    /// against the reference level inside the rate.
    Db,
}

/// Whether the target ε applies to the fitted tail or to all samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonReading {
    /// ε is used directly as the exceedance probability of the fitted tail.
    #[default]
    Conditional,
    /// ε is a per-sample probability; the tail is evaluated at
    /// `ε / tail_fraction`.
    Unconditional,
}

impl std::str::FromStr for EpsilonReading {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conditional" => Ok(EpsilonReading::Conditional),
            "unconditional" => Ok(EpsilonReading::Unconditional),
            other => Err(Error::Usage(format!(
                "unknown epsilon reading {other:?}, expected conditional or unconditional"
            ))),
        }
    }
}

impl std::str::FromStr for FitUnits {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(FitUnits::Linear),
            "raw" => Ok(FitUnits::Raw),
            "db" => Ok(FitUnits::Db),
            other => Err(Error::Usage(format!("unknown units mode {other:?}, expected linear, raw or db"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub alphas: Vec<f64>,
    pub epsilon: f64,
    pub epsilon_policy: EpsilonPolicy,
    pub epsilon_reading: EpsilonReading,
    pub iterations: usize,
    pub resample_mode: ResampleMode,
    pub divisor: SpreadDivisor,
    pub window: usize,
    pub level_dbm: f64,
    pub run_length: usize,
    pub units: FitUnits,
    /// dBm level mapped to 1 in linear units (a noise floor turns power
    /// into SNR).
    pub reference_dbm: f64,
    pub threshold_overrides: BTreeMap<GroupLabel, f64>,
    pub plateau_window: usize,
    pub n_train: Vec<usize>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.01, 0.5],
            epsilon: DEFAULT_EPSILON,
            epsilon_policy: EpsilonPolicy::Approximate,
            epsilon_reading: EpsilonReading::Conditional,
            iterations: DEFAULT_ITERATIONS,
            resample_mode: ResampleMode::Bootstrap,
            divisor: SpreadDivisor::Population,
            window: DEFAULT_WINDOW,
            level_dbm: DEFAULT_LEVEL_DBM,
            run_length: DEFAULT_RUN_LENGTH,
            units: FitUnits::Linear,
            reference_dbm: 0.0,
            threshold_overrides: BTreeMap::new(),
            plateau_window: DEFAULT_PLATEAU_WINDOW,
            n_train: Vec::new(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| Err(Error::Usage(m));
        if self.alphas.is_empty() {
            return usage("at least one alpha is required".into());
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return usage(format!("alpha must lie in (0, 1), got {a}"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return usage(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if self.iterations < 2 {
            return usage(format!("M must be at least 2, got {}", self.iterations));
        }
        if self.window == 0 || self.plateau_window == 0 {
            return usage("window sizes must be at least 1".into());
        }
        if !self.level_dbm.is_finite() || !self.reference_dbm.is_finite() {
            return usage("level and reference must be finite".into());
        }
        if let Some(n) = self.n_train.iter().find(|n| **n == 0) {
            return usage(format!("training sizes must be positive, got {n}"));
        }
        if let Some((g, u)) = self.threshold_overrides.iter().find(|(_, u)| !u.is_finite()) {
            return usage(format!("threshold override for group {g} is not finite: {u}"));
        }
        Ok(())
    }

    /// dBm → fit units.
    pub fn to_fit_units(&self, dbm: f64) -> f64 {
        match self.units {
            FitUnits::Linear => 10f64.powf((dbm - self.reference_dbm) / 10.0),
            FitUnits::Raw | FitUnits::Db => dbm,
        }
    }

    pub fn rate_domain(&self) -> RateDomain {
        match self.units {
            FitUnits::Linear | FitUnits::Raw => RateDomain::Linear,
            FitUnits::Db => RateDomain::Decibel { reference_dbm: self.reference_dbm },
        }
    }

    /// Exceedance probability of the fitted tail that corresponds to ε.
    pub fn tail_epsilon(&self, fit: &TailFit) -> Result<f64> {
        match self.epsilon_reading {
            EpsilonReading::Conditional => Ok(self.epsilon),
            EpsilonReading::Unconditional => {
                let e = self.epsilon / fit.tail_fraction;
                if !(e > 0.0 && e < 1.0) {
                    return Err(Error::Domain(format!(
                        "epsilon {} is not below the tail fraction {}",
                        self.epsilon, fit.tail_fraction
                    )));
                }
                Ok(e)
            }
        }
    }
}

/// Run settings echoed in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub iterations: usize,
    pub alphas: Vec<f64>,
    pub epsilon: f64,
    pub epsilon_policy: String,
    pub resample_mode: ResampleMode,
    pub spread_divisor: SpreadDivisor,
    pub window: usize,
    pub level_dbm: f64,
    pub run_length: usize,
    pub units: FitUnits,
    pub reference_dbm: f64,
    pub plateau_window: usize,
    pub n_train: Vec<usize>,
    pub sample_count: usize,
    pub sample_period_ms: f64,
    /// How the windows of a group are combined before fitting.
    pub grouping: String,
    /// How ε relates to the fitted tail; the tail fraction of each fit
    /// converts between the two readings.
    pub epsilon_reading: EpsilonReading,
}

/// Where a group's threshold came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    Override,
    Plateau,
    Fallback,
}

/// Fit, intervals and bands at one α for one training size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub n: usize,
    pub group_samples: usize,
    pub n_exceedances: usize,
    pub fit: Option<TailFit>,
    pub intervals: Vec<ParamCi>,
    pub bands: Vec<RateBand>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group: GroupLabel,
    pub windows: usize,
    pub partial_window: bool,
    pub samples: usize,
    pub threshold_dbm: f64,
    pub threshold_source: ThresholdSource,
    /// Threshold in fit units.
    pub threshold: f64,
    pub n_exceedances: usize,
    pub fit: Option<TailFit>,
    /// Seed of the resample stream behind `intervals`.
    pub ci_seed: u64,
    pub intervals: Vec<ParamCi>,
    pub bands: Vec<RateBand>,
    pub pp_max_deviation: Option<f64>,
    pub sweep: Vec<SweepCell>,
    /// Stage name → file written for it; filled in by the caller.
    pub diagnostics: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub group: Option<GroupLabel>,
    pub n: Option<usize>,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub schema_version: u32,
    pub toolkit_version: String,
    pub metadata: RunMetadata,
    pub groups: Vec<GroupReport>,
    pub failures: Vec<StageFailure>,
}

/// Bulky per-group data that goes to side files rather than the report.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupData {
    pub group: GroupLabel,
    pub diagnostics: Option<ThresholdDiagnostics>,
    /// In fit units; indices refer to positions in the full trace.
    pub exceedances: Option<ExceedanceSet>,
    pub pp: Vec<(f64, f64)>,
    pub qq: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub report: PipelineReport,
    pub data: Vec<GroupData>,
}

/// Mixes run parameters into an independent stream seed (splitmix64).
pub fn derive_seed(seed: u64, group: GroupLabel, n: usize) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15_u64.wrapping_mul(u64::from(group.number())))
        .wrapping_add((n as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Declustered exceedances of `samples` (dBm) below `threshold_dbm`, in fit
/// units, with indices mapped back through `positions`.
fn exceedances_in_fit_units(
    samples_dbm: &[f64],
    positions: &[usize],
    threshold_dbm: f64,
    config: &PipelineConfig,
) -> Result<ExceedanceSet> {
    let u = config.to_fit_units(threshold_dbm);
    let converted: Vec<f64> = samples_dbm.iter().map(|&x| config.to_fit_units(x)).collect();
    if let Some(x) = converted.iter().find(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("sample {x} is not finite in fit units")));
    }
    let mut set = decluster(&converted, u, config.run_length);
    set.indices = set.indices.iter().map(|&i| positions[i]).collect();
    Ok(set)
}

struct Stage<'a> {
    failures: &'a mut Vec<StageFailure>,
    group: GroupLabel,
    n: Option<usize>,
}

impl Stage<'_> {
    fn run<T>(&mut self, stage: &str, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.failures.push(StageFailure {
                    group: Some(self.group),
                    n: self.n,
                    stage: stage.to_owned(),
                    message: e.to_string(),
                });
                None
            }
        }
    }
}

struct Analysis {
    n_exceedances: usize,
    fit: Option<TailFit>,
    intervals: Vec<ParamCi>,
    bands: Vec<RateBand>,
    exceedances: Option<ExceedanceSet>,
}

/// Fit → intervals → bands for one set of group samples.
fn analyse(
    samples_dbm: &[f64],
    positions: &[usize],
    threshold_dbm: f64,
    ci_seed: u64,
    config: &PipelineConfig,
    stage: &mut Stage<'_>,
) -> Analysis {
    let mut out = Analysis { n_exceedances: 0, fit: None, intervals: vec![], bands: vec![], exceedances: None };
    let Some(set) = stage.run("decluster", exceedances_in_fit_units(samples_dbm, positions, threshold_dbm, config))
    else {
        return out;
    };
    out.n_exceedances = set.len();
    let fit = stage.run("fit", fit_gpd_mle(&set));
    out.exceedances = Some(set);
    let Some(fit) = fit else { return out };
    out.fit = Some(fit.clone());
    if !fit.converged {
        stage.run::<()>("fit", Err(Error::Domain("maximum-likelihood search did not converge".into())));
        return out;
    }
    let values = &out.exceedances.as_ref().expect("set stored above").values;
    let ci_config = CiConfig { iterations: config.iterations, mode: config.resample_mode, divisor: config.divisor, seed: ci_seed };
    let intervals = stage
        .run("confidence", resample_estimates(values, &ci_config))
        .and_then(|est| stage.run("confidence", intervals_from_resamples(&est, &config.alphas, config.divisor)));
    let Some(intervals) = intervals else { return out };
    out.intervals = intervals;
    let eps_n = stage
        .run("rate", config.tail_epsilon(&fit))
        .and_then(|e| stage.run("rate", epsilon_n_policy(&fit, e, config.epsilon_policy)));
    let Some(eps_n) = eps_n else { return out };
    let domain = config.rate_domain();
    out.bands = out
        .intervals
        .iter()
        .filter_map(|ci| stage.run("rate", rate_band_in(domain, &fit, &ci.scale, &ci.shape, config.epsilon, eps_n)))
        .collect();
    out
}

/// Sample positions of every window carrying `label`, in time order.
fn group_positions(windows: &[GroupWindow], label: GroupLabel) -> Vec<usize> {
    windows.iter().filter(|w| w.label == label).flat_map(|w| w.start..w.start + w.len).collect()
}

/// Runs the full pipeline on `trace`.
pub fn run_pipeline(trace: &ChannelTrace, config: &PipelineConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let dbm = match trace.unit() {
        PowerUnit::Dbm => trace.clone(),
        PowerUnit::LinearMw => convert_units(trace, PowerUnit::Dbm)?,
    };
    let samples = dbm.samples();
    let windows = split_stationary_groups(samples, config.window, config.level_dbm)?;
    let mut failures = Vec::new();
    let mut groups = Vec::new();
    let mut data = Vec::new();

    for label in [GroupLabel::One, GroupLabel::Two] {
        let group_windows: Vec<&GroupWindow> = windows.iter().filter(|w| w.label == label).collect();
        if group_windows.is_empty() {
            log::info!("no windows in group {label}");
            continue;
        }
        let positions = group_positions(&windows, label);
        let group_dbm = group_samples(samples, &windows, label);
        let mut stage = Stage { failures: &mut failures, group: label, n: None };

        let (threshold_dbm, source, diagnostics) = match config.threshold_overrides.get(&label) {
            Some(&u) => (u, ThresholdSource::Override, None),
            None => {
                let diag = stage.run("threshold", default_candidates(&group_dbm).and_then(|c| diagnose(&group_dbm, &c)));
                let choice = diag.as_ref().and_then(|d| stage.run("threshold", select_threshold(d, config.plateau_window)));
                match (diag, choice) {
                    (Some(mut d), Some(c)) => {
                        d.selected = Some(c.threshold);
                        let source = if c.fallback { ThresholdSource::Fallback } else { ThresholdSource::Plateau };
                        (c.threshold, source, Some(d))
                    }
                    (d, _) => {
                        data.push(GroupData { group: label, diagnostics: d, exceedances: None, pp: vec![], qq: vec![] });
                        continue;
                    }
                }
            }
        };

        let ci_seed = derive_seed(config.seed, label, samples.len());
        let main = analyse(&group_dbm, &positions, threshold_dbm, ci_seed, config, &mut stage);
        let (pp, qq) = match (&main.fit, &main.exceedances) {
            (Some(fit), Some(set)) => (
                stage.run("pp", pp_points(&set.values, fit)).unwrap_or_default(),
                stage.run("qq", qq_points(&set.values, fit)).unwrap_or_default(),
            ),
            _ => (vec![], vec![]),
        };

        groups.push(GroupReport {
            group: label,
            windows: group_windows.len(),
            partial_window: group_windows.iter().any(|w| w.partial),
            samples: group_dbm.len(),
            threshold_dbm,
            threshold_source: source,
            threshold: config.to_fit_units(threshold_dbm),
            n_exceedances: main.n_exceedances,
            fit: main.fit,
            ci_seed,
            intervals: main.intervals,
            bands: main.bands,
            pp_max_deviation: (!pp.is_empty()).then(|| crate::estimate::pp_max_deviation(&pp)),
            sweep: Vec::new(),
            diagnostics: BTreeMap::new(),
        });
        data.push(GroupData { group: label, diagnostics, exceedances: main.exceedances, pp, qq });
    }

    // sweep cells are independent; results are keyed by (group, n)
    let cells: Vec<(usize, usize)> = (0..groups.len())
        .flat_map(|g| config.n_train.iter().map(move |&n| (g, n)))
        .collect();
    let swept: Vec<(usize, Option<SweepCell>, Vec<StageFailure>)> = cells
        .par_iter()
        .map(|&(g, n)| {
            let group = &groups[g];
            let mut cell_failures = Vec::new();
            let mut stage = Stage { failures: &mut cell_failures, group: group.group, n: Some(n) };
            if n > samples.len() {
                stage.run::<()>(
                    "sweep",
                    Err(Error::InsufficientData { needed: n, got: samples.len() }),
                );
                return (g, None, cell_failures);
            }
            let prefix = &samples[..n];
            let Some(w) = stage.run("grouping", split_stationary_groups(prefix, config.window, config.level_dbm))
            else {
                return (g, None, cell_failures);
            };
            let positions = group_positions(&w, group.group);
            let group_dbm = group_samples(prefix, &w, group.group);
            let a = analyse(
                &group_dbm,
                &positions,
                group.threshold_dbm,
                derive_seed(config.seed, group.group, n),
                config,
                &mut stage,
            );
            let cell = SweepCell {
                n,
                group_samples: group_dbm.len(),
                n_exceedances: a.n_exceedances,
                fit: a.fit,
                intervals: a.intervals,
                bands: a.bands,
            };
            (g, Some(cell), cell_failures)
        })
        .collect();
    for (g, cell, cell_failures) in swept {
        groups[g].sweep.extend(cell);
        failures.extend(cell_failures);
    }

    let policy = match config.epsilon_policy {
        EpsilonPolicy::Approximate => "approximate".to_owned(),
        EpsilonPolicy::Oracle(p) => format!("oracle(shape={}, scale={})", p.shape(), p.scale()),
    };
    let metadata = RunMetadata {
        seed: config.seed,
        iterations: config.iterations,
        alphas: config.alphas.clone(),
        epsilon: config.epsilon,
        epsilon_policy: policy,
        resample_mode: config.resample_mode,
        spread_divisor: config.divisor,
        window: config.window,
        level_dbm: config.level_dbm,
        run_length: config.run_length,
        units: config.units,
        reference_dbm: config.reference_dbm,
        plateau_window: config.plateau_window,
        n_train: config.n_train.clone(),
        sample_count: samples.len(),
        sample_period_ms: dbm.sample_period_ms(),
        grouping: "windows of a group concatenated in time order before fitting".into(),
        epsilon_reading: config.epsilon_reading,
    };
    Ok(PipelineOutput {
        report: PipelineReport {
            schema_version: SCHEMA_VERSION,
            toolkit_version: env!("CARGO_PKG_VERSION").into(),
            metadata,
            groups,
            failures,
        },
        data,
    })
}
