//! Subcommand implementations.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use tailrate_core::confidence::{param_cis, CiConfig};
use tailrate_core::estimate::TailFit;
use tailrate_core::gpd::GpdParams;
use tailrate_core::pipeline::{run_pipeline, GroupData, PipelineConfig, PipelineOutput, PipelineReport};
use tailrate_core::preprocess::{group_samples, split_stationary_groups, GroupLabel};
use tailrate_core::rate::{epsilon_n_policy, rate_band_in, EpsilonPolicy, RateBand};
use tailrate_core::report::to_json;
use tailrate_core::threshold::{default_candidates, diagnose, select_threshold, ThresholdDiagnostics};
use tailrate_core::{fit_gpd_mle, simulate_trace, ParamCi, SynthConfig};

use crate::args::{CiArgs, CiFlags, FitArgs, PipelineArgs, RateArgs, RateFlags, SimulateArgs, ThresholdArgs};
use crate::failure::{CliError, CliResult};
use crate::io::{
    create_output, num, push_exceedances, read_exceedances, read_trace, stage_path, write_trace, Table,
    EXCEEDANCE_HEADER,
};

fn write_json<T: Serialize + ?Sized>(value: &T, path: Option<&Path>) -> CliResult<()> {
    let text = to_json(value)?;
    let mut out = create_output(path)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn check_alphas(alphas: &[f64]) -> CliResult<()> {
    if alphas.is_empty() {
        return Err(CliError::usage("at least one alpha is required"));
    }
    match alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        Some(a) => Err(CliError::usage(format!("alpha must lie in (0, 1), got {a}"))),
        None => Ok(()),
    }
}

fn epsilon_policy(flags: &RateFlags) -> CliResult<EpsilonPolicy> {
    match (flags.oracle_shape, flags.oracle_scale) {
        (Some(shape), Some(scale)) => GpdParams::new(shape, scale)
            .map(EpsilonPolicy::Oracle)
            .map_err(|e| CliError::usage(e.to_string())),
        _ => Ok(EpsilonPolicy::Approximate),
    }
}

/// Rate settings as a pipeline configuration, so single-stage runs share
/// its unit and ε handling.
fn rate_config(flags: &RateFlags) -> CliResult<PipelineConfig> {
    Ok(PipelineConfig {
        epsilon: flags.epsilon,
        epsilon_reading: flags.epsilon_reading,
        epsilon_policy: epsilon_policy(flags)?,
        units: flags.units,
        reference_dbm: flags.reference_dbm,
        ..PipelineConfig::default()
    })
}

fn ci_config(flags: &CiFlags, seed: u64) -> CiConfig {
    CiConfig { iterations: flags.iterations, mode: flags.resample, divisor: flags.divisor, seed }
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let mut config = SynthConfig::profile(args.profile, args.n, args.seed).with_phi(args.phi);
    config.sample_period_ms = args.period_ms;
    config.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let trace = simulate_trace(&config)?;
    let mut out = create_output(args.out.as_deref())?;
    write_trace(&trace, &mut out)
}

fn pipeline_config(args: &PipelineArgs) -> CliResult<PipelineConfig> {
    check_alphas(&args.ci.alpha)?;
    let mut overrides = BTreeMap::new();
    for &(g, u) in &args.threshold {
        if overrides.insert(g, u).is_some() {
            return Err(CliError::usage(format!("threshold for group {g} given twice")));
        }
    }
    let config = PipelineConfig {
        alphas: args.ci.alpha.clone(),
        iterations: args.ci.iterations,
        resample_mode: args.ci.resample,
        divisor: args.ci.divisor,
        window: args.grouping.window,
        level_dbm: args.grouping.level,
        run_length: args.run_length,
        threshold_overrides: overrides,
        plateau_window: args.plateau_window,
        n_train: args.n_train.clone(),
        seed: args.seed,
        ..rate_config(&args.rate)?
    };
    config.validate()?;
    Ok(config)
}

fn push_diagnostics(mrl: &mut Table, stability: &mut Table, group: GroupLabel, d: &ThresholdDiagnostics) {
    let g = group.to_string();
    for r in &d.mrl {
        mrl.push(vec![g.clone(), num(r.threshold), num(r.mean_excess), num(r.std_error), r.count.to_string()]);
    }
    for r in &d.stability {
        stability.push(vec![
            g.clone(),
            num(r.threshold),
            num(r.shape),
            num(r.shape_se),
            num(r.mod_scale),
            r.count.to_string(),
        ]);
    }
}

/// The `<stem>.<stage>.csv` side files of a pipeline run.
fn pipeline_tables(output: &PipelineOutput) -> Vec<(&'static str, Table)> {
    let mut mrl = Table::new(&["group", "threshold", "mean_excess", "std_error", "count"]);
    let mut stability = Table::new(&["group", "threshold", "shape", "shape_se", "mod_scale", "count"]);
    let mut pp = Table::new(&["group", "empirical", "model"]);
    let mut qq = Table::new(&["group", "model", "empirical"]);
    let mut exceedances = Table::new(&EXCEEDANCE_HEADER);
    let mut ci_vs_n = Table::new(&[
        "group", "n", "group_samples", "n_exceedances", "alpha", "parameter", "estimate", "lower", "upper", "range",
    ]);
    let mut rate_vs_n = Table::new(&["group", "n", "alpha", "rate", "lower", "upper", "range", "epsilon_n"]);

    for GroupData { group, diagnostics, exceedances: set, pp: pp_points, qq: qq_points } in &output.data {
        let g = group.to_string();
        if let Some(d) = diagnostics {
            push_diagnostics(&mut mrl, &mut stability, *group, d);
        }
        for (e, m) in pp_points {
            pp.push(vec![g.clone(), num(*e), num(*m)]);
        }
        for (m, e) in qq_points {
            qq.push(vec![g.clone(), num(*m), num(*e)]);
        }
        if let Some(set) = set {
            push_exceedances(&mut exceedances, *group, set);
        }
    }
    for report in &output.report.groups {
        let g = report.group.to_string();
        for cell in &report.sweep {
            let n = cell.n.to_string();
            for ci in &cell.intervals {
                let fit = cell.fit.as_ref().map(|f| f.params);
                for (name, interval, estimate) in [
                    ("scale", &ci.scale, fit.map(|p| p.scale())),
                    ("shape", &ci.shape, fit.map(|p| p.shape())),
                ] {
                    ci_vs_n.push(vec![
                        g.clone(),
                        n.clone(),
                        cell.group_samples.to_string(),
                        cell.n_exceedances.to_string(),
                        num(ci.alpha),
                        name.to_owned(),
                        num(estimate.unwrap_or(f64::NAN)),
                        num(interval.lower),
                        num(interval.upper),
                        num(interval.upper - interval.lower),
                    ]);
                }
            }
            for band in &cell.bands {
                rate_vs_n.push(vec![
                    g.clone(),
                    n.clone(),
                    num(band.alpha),
                    num(band.rate),
                    num(band.lower),
                    num(band.upper),
                    num(band.upper - band.lower),
                    num(band.epsilon_n),
                ]);
            }
        }
    }
    vec![
        ("mrl", mrl),
        ("stability", stability),
        ("pp", pp),
        ("qq", qq),
        ("ci_vs_n", ci_vs_n),
        ("rate_vs_n", rate_vs_n),
        ("exceedances", exceedances),
    ]
}

/// Which side files hold rows for `group`.
fn group_files(output: &PipelineOutput, group: GroupLabel, stem: &Path) -> BTreeMap<String, String> {
    let data = output.data.iter().find(|d| d.group == group);
    let report = output.report.groups.iter().find(|r| r.group == group);
    let has = |stage: &str| match stage {
        "mrl" | "stability" => data.is_some_and(|d| d.diagnostics.is_some()),
        "pp" => data.is_some_and(|d| !d.pp.is_empty()),
        "qq" => data.is_some_and(|d| !d.qq.is_empty()),
        "exceedances" => data.is_some_and(|d| d.exceedances.as_ref().is_some_and(|s| !s.is_empty())),
        "ci_vs_n" => report.is_some_and(|r| r.sweep.iter().any(|c| !c.intervals.is_empty())),
        "rate_vs_n" => report.is_some_and(|r| r.sweep.iter().any(|c| !c.bands.is_empty())),
        _ => false,
    };
    ["mrl", "stability", "pp", "qq", "ci_vs_n", "rate_vs_n", "exceedances"]
        .into_iter()
        .filter(|s| has(s))
        .map(|s| {
            let name = stage_path(stem, s).file_name().expect("stem has a file name").to_string_lossy().into_owned();
            (s.to_owned(), name)
        })
        .collect()
}

pub fn report_path(stem: &Path) -> std::path::PathBuf {
    let mut name = stem.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".json");
    stem.with_file_name(name)
}

pub fn pipeline(args: &PipelineArgs) -> CliResult<()> {
    let config = pipeline_config(args)?;
    if args.out.file_name().is_none() {
        return Err(CliError::usage(format!("--out {} has no file name", args.out.display())));
    }
    let trace = read_trace(&args.input)?;
    let mut output = run_pipeline(&trace, &config)?;
    for (stage, table) in pipeline_tables(&output) {
        table.save(&stage_path(&args.out, stage))?;
    }
    let files: Vec<BTreeMap<String, String>> =
        output.report.groups.iter().map(|g| group_files(&output, g.group, &args.out)).collect();
    for (group, files) in output.report.groups.iter_mut().zip(files) {
        group.diagnostics = files;
    }
    write_json(&output.report, Some(&report_path(&args.out)))?;
    finish(&output.report)
}

/// Reports stage failures; a run where no group produced a fit is a
/// numeric failure even though its files were written.
fn finish(report: &PipelineReport) -> CliResult<()> {
    for f in &report.failures {
        let group = f.group.map_or_else(|| "-".to_owned(), |g| g.to_string());
        let n = f.n.map_or_else(|| "full".to_owned(), |n| n.to_string());
        log::warn!("group {group}, n {n}, stage {}: {}", f.stage, f.message);
    }
    if report.groups.iter().all(|g| g.fit.is_none()) {
        return Err(CliError::numeric(format!(
            "no group produced a fit ({} stage failures recorded)",
            report.failures.len()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct ThresholdSummary {
    group: GroupLabel,
    samples: usize,
    threshold_dbm: f64,
    fallback: bool,
}

pub fn threshold(args: &ThresholdArgs) -> CliResult<()> {
    if args.grouping.window == 0 || args.plateau_window == 0 {
        return Err(CliError::usage("window sizes must be at least 1"));
    }
    let trace = read_trace(&args.input)?;
    let windows = split_stationary_groups(trace.samples(), args.grouping.window, args.grouping.level)?;
    let samples = group_samples(trace.samples(), &windows, args.group);
    if samples.is_empty() {
        return Err(CliError::data(format!("no samples in group {}", args.group)));
    }
    let mut diagnostics = diagnose(&samples, &default_candidates(&samples)?)?;
    let choice = select_threshold(&diagnostics, args.plateau_window)?;
    diagnostics.selected = Some(choice.threshold);

    let mut mrl = Table::new(&["threshold", "mean_excess", "std_error", "count"]);
    for r in &diagnostics.mrl {
        mrl.push(vec![num(r.threshold), num(r.mean_excess), num(r.std_error), r.count.to_string()]);
    }
    let mut stability = Table::new(&["threshold", "shape", "shape_se", "mod_scale"]);
    for r in &diagnostics.stability {
        stability.push(vec![num(r.threshold), num(r.shape), num(r.shape_se), num(r.mod_scale)]);
    }
    mrl.save(&stage_path(&args.out, "mrl"))?;
    stability.save(&stage_path(&args.out, "stability"))?;
    let summary = ThresholdSummary {
        group: args.group,
        samples: samples.len(),
        threshold_dbm: choice.threshold,
        fallback: choice.fallback,
    };
    write_json(&summary, None)
}

pub fn fit(args: &FitArgs) -> CliResult<()> {
    let (_, set) = read_exceedances(&args.input, args.group)?;
    let fit = fit_gpd_mle(&set)?;
    if !fit.converged {
        return Err(CliError::numeric("maximum-likelihood search did not converge"));
    }
    write_json(&fit, args.out.as_deref())
}

pub fn ci(args: &CiArgs) -> CliResult<()> {
    check_alphas(&args.ci.alpha)?;
    if args.ci.iterations < 2 {
        return Err(CliError::usage(format!("M must be at least 2, got {}", args.ci.iterations)));
    }
    let (_, set) = read_exceedances(&args.input, args.group)?;
    let cis = param_cis(&set, &ci_config(&args.ci, args.seed), &args.ci.alpha)?;
    write_json(&cis, args.out.as_deref())
}

pub fn rate(args: &RateArgs) -> CliResult<()> {
    let config = rate_config(&args.rate)?;
    config.validate()?;
    let fit: TailFit = read_json(&args.fit)?;
    let cis: Vec<ParamCi> = read_json(&args.ci)?;
    let eps = config.tail_epsilon(&fit)?;
    let eps_n = epsilon_n_policy(&fit, eps, config.epsilon_policy)?;
    let domain = config.rate_domain();
    let bands = cis
        .iter()
        .map(|ci| rate_band_in(domain, &fit, &ci.scale, &ci.shape, config.epsilon, eps_n))
        .collect::<Result<Vec<RateBand>, _>>()?;
    write_json(&bands, args.out.as_deref())
}
