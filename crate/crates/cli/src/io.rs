//! CSV files read and written by the commands.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a value
//! read back is bit-identical to the one written. NaN is written as an empty
//! field.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use tailrate_core::preprocess::{ExceedanceSet, GroupLabel, PowerUnit, DEFAULT_SAMPLE_PERIOD_MS};
use tailrate_core::ChannelTrace;

use crate::failure::{CliError, CliResult};

pub const TRACE_HEADER: [&str; 2] = ["t_ms", "power_dbm"];
pub const EXCEEDANCE_HEADER: [&str; 5] = ["group", "index", "threshold", "source_count", "exceedance"];

/// Relative tolerance on the spacing of trace timestamps.
const PERIOD_TOL: f64 = 1e-6;

pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

fn parse_f64(field: &str, what: &str, line: u64) -> CliResult<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| CliError::data(format!("line {line}: {what} {field:?} is not a number")))
}

fn parse_usize(field: &str, what: &str, line: u64) -> CliResult<usize> {
    field
        .trim()
        .parse::<usize>()
        .map_err(|_| CliError::data(format!("line {line}: {what} {field:?} is not a nonnegative integer")))
}

fn check_header(reader: &mut csv::Reader<File>, expected: &[&str], path: &Path) -> CliResult<()> {
    let header = reader.headers()?;
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != expected {
        return Err(CliError::data(format!(
            "{}: expected header {}, found {}",
            path.display(),
            expected.join(","),
            found.join(",")
        )));
    }
    Ok(())
}

fn open_csv(path: &Path) -> CliResult<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

/// Reads a `t_ms,power_dbm` trace. The sample period is the spacing of the
/// first two timestamps.
pub fn read_trace(path: &Path) -> CliResult<ChannelTrace> {
    let mut reader = open_csv(path)?;
    check_header(&mut reader, &TRACE_HEADER, path)?;
    let mut times = Vec::new();
    let mut power = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(CliError::data(format!("line {line}: expected 2 fields, found {}", record.len())));
        }
        times.push(parse_f64(&record[0], "t_ms", line)?);
        power.push(parse_f64(&record[1], "power_dbm", line)?);
    }
    if power.is_empty() {
        return Err(CliError::data(format!("{}: no samples", path.display())));
    }
    let period = if times.len() > 1 { times[1] - times[0] } else { DEFAULT_SAMPLE_PERIOD_MS };
    if !(period > 0.0) {
        return Err(CliError::data(format!("{}: timestamps must increase", path.display())));
    }
    let span = *times.last().expect("nonempty") - times[0];
    let expected = period * (times.len() - 1) as f64;
    if (span - expected).abs() > PERIOD_TOL * expected.max(period) {
        log::warn!("{}: timestamps are not evenly spaced; using period {period} ms", path.display());
    }
    ChannelTrace::new(power, PowerUnit::Dbm, period).map_err(|e| CliError::from(e).context(path.display()))
}

/// Opens `path` for writing, or stdout for `None` or `-`.
pub fn create_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    match path {
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
        Some(p) if p.as_os_str() == "-" => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
        Some(p) => {
            let file = File::create(p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(file)))
        }
    }
}

pub fn write_trace(trace: &ChannelTrace, out: &mut dyn Write) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    let period = trace.sample_period_ms();
    for (i, &x) in trace.samples().iter().enumerate() {
        w.write_record([num(i as f64 * period), num(x)])?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of one CSV file, written in full by [`Table::save`].
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let mut out = create_output(Some(path))?;
        self.write(&mut out)
    }

    pub fn write(&self, out: &mut dyn Write) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn push_exceedances(table: &mut Table, group: GroupLabel, set: &ExceedanceSet) {
    for (&y, &i) in set.values.iter().zip(&set.indices) {
        table.push(vec![
            group.to_string(),
            i.to_string(),
            num(set.threshold),
            set.source_count.to_string(),
            num(y),
        ]);
    }
}

/// Reads the exceedances of one group. `group` may be omitted when the file
/// holds a single group.
pub fn read_exceedances(path: &Path, group: Option<GroupLabel>) -> CliResult<(GroupLabel, ExceedanceSet)> {
    let mut reader = open_csv(path)?;
    check_header(&mut reader, &EXCEEDANCE_HEADER, path)?;
    let mut selected: Option<GroupLabel> = group;
    let mut threshold: Option<f64> = None;
    let mut source_count: Option<usize> = None;
    let mut values = Vec::new();
    let mut indices = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != EXCEEDANCE_HEADER.len() {
            return Err(CliError::data(format!("line {line}: expected 5 fields, found {}", record.len())));
        }
        let number = parse_usize(&record[0], "group", line)?;
        let label = u8::try_from(number)
            .ok()
            .and_then(|n| GroupLabel::try_from(n).ok())
            .ok_or_else(|| CliError::data(format!("line {line}: unknown group {number}")))?;
        match selected {
            None => selected = Some(label),
            Some(g) if g != label => {
                if group.is_none() {
                    return Err(CliError::usage(format!(
                        "{} holds several groups; choose one with --group",
                        path.display()
                    )));
                }
                continue;
            }
            Some(_) => {}
        }
        let u = parse_f64(&record[2], "threshold", line)?;
        let count = parse_usize(&record[3], "source_count", line)?;
        if threshold.is_some_and(|t| t != u) || source_count.is_some_and(|c| c != count) {
            return Err(CliError::data(format!("line {line}: threshold or source count differs within the group")));
        }
        threshold = Some(u);
        source_count = Some(count);
        indices.push(parse_usize(&record[1], "index", line)?);
        values.push(parse_f64(&record[4], "exceedance", line)?);
    }
    let (Some(label), Some(u), Some(count)) = (selected, threshold, source_count) else {
        return Err(CliError::data(format!("{}: no exceedances for the requested group", path.display())));
    };
    let mut set = ExceedanceSet::from_values(u, values, count, true)
        .map_err(|e| CliError::from(e).context(path.display()))?;
    set.indices = indices;
    Ok((label, set))
}

/// `<stem>.<stage>.csv`.
pub fn stage_path(stem: &Path, stage: &str) -> PathBuf {
    let mut name = stem.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".{stage}.csv"));
    stem.with_file_name(name)
}
