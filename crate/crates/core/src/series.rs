//! Multivariate series data model and on-disk formats.
//!
//! A series is a fixed-cadence table of `V` numeric channels. Timestamps are
//! kept as integer nanoseconds since the Unix epoch; the sampling interval is
//! inferred from the first gap and enforced on every subsequent row.

use std::fs;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NANOS_PER_SEC: f64 = 1e9;

#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateSeries {
    names: Vec<String>,
    timestamps: Vec<i64>,
    delta_ns: i64,
    columns: Vec<Vec<f64>>,
    target_index: usize,
    actionable: Vec<bool>,
}

impl MultivariateSeries {
    /// Builds a series from column vectors, validating every invariant.
    pub fn new(
        names: Vec<String>,
        timestamps: Vec<i64>,
        columns: Vec<Vec<f64>>,
        target_index: usize,
        actionable: Vec<bool>,
    ) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidArgument("series needs at least one variable".into()));
        }
        if columns.len() != names.len() {
            return Err(Error::LengthMismatch {
                left: names.len(),
                right: columns.len(),
            });
        }
        if actionable.len() != names.len() {
            return Err(Error::LengthMismatch {
                left: names.len(),
                right: actionable.len(),
            });
        }
        if target_index >= names.len() {
            return Err(Error::InvalidArgument(format!(
                "target index {target_index} out of range"
            )));
        }
        let t = timestamps.len();
        if t < 2 {
            return Err(Error::InsufficientData(format!("{t} rows")));
        }
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != t {
                return Err(Error::LengthMismatch {
                    left: t,
                    right: col.len(),
                });
            }
            if let Some(row) = col.iter().position(|x| !x.is_finite()) {
                return Err(Error::BadValue {
                    row,
                    column: name.clone(),
                    value: col[row].to_string(),
                });
            }
        }
        let delta_ns = timestamps[1] - timestamps[0];
        if delta_ns <= 0 {
            return Err(Error::NonMonotoneTimestamps { row: 1 });
        }
        for row in 2..t {
            let gap = timestamps[row] - timestamps[row - 1];
            if gap <= 0 {
                return Err(Error::NonMonotoneTimestamps { row });
            }
            if ((gap - delta_ns) as f64).abs() > 1e-9 * delta_ns as f64 {
                return Err(Error::IrregularSampling {
                    row,
                    gap_ns: gap,
                    expected_ns: delta_ns,
                });
            }
        }
        Ok(Self {
            names,
            timestamps,
            delta_ns,
            columns,
            target_index,
            actionable,
        })
    }

    /// Regularly sampled series starting at `t0_ns`.
    pub fn regular(
        names: Vec<String>,
        t0_ns: i64,
        delta_ns: i64,
        columns: Vec<Vec<f64>>,
        target_index: usize,
        actionable: Vec<bool>,
    ) -> Result<Self> {
        let t = columns.first().map_or(0, Vec::len);
        let timestamps = (0..t as i64).map(|i| t0_ns + i * delta_ns).collect();
        Self::new(names, timestamps, columns, target_index, actionable)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    /// Number of observations `T`.
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Number of variables `V`.
    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn delta_ns(&self) -> i64 {
        self.delta_ns
    }

    pub fn delta_seconds(&self) -> f64 {
        self.delta_ns as f64 / NANOS_PER_SEC
    }

    pub fn column(&self, v: usize) -> &[f64] {
        &self.columns[v]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn value(&self, t: usize, v: usize) -> f64 {
        self.columns[v][t]
    }

    pub fn target_index(&self) -> usize {
        self.target_index
    }

    pub fn target_name(&self) -> &str {
        &self.names[self.target_index]
    }

    pub fn actionable_mask(&self) -> &[bool] {
        &self.actionable
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    /// Copy of the series restricted to rows in `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.len() || range.start >= range.end {
            return Err(Error::InvalidArgument(format!(
                "row range {range:?} outside 0..{}",
                self.len()
            )));
        }
        let mut out = self.clone();
        out.timestamps = self.timestamps[range.clone()].to_vec();
        out.columns = self
            .columns
            .iter()
            .map(|c| c[range.clone()].to_vec())
            .collect();
        Ok(out)
    }

    /// The trailing `k` rows (or the whole series when shorter).
    pub fn tail(&self, k: usize) -> Self {
        let start = self.len().saturating_sub(k.max(1));
        let mut out = self.clone();
        out.timestamps = self.timestamps[start..].to_vec();
        out.columns = self.columns.iter().map(|c| c[start..].to_vec()).collect();
        out
    }

    pub fn with_target(mut self, target_index: usize) -> Result<Self> {
        if target_index >= self.n_vars() {
            return Err(Error::InvalidArgument(format!(
                "target index {target_index} out of range"
            )));
        }
        self.target_index = target_index;
        Ok(self)
    }

    pub fn with_actionable(mut self, actionable: Vec<bool>) -> Result<Self> {
        if actionable.len() != self.n_vars() {
            return Err(Error::LengthMismatch {
                left: self.n_vars(),
                right: actionable.len(),
            });
        }
        self.actionable = actionable;
        Ok(self)
    }

    /// Per-variable (mean, population std) over the whole series.
    pub fn column_stats(&self) -> Vec<(f64, f64)> {
        self.columns.iter().map(|c| mean_std(c)).collect()
    }

    pub fn meta(&self) -> SeriesMeta {
        SeriesMeta {
            names: self.names.clone(),
            delta_seconds: self.delta_seconds(),
            target: self.target_name().to_string(),
            actionable: self.actionable.clone(),
        }
    }

    /// Serializes to CSV: ISO-8601 timestamp column then one column per
    /// variable, values in shortest round-trip decimal form.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("timestamp");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (t, ts) in self.timestamps.iter().enumerate() {
            out.push_str(&format_timestamp(*ts));
            for col in &self.columns {
                out.push(',');
                out.push_str(&col[t].to_string());
            }
            out.push('\n');
        }
        out
    }

    /// Writes `series.csv` and `meta.json` into `dir`.
    pub fn save_bundle(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join("series.csv");
        fs::write(&csv_path, self.to_csv_string()).map_err(|e| Error::io(&csv_path, e))?;
        let meta_path = dir.join("meta.json");
        let meta = serde_json::to_string_pretty(&self.meta())?;
        fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;
        Ok(())
    }

    /// Reads a bundle previously written by [`save_bundle`](Self::save_bundle).
    pub fn load_bundle(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta_path = dir.join("meta.json");
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: SeriesMeta = serde_json::from_str(&text)?;
        let opts = IngestOptions {
            target: meta.target.clone(),
            missing: MissingPolicy::Reject,
            actionable: Some(
                meta.names
                    .iter()
                    .zip(&meta.actionable)
                    .filter(|(_, a)| **a)
                    .map(|(n, _)| n.clone())
                    .collect(),
            ),
        };
        let (series, _) = load_csv(dir.join("series.csv"), &opts)?;
        if series.names != meta.names {
            return Err(Error::MalformedHeader(
                "series.csv columns disagree with meta.json".into(),
            ));
        }
        Ok(series)
    }
}

/// Sidecar metadata stored next to `series.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub names: Vec<String>,
    pub delta_seconds: f64,
    pub target: String,
    pub actionable: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    Reject,
    ForwardFill,
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub target: String,
    pub missing: MissingPolicy,
    /// Names of actionable variables; `None` marks every non-target variable actionable.
    pub actionable: Option<Vec<String>>,
}

impl IngestOptions {
    pub fn new(target: impl Into<String>) -> Self {
        Self {
            target: target.into(),
            missing: MissingPolicy::Reject,
            actionable: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IngestReport {
    pub rows: usize,
    pub filled_cells: usize,
    pub dropped_rows: usize,
}

pub fn load_csv(
    path: impl AsRef<Path>,
    opts: &IngestOptions,
) -> Result<(MultivariateSeries, IngestReport)> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, opts)
}

pub fn read_csv<R: Read>(
    reader: R,
    opts: &IngestOptions,
) -> Result<(MultivariateSeries, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::MalformedHeader(
            "need a timestamp column and at least one variable".into(),
        ));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if names.iter().any(String::is_empty) {
        return Err(Error::MalformedHeader("empty column name".into()));
    }
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(Error::MalformedHeader(format!("duplicate column {n:?}")));
        }
    }
    let target_index = names
        .iter()
        .position(|n| *n == opts.target)
        .ok_or_else(|| Error::UnknownVariable(opts.target.clone()))?;
    let actionable = match &opts.actionable {
        None => (0..names.len()).map(|v| v != target_index).collect(),
        Some(list) => {
            for a in list {
                if !names.contains(a) {
                    return Err(Error::UnknownVariable(a.clone()));
                }
            }
            names.iter().map(|n| list.contains(n)).collect()
        }
    };

    let mut timestamps = Vec::new();
    let mut cells: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::MalformedHeader(format!(
                "row {row} has {} fields, header has {}",
                rec.len(),
                header.len()
            )));
        }
        timestamps.push(parse_timestamp(&rec[0]).ok_or_else(|| Error::BadTimestamp {
            row,
            value: rec[0].to_string(),
        })?);
        for (v, field) in rec.iter().skip(1).enumerate() {
            cells[v].push(parse_cell(field).map_err(|_| Error::BadValue {
                row,
                column: names[v].clone(),
                value: field.to_string(),
            })?);
        }
    }
    for (row, w) in timestamps.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(Error::NonMonotoneTimestamps { row: row + 1 });
        }
    }

    let mut report = IngestReport {
        rows: timestamps.len(),
        ..Default::default()
    };
    let mut columns = Vec::with_capacity(names.len());
    for (v, col) in cells.into_iter().enumerate() {
        if col.iter().all(Option::is_none) {
            return Err(Error::EmptyColumn(names[v].clone()));
        }
        let mut out = Vec::with_capacity(col.len());
        let mut last = None;
        for (row, cell) in col.into_iter().enumerate() {
            match (cell, opts.missing, last) {
                (Some(x), _, _) => {
                    out.push(x);
                    last = Some(x);
                }
                (None, MissingPolicy::ForwardFill, Some(prev)) => {
                    out.push(prev);
                    report.filled_cells += 1;
                }
                (None, _, _) => {
                    return Err(Error::MissingValue {
                        row,
                        column: names[v].clone(),
                    })
                }
            }
        }
        columns.push(out);
    }
    let series = MultivariateSeries::new(names, timestamps, columns, target_index, actionable)?;
    Ok((series, report))
}

fn parse_cell(field: &str) -> std::result::Result<Option<f64>, ()> {
    if field.is_empty() || field.eq_ignore_ascii_case("na") || field.eq_ignore_ascii_case("nan")
    {
        return Ok(None);
    }
    match field.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(Some(x)),
        _ => Err(()),
    }
}

/// Integer fields are seconds since the epoch; anything else must be ISO-8601.
pub fn parse_timestamp(field: &str) -> Option<i64> {
    if let Ok(secs) = field.parse::<i64>() {
        return secs.checked_mul(1_000_000_000);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(field) {
        return dt.timestamp_nanos_opt();
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(field, fmt) {
            return dt.and_utc().timestamp_nanos_opt();
        }
    }
    None
}

pub fn format_timestamp(ns: i64) -> String {
    DateTime::<Utc>::from_timestamp_nanos(ns).to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
