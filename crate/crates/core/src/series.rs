//! Time series storage, CSV/JSON interchange, and derivative estimators.
//!
//! A [`TimeSeries`] is an `N x n` block of state samples on a strictly
//! increasing (not necessarily uniform) time grid. Derivative estimates only
//! look forward in time, so the trailing one or two samples have no estimate
//! and [`DerivativeEstimate`] rows line up with source rows `0..M`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative guard used on the three-point denominator, in units of machine epsilon.
const STENCIL_GUARD: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SeriesRecord", into = "SeriesRecord")]
pub struct TimeSeries {
    times: Vec<f64>,
    /// Row-major `N x n` values.
    values: Vec<f64>,
    labels: Vec<String>,
}

/// Wire form: `{"times": [...], "labels": [...], "values": [[...], ...]}`.
#[derive(Serialize, Deserialize)]
struct SeriesRecord {
    times: Vec<f64>,
    labels: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl TryFrom<SeriesRecord> for TimeSeries {
    type Error = Error;

    fn try_from(rec: SeriesRecord) -> Result<Self> {
        TimeSeries::from_rows(rec.times, &rec.values, rec.labels)
    }
}

impl From<TimeSeries> for SeriesRecord {
    fn from(s: TimeSeries) -> Self {
        let values = s.rows().map(<[f64]>::to_vec).collect();
        SeriesRecord {
            times: s.times,
            labels: s.labels,
            values,
        }
    }
}

impl TimeSeries {
    /// Builds a series from a flat row-major value buffer.
    ///
    /// Row numbers in errors are 1-based data rows.
    pub fn new(times: Vec<f64>, values: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Shape("a series needs at least one state column".into()));
        }
        if values.len() != times.len() * n {
            return Err(Error::Shape(format!(
                "{} values do not fill {} rows of {} states",
                values.len(),
                times.len(),
                n
            )));
        }
        if times.len() < 2 {
            return Err(Error::TooFewRows {
                needed: 2,
                got: times.len(),
            });
        }
        for (d, &t) in times.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::NonFinite { row: d + 1, col: 0 });
            }
            for k in 0..n {
                if !values[d * n + k].is_finite() {
                    return Err(Error::NonFinite {
                        row: d + 1,
                        col: k + 1,
                    });
                }
            }
            if d > 0 && t <= times[d - 1] {
                return Err(Error::NonIncreasingTime { row: d + 1 });
            }
        }
        Ok(TimeSeries {
            times,
            values,
            labels,
        })
    }

    pub fn from_rows(times: Vec<f64>, rows: &[Vec<f64>], labels: Vec<String>) -> Result<Self> {
        if rows.len() != times.len() {
            return Err(Error::Shape(format!(
                "{} time stamps but {} value rows",
                times.len(),
                rows.len()
            )));
        }
        let n = labels.len();
        let mut values = Vec::with_capacity(rows.len() * n);
        for (d, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Shape(format!(
                    "row {} has {} values, expected {}",
                    d + 1,
                    row.len(),
                    n
                )));
            }
            values.extend_from_slice(row);
        }
        Self::new(times, values, labels)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.labels.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, d: usize) -> &[f64] {
        let n = self.n_states();
        &self.values[d * n..(d + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_states())
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows().map(|r| r[k]).collect()
    }

    /// Writes the canonical CSV form. Each `comments` entry becomes a leading
    /// `# ...` line, which [`read_csv`] skips.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend(self.labels.iter().cloned());
        wtr.write_record(&header)?;
        let mut record = Vec::with_capacity(self.n_states() + 1);
        for (t, row) in self.times.iter().zip(self.rows()) {
            record.clear();
            record.push(t.to_string());
            record.extend(row.iter().map(f64::to_string));
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Reads CSV with a header row `t,<label1>,...`. Lines starting with `#`
/// are comments.
pub fn read_csv<R: Read>(r: R) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Parse {
            row: 0,
            msg: "header needs a time column and at least one state column".into(),
        });
    }
    let labels: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            msg: e.to_string(),
        })?;
        if rec.len() != headers.len() {
            return Err(Error::Parse {
                row,
                msg: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        let mut fields = rec.iter().map(|f| {
            f.parse::<f64>().map_err(|e| Error::Parse {
                row,
                msg: format!("'{f}': {e}"),
            })
        });
        times.push(fields.next().expect("non-empty record")?);
        for v in fields {
            values.push(v?);
        }
    }
    TimeSeries::new(times, values, labels)
}

pub fn read_json<R: Read>(r: R) -> Result<TimeSeries> {
    Ok(serde_json::from_reader(r)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesFormat {
    Csv,
    Json,
}

impl SeriesFormat {
    /// Infers the format from a file extension; anything but `.json` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => SeriesFormat::Json,
            _ => SeriesFormat::Csv,
        }
    }
}

pub fn load_series(path: &Path, format: SeriesFormat) -> Result<TimeSeries> {
    let rdr = BufReader::new(File::open(path)?);
    match format {
        SeriesFormat::Csv => read_csv(rdr),
        SeriesFormat::Json => read_json(rdr),
    }
}

pub fn save_series(series: &TimeSeries, path: &Path, format: SeriesFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        SeriesFormat::Csv => series.write_csv(&mut w, &[])?,
        SeriesFormat::Json => serde_json::to_writer(&mut w, series)?,
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMethod {
    /// `(x_{i+1} - x_i) / (t_{i+1} - t_i)`, first order.
    #[default]
    ForwardDifference,
    /// Second-order one-sided estimate from `t_i, t_{i+1}, t_{i+2}`.
    ThreePointNonuniform,
    /// Derivatives supplied by the caller (e.g. analytic values in tests).
    Supplied,
}

/// Estimated `x'(t_d)` for the leading `M` rows of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeEstimate {
    times: Vec<f64>,
    values: Vec<f64>,
    n_states: usize,
    method: DerivativeMethod,
}

impl DerivativeEstimate {
    pub fn new(
        times: Vec<f64>,
        values: Vec<f64>,
        n_states: usize,
        method: DerivativeMethod,
    ) -> Result<Self> {
        if n_states == 0 || values.len() != times.len() * n_states {
            return Err(Error::Shape(format!(
                "{} derivative values for {} rows of {} states",
                values.len(),
                times.len(),
                n_states
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: i / n_states + 1,
                col: i % n_states + 1,
            });
        }
        Ok(DerivativeEstimate {
            times,
            values,
            n_states,
            method,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn method(&self) -> DerivativeMethod {
        self.method
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn row(&self, d: usize) -> &[f64] {
        &self.values[d * self.n_states..(d + 1) * self.n_states]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.values
            .chunks_exact(self.n_states)
            .map(|r| r[k])
            .collect()
    }
}

pub fn estimate_derivative(
    series: &TimeSeries,
    method: DerivativeMethod,
) -> Result<DerivativeEstimate> {
    match method {
        DerivativeMethod::ForwardDifference => Ok(forward_difference(series)),
        DerivativeMethod::ThreePointNonuniform => three_point_derivative(series),
        DerivativeMethod::Supplied => Err(Error::Config(
            "supplied derivatives must be built with DerivativeEstimate::new".into(),
        )),
    }
}

pub fn forward_difference(series: &TimeSeries) -> DerivativeEstimate {
    let n = series.n_states();
    let t = series.times();
    let m = series.len() - 1;
    let mut values = Vec::with_capacity(m * n);
    for d in 0..m {
        let dt = t[d + 1] - t[d];
        let (x0, x1) = (series.row(d), series.row(d + 1));
        values.extend(x0.iter().zip(x1).map(|(a, b)| (b - a) / dt));
    }
    DerivativeEstimate {
        times: t[..m].to_vec(),
        values,
        n_states: n,
        method: DerivativeMethod::ForwardDifference,
    }
}

/// First derivative at `t_i` from samples `i, i+1, i+2`, obtained by
/// eliminating `x''(t_i)` between the second-order Taylor expansions to
/// `t_{i+1}` and `t_{i+2}`. Exact for quadratics on any grid.
pub fn three_point_derivative(series: &TimeSeries) -> Result<DerivativeEstimate> {
    if series.len() < 3 {
        return Err(Error::TooFewRows {
            needed: 3,
            got: series.len(),
        });
    }
    let n = series.n_states();
    let t = series.times();
    let m = series.len() - 2;
    let mut values = Vec::with_capacity(m * n);
    for i in 0..m {
        let h1 = t[i + 1] - t[i];
        let h2 = t[i + 2] - t[i];
        let g = t[i + 2] - t[i + 1];
        let (spread, denom) =
            three_point_denominator(h1, h2, g).ok_or(Error::DegenerateStencil { index: i })?;
        let (x0, x1, x2) = (series.row(i), series.row(i + 1), series.row(i + 2));
        for k in 0..n {
            let num = (x1[k] - x0[k]) * spread - (x2[k] - x1[k]) * h1 * h1;
            values.push(num / denom);
        }
    }
    Ok(DerivativeEstimate {
        times: t[..m].to_vec(),
        values,
        n_states: n,
        method: DerivativeMethod::ThreePointNonuniform,
    })
}

/// Returns `((t2-t0)^2 - (t1-t0)^2, denominator)`, or `None` when the
/// denominator is lost in rounding. On a strictly increasing grid the
/// denominator equals `h1 * h2 * g` and stays well away from zero.
fn three_point_denominator(h1: f64, h2: f64, g: f64) -> Option<(f64, f64)> {
    let spread = h2 * h2 - h1 * h1;
    let lead = h1 * spread;
    let tail = g * h1 * h1;
    let denom = lead - tail;
    if denom.abs() <= STENCIL_GUARD * f64::EPSILON * lead.abs().max(tail.abs()) {
        None
    } else {
        Some((spread, denom))
    }
}

/// `x''(t_i)` from the two truncated Taylor expansions, with `x'(t_i)` taken
/// from the forward difference at `i`.
pub fn second_derivative_estimate(series: &TimeSeries, i: usize) -> Result<Vec<f64>> {
    if series.len() < 3 || i > series.len() - 3 {
        return Err(Error::Shape(format!(
            "second derivative at {i} needs rows {i}..={} of a {}-row series",
            i + 2,
            series.len()
        )));
    }
    let t = series.times();
    let h1 = t[i + 1] - t[i];
    let h2 = t[i + 2] - t[i];
    let g = t[i + 2] - t[i + 1];
    let denom = h2 * h2 - h1 * h1;
    if denom.abs() <= STENCIL_GUARD * f64::EPSILON * (h2 * h2).max(h1 * h1) {
        return Err(Error::DegenerateStencil { index: i });
    }
    let (x0, x1, x2) = (series.row(i), series.row(i + 1), series.row(i + 2));
    Ok((0..series.n_states())
        .map(|k| {
            let slope = (x1[k] - x0[k]) / h1;
            2.0 * (x2[k] - x1[k] - slope * g) / denom
        })
        .collect())
}

/// Largest finite-difference slope over all consecutive samples and states.
pub fn lipschitz_diagnostic(series: &TimeSeries) -> f64 {
    let t = series.times();
    (0..series.len() - 1)
        .flat_map(|d| {
            let dt = (t[d + 1] - t[d]).abs();
            series
                .row(d)
                .iter()
                .zip(series.row(d + 1))
                .map(move |(a, b)| (b - a).abs() / dt)
        })
        .fold(0.0, f64::max)
}
