//! Post-hoc analysis over run logs: per-generation aggregation across
//! runs and the smoothing used for plot-ready series. Pure functions of
//! the logs, so re-running produces identical bytes.

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("cannot read log: {0}")]
    Io(#[from] io::Error),
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("log {path} has unexpected columns {found:?}")]
    SchemaMismatch { path: String, found: Vec<String> },
    #[error("log {path} is empty")]
    EmptyLog { path: String },
    #[error("runs disagree on generation count: {lengths:?}")]
    LengthMismatch { lengths: Vec<usize> },
    #[error("need at least one run")]
    NoRuns,
}

/// Centered moving average of radius floor(window / 2), truncated at the
/// ends of the series to the in-range points. Window 1 is the identity.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be at least 1");
    let radius = window / 2;
    (0..xs.len())
        .map(|i| {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius).min(xs.len() - 1);
            xs[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Percentile with linear interpolation between order statistics:
/// rank = p/100 * (n - 1). `p` in [0, 100].
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty set");
    assert!((0.0..=100.0).contains(&p));
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// Per-generation series from one run's `generations.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSeries {
    pub mean: Vec<f64>,
    pub before_mean: Vec<f64>,
}

pub const GENERATIONS_HEADER: [&str; 7] =
    ["generation", "mean", "q25", "q75", "max", "min", "before_mean"];

pub fn read_generations_csv(path: &Path) -> Result<RunSeries, AnalysisError> {
    let mut reader = csv::Reader::from_path(path)?;
    let found: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if found != GENERATIONS_HEADER {
        return Err(AnalysisError::SchemaMismatch {
            path: path.display().to_string(),
            found,
        });
    }
    let mut series = RunSeries {
        mean: Vec::new(),
        before_mean: Vec::new(),
    };
    for record in reader.records() {
        let record = record?;
        let field = |i: usize| -> Result<f64, csv::Error> {
            record
                .get(i)
                .unwrap_or("")
                .parse()
                .map_err(|_| csv::Error::from(io::Error::other(format!("bad float in {record:?}"))))
        };
        series.mean.push(field(1)?);
        series.before_mean.push(field(6)?);
    }
    if series.mean.is_empty() {
        return Err(AnalysisError::EmptyLog {
            path: path.display().to_string(),
        });
    }
    Ok(series)
}

/// One output row: across-run statistics of per-run mean fitness, after
/// smoothing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub generation: u32,
    pub mean: f64,
    pub q25: f64,
    pub q75: f64,
    pub before_mean: f64,
    pub before_q25: f64,
    pub before_q75: f64,
}

/// Aggregate runs generation by generation: mean and quartiles over the
/// per-run population means, each output column smoothed with the given
/// window.
pub fn aggregate(runs: &[RunSeries], window: usize) -> Result<Vec<AggregateRow>, AnalysisError> {
    if runs.is_empty() {
        return Err(AnalysisError::NoRuns);
    }
    let n_gen = runs[0].mean.len();
    if runs.iter().any(|r| r.mean.len() != n_gen) {
        return Err(AnalysisError::LengthMismatch {
            lengths: runs.iter().map(|r| r.mean.len()).collect(),
        });
    }

    let column = |get: fn(&RunSeries) -> &Vec<f64>, stat: fn(&[f64]) -> f64| -> Vec<f64> {
        let raw: Vec<f64> = (0..n_gen)
            .map(|g| {
                let at_g: Vec<f64> = runs.iter().map(|r| get(r)[g]).collect();
                stat(&at_g)
            })
            .collect();
        moving_average(&raw, window)
    };

    let mean = column(|r| &r.mean, |v| v.iter().sum::<f64>() / v.len() as f64);
    let q25 = column(|r| &r.mean, |v| percentile(v, 25.0));
    let q75 = column(|r| &r.mean, |v| percentile(v, 75.0));
    let b_mean = column(|r| &r.before_mean, |v| v.iter().sum::<f64>() / v.len() as f64);
    let b_q25 = column(|r| &r.before_mean, |v| percentile(v, 25.0));
    let b_q75 = column(|r| &r.before_mean, |v| percentile(v, 75.0));

    Ok((0..n_gen)
        .map(|g| AggregateRow {
            generation: g as u32,
            mean: mean[g],
            q25: q25[g],
            q75: q75[g],
            before_mean: b_mean[g],
            before_q25: b_q25[g],
            before_q75: b_q75[g],
        })
        .collect())
}

pub fn write_aggregate_csv<W: io::Write>(
    rows: &[AggregateRow],
    out: W,
) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "generation",
        "mean",
        "q25",
        "q75",
        "before_mean",
        "before_q25",
        "before_q75",
    ])?;
    for r in rows {
        w.write_record([
            r.generation.to_string(),
            r.mean.to_string(),
            r.q25.to_string(),
            r.q75.to_string(),
            r.before_mean.to_string(),
            r.before_q25.to_string(),
            r.before_q75.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
