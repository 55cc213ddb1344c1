//! Result emission: aggregate or raw CSV with a pinned schema, or JSON
//! with the full traces. Files are written to a temporary sibling and
//! renamed into place, so readers never observe torn rows.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{OutputFormat, SweepPoint, SweepResult};

/// Raw-mode CSV row: one line per (grid point, trial).
#[derive(Serialize)]
struct RawRow<'a> {
    gamma: f64,
    beta: f64,
    algorithm: &'a str,
    trial_id: u64,
    seed: u64,
    samples_used: u64,
    final_error: f64,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    points: &'a [SweepPoint],
    slope: &'a Option<crate::harness::SlopeFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    traces: Option<&'a [Vec<crate::harness::TrialTrace>]>,
}

/// Write a sweep result to `path`. Aggregate CSV emits one row per grid
/// point with the schema
/// `gamma,beta,algorithm,trials,total_samples,mean_linf_error,std_linf_error,lower_bound`;
/// raw CSV emits one row per trial. JSON always carries the aggregates and
/// the fit, and includes per-trial traces in raw mode.
pub fn emit_results(
    result: &SweepResult,
    path: impl AsRef<Path>,
    format: OutputFormat,
    raw: bool,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        OutputFormat::Csv => {
            if raw {
                raw_csv_bytes(result)?
            } else {
                aggregate_csv_bytes(result)?
            }
        }
        OutputFormat::Json => {
            let report = JsonReport {
                points: &result.points,
                slope: &result.slope,
                traces: raw.then_some(result.traces.as_slice()),
            };
            let mut text = serde_json::to_string_pretty(&report)?;
            text.push('\n');
            text.into_bytes()
        }
    };
    write_atomically(path, &bytes)
}

fn aggregate_csv_bytes(result: &SweepResult) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    // Serializing the header explicitly keeps it present for empty sweeps.
    writer.write_record([
        "gamma",
        "beta",
        "algorithm",
        "trials",
        "total_samples",
        "mean_linf_error",
        "std_linf_error",
        "lower_bound",
    ])?;
    for point in &result.points {
        writer.write_record(&[
            format_f64(point.gamma),
            format_f64(point.beta),
            point.algorithm.clone(),
            point.trials.to_string(),
            point.total_samples.to_string(),
            format_f64(point.mean_linf_error),
            format_f64(point.std_linf_error),
            point.lower_bound.map(format_f64).unwrap_or_default(),
        ])?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::Config(format!("csv flush failed: {e}")))
}

fn raw_csv_bytes(result: &SweepResult) -> Result<Vec<u8>> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    writer.write_record([
        "gamma",
        "beta",
        "algorithm",
        "trial_id",
        "seed",
        "samples_used",
        "final_error",
    ])?;
    for (point, traces) in result.points.iter().zip(&result.traces) {
        for trace in traces {
            writer.serialize(RawRow {
                gamma: point.gamma,
                beta: point.beta,
                algorithm: &point.algorithm,
                trial_id: trace.trial_id,
                seed: trace.seed,
                samples_used: trace.samples_used,
                final_error: trace.final_error,
            })?;
        }
    }
    writer
        .into_inner()
        .map_err(|e| Error::Config(format!("csv flush failed: {e}")))
}

/// Shortest decimal representation that round-trips the exact double.
fn format_f64(v: f64) -> String {
    let mut buffer = ryu_format(v);
    if buffer.ends_with(".0") {
        buffer.truncate(buffer.len() - 2);
    }
    buffer
}

fn ryu_format(v: f64) -> String {
    // serde_json uses ryu internally; reuse it for identical formatting.
    serde_json::to_string(&v).expect("finite double")
}

fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|source| Error::Io {
        path: tmp.display().to_string(),
        source,
    })?;
    std::fs::rename(&tmp, path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Read an aggregate-mode CSV back into sweep points.
pub fn read_aggregate_csv(path: impl AsRef<Path>) -> Result<Vec<SweepPoint>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(Error::Csv)?;
    let mut points = Vec::new();
    for record in reader.deserialize() {
        points.push(record?);
    }
    Ok(points)
}
