//! Metric artifacts: line-delimited records plus a comma-separated
//! summary, both with stable field order and 9-significant-digit values
//! so equal runs produce equal bytes.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// One metric observation. Field order is the wire order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub run: String,
    pub episode: u32,
    pub metric: String,
    pub value: f64,
}

impl MetricRecord {
    /// Builds a record, rounding the value to 9 significant digits at
    /// the door so artifacts never depend on sub-reporting noise.
    pub fn new(run: &str, episode: u32, metric: &str, value: f64) -> MetricRecord {
        MetricRecord {
            run: run.to_string(),
            episode,
            metric: metric.to_string(),
            value: round_sig(value),
        }
    }
}

/// Rounds to 9 significant digits through the decimal representation.
pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() {
        return v;
    }
    format!("{v:.8e}").parse().expect("scientific notation round-trips")
}

/// Writes records as JSON lines and a per-metric summary
/// (metric,count,mean,stddev,min,max) as CSV. With no records the data
/// file is empty and the summary is its header line alone.
pub fn emit_metrics(
    records: &[MetricRecord],
    jsonl_path: &Path,
    csv_path: &Path,
) -> Result<(), HarnessError> {
    let mut data = String::new();
    for r in records {
        data.push_str(&serde_json::to_string(r).expect("record serializes"));
        data.push('\n');
    }
    write_atomic(jsonl_path, data.as_bytes())?;

    let mut names: Vec<&str> = records.iter().map(|r| r.metric.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    let mut csv = String::from("metric,count,mean,stddev,min,max\n");
    for name in names {
        let values: Vec<f64> =
            records.iter().filter(|r| r.metric == name).map(|r| r.value).collect();
        let (mean, stddev) = mean_stddev(&values);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        csv.push_str(&format!(
            "{name},{},{},{},{},{}\n",
            values.len(),
            round_sig(mean),
            round_sig(stddev),
            round_sig(lo),
            round_sig(hi)
        ));
    }
    write_atomic(csv_path, csv.as_bytes())
}

/// Parses a JSON-lines metrics file back into records.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricRecord>, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .map(|line| {
            serde_json::from_str(line)
                .map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))
        })
        .collect()
}

/// Mean and sample standard deviation; fewer than two values give
/// stddev 0.
pub fn mean_stddev(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}
