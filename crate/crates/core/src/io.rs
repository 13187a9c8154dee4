//! Flat-file formats: dataset CSV with a `<name>.meta.json` sidecar, and
//! sweep plan JSON.
//!
//! Floats are written in shortest round-trip form, so a write/read cycle is
//! lossless.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::SweepPlan;
use crate::types::{Dataset, DatasetRole, Measurement, MeasurementFlags, Provenance, Record, RunMetadata, SweepPoint};

pub const DATASET_HEADER: [&str; 9] =
    ["input", "output", "batch", "ttft_ms", "itl_ms", "thp_tok_s", "duration_s", "iters", "provenance"];

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    input: u32,
    output: u32,
    batch: u32,
    ttft_ms: f64,
    itl_ms: Option<f64>,
    thp_tok_s: Option<f64>,
    duration_s: f64,
    iters: u32,
    provenance: String,
}

/// `runs/g.csv` -> `runs/g.meta.json`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.meta.json"))
}

pub fn dataset_to_csv(d: &Dataset) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &d.records {
        let m = &r.measurement;
        w.serialize(Row {
            input: m.point.input,
            output: m.point.output,
            batch: m.point.batch,
            ttft_ms: m.ttft_ms,
            itl_ms: m.itl_ms,
            thp_tok_s: m.thp_tok_s,
            duration_s: m.duration_s,
            iters: m.iterations,
            provenance: r.provenance.as_str().to_string(),
        })?;
    }
    if d.records.is_empty() {
        w.write_record(DATASET_HEADER)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Parses dataset CSV. The role is `Projected` when any record is projected,
/// `Measured` otherwise; callers may override it.
pub fn dataset_from_csv(text: &str, metadata: RunMetadata) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != DATASET_HEADER {
        return Err(Error::Parse(format!("unexpected dataset header {header:?}")));
    }
    let mut records = Vec::new();
    for row in rdr.deserialize::<Row>() {
        let row = row?;
        let measurement = Measurement {
            point: SweepPoint { input: row.input, output: row.output, batch: row.batch },
            ttft_ms: row.ttft_ms,
            itl_ms: row.itl_ms,
            thp_tok_s: row.thp_tok_s,
            duration_s: row.duration_s,
            iterations: row.iters,
            warmup_excluded: 0,
            flags: MeasurementFlags::default(),
        };
        records.push(Record { measurement, provenance: row.provenance.parse()? });
    }
    let role = if records.iter().any(|r| r.provenance == Provenance::Projected) {
        DatasetRole::Projected
    } else {
        DatasetRole::Measured
    };
    Ok(Dataset { role, records, metadata, wall_time_s: None })
}

pub fn metadata_to_json(meta: &RunMetadata) -> Result<String> {
    let mut s = serde_json::to_string_pretty(meta)?;
    s.push('\n');
    Ok(s)
}

/// Writes `path` and its metadata sidecar.
pub fn write_dataset(path: &Path, d: &Dataset) -> Result<()> {
    std::fs::write(path, dataset_to_csv(d)?)?;
    std::fs::write(meta_path(path), metadata_to_json(&d.metadata)?)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let meta_text = std::fs::read_to_string(meta_path(path))?;
    let metadata: RunMetadata = serde_json::from_str(&meta_text)?;
    dataset_from_csv(&text, metadata)
}

pub fn write_plan(path: &Path, plan: &SweepPlan) -> Result<()> {
    let mut s = serde_json::to_string_pretty(plan)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_plan(path: &Path) -> Result<SweepPlan> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
