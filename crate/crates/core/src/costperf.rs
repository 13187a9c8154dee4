//! Cost-performance tables across batch sizes and hardware options: ITL, THP,
//! THP per device and dollars per million tokens, with latency-threshold and
//! best-option markings.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Dataset, PricingSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostPerfConfig {
    /// Milliseconds per token; inclusive.
    pub latency_threshold: f64,
    pub pricing: PricingSpec,
    pub devices_per_node: u32,
}

impl CostPerfConfig {
    pub fn new(pricing: PricingSpec) -> Self {
        Self { latency_threshold: 50.0, pricing, devices_per_node: 8 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.latency_threshold > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "latency_threshold must be > 0, got {}",
                self.latency_threshold
            )));
        }
        Ok(())
    }
}

/// Price of generating one million tokens at `thp` tokens/s on `device_count`
/// devices.
pub fn dollars_per_million(thp: f64, device_count: u32, pricing: &PricingSpec) -> Result<f64> {
    if !(thp > 0.0) {
        return Err(Error::NonPositiveThroughput(thp));
    }
    Ok(f64::from(device_count) * pricing.cost_per_device_hour * (1e6 / thp) / 3600.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostPerfCell {
    pub itl: f64,
    pub thp: f64,
    pub thp_per_device: f64,
    pub dollars_per_million: f64,
    pub within_threshold: bool,
    pub best_thp: bool,
    pub best_thp_per_device: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HardwareOption {
    pub label: String,
    pub device_count: u32,
}

/// Rows are hardware options, columns batch sizes. Infeasible or unmeasured
/// cells are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostPerfTable {
    pub input_size: u32,
    pub output_size: u32,
    pub options: Vec<HardwareOption>,
    pub batches: Vec<u32>,
    pub cells: Vec<Vec<Option<CostPerfCell>>>,
    pub devices_per_node: u32,
}

impl CostPerfTable {
    pub fn cell(&self, option: usize, batch: u32) -> Option<&CostPerfCell> {
        let col = self.batches.iter().position(|&b| b == batch)?;
        self.cells[option][col].as_ref()
    }

    /// Option index holding `best_thp_per_device` in each column.
    pub fn best_per_device_winners(&self) -> Vec<Option<usize>> {
        (0..self.batches.len())
            .map(|col| (0..self.options.len()).find(|&row| self.cells[row][col].is_some_and(|c| c.best_thp_per_device)))
            .collect()
    }

    /// Throughput per node for one cell.
    pub fn thp_per_node(&self, cell: &CostPerfCell) -> f64 {
        cell.thp_per_device * f64::from(self.devices_per_node)
    }
}

fn option_label(d: &Dataset) -> String {
    format!("{} x{}", d.metadata.device_name, d.metadata.device_count)
}

/// Builds the table for one `(input, output)` slice from one dataset per
/// hardware option.
pub fn build_table(datasets: &[Dataset], cfg: &CostPerfConfig, fixed: (u32, u32)) -> Result<CostPerfTable> {
    cfg.validate()?;
    let (input, output) = fixed;
    let mut batches = BTreeSet::new();
    for d in datasets {
        let slice = d.slice(input, output);
        if slice.iter().all(|r| r.measurement.thp_tok_s.is_none()) {
            return Err(Error::MissingSlice { dataset: option_label(d), input, output });
        }
        batches.extend(slice.iter().map(|r| r.point().batch));
    }
    let batches: Vec<u32> = batches.into_iter().collect();

    let mut cells = Vec::with_capacity(datasets.len());
    for d in datasets {
        let devices = d.metadata.device_count.max(1);
        let slice = d.slice(input, output);
        let mut row = Vec::with_capacity(batches.len());
        for &b in &batches {
            let cell = slice
                .iter()
                .find(|r| r.point().batch == b)
                .and_then(|r| Some((r.measurement.itl_ms?, r.measurement.thp_tok_s?)))
                .map(|(itl, thp)| -> Result<CostPerfCell> {
                    Ok(CostPerfCell {
                        itl,
                        thp,
                        thp_per_device: thp / f64::from(devices),
                        dollars_per_million: dollars_per_million(thp, devices, &cfg.pricing)?,
                        within_threshold: itl <= cfg.latency_threshold,
                        best_thp: false,
                        best_thp_per_device: false,
                    })
                })
                .transpose()?;
            row.push(cell);
        }
        cells.push(row);
    }

    for col in 0..batches.len() {
        mark_best(&mut cells, col, |c| c.thp, |c| c.best_thp = true);
        mark_best(&mut cells, col, |c| c.thp_per_device, |c| c.best_thp_per_device = true);
    }

    Ok(CostPerfTable {
        input_size: input,
        output_size: output,
        options: datasets
            .iter()
            .map(|d| HardwareOption { label: option_label(d), device_count: d.metadata.device_count })
            .collect(),
        batches,
        cells,
        devices_per_node: cfg.devices_per_node,
    })
}

/// Flags the column maximum; ties go to the first option.
fn mark_best(
    cells: &mut [Vec<Option<CostPerfCell>>],
    col: usize,
    key: impl Fn(&CostPerfCell) -> f64,
    set: impl Fn(&mut CostPerfCell),
) {
    let mut best: Option<(usize, f64)> = None;
    for (row, r) in cells.iter().enumerate() {
        if let Some(c) = &r[col] {
            let v = key(c);
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((row, v));
            }
        }
    }
    if let Some((row, _)) = best {
        set(cells[row][col].as_mut().expect("populated"));
    }
}

/// Largest batch in the slice whose ITL is within the threshold.
pub fn max_concurrency_within_threshold(dataset: &Dataset, cfg: &CostPerfConfig, fixed: (u32, u32)) -> Option<u32> {
    dataset
        .slice(fixed.0, fixed.1)
        .iter()
        .filter(|r| r.measurement.itl_ms.is_some_and(|itl| itl <= cfg.latency_threshold))
        .map(|r| r.point().batch)
        .max()
}
