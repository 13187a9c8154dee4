//! Meta-metrics over experiment datasets: sweep cost, per-point normalized
//! difference, aggregate accuracy factor and the cost/accuracy efficiency.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::projection::{pair_points, PointPair, Residue};
use crate::stats::{mean, quantile_sorted};
use crate::types::{Dataset, MetricSelector, PricingSpec, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DatasetCost {
    pub total_seconds: f64,
    pub total_cost: f64,
}

/// Time and money spent producing the measured records of a dataset.
/// Projected records cost nothing.
pub fn cost(dataset: &Dataset, pricing: &PricingSpec) -> DatasetCost {
    let total_seconds: f64 = dataset
        .records
        .iter()
        .filter(|r| r.provenance == Provenance::Measured)
        .map(|r| r.measurement.duration_s)
        .sum();
    DatasetCost {
        total_seconds,
        total_cost: pricing.unit_cost_per_second(dataset.metadata.device_count) * total_seconds,
    }
}

/// Normalized difference `(|f_g| - |f_p|) / |f_g + f_p|`.
pub fn delta(f_g: f64, f_p: f64) -> Result<f64> {
    let denom = (f_g + f_p).abs();
    if denom == 0.0 {
        return Err(Error::DegeneratePair);
    }
    Ok((f_g.abs() - f_p.abs()) / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaStats {
    pub mean_abs: f64,
    pub median_abs: f64,
    pub p90_abs: f64,
    pub p99_abs: f64,
    pub rmse: f64,
    pub count: usize,
}

impl DeltaStats {
    /// The accuracy factor used downstream: the mean magnitude.
    pub fn accuracy_factor(&self) -> f64 {
        self.mean_abs
    }
}

/// Magnitude statistics of `deltas` plus RMSE of the signed values.
pub fn aggregate(deltas: &[f64]) -> Result<DeltaStats> {
    if deltas.is_empty() {
        return Err(Error::Empty("deltas"));
    }
    let mut abs: Vec<f64> = deltas.iter().map(|d| d.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let sq: Vec<f64> = deltas.iter().map(|d| d * d).collect();
    Ok(DeltaStats {
        mean_abs: mean(&abs).expect("non-empty"),
        median_abs: quantile_sorted(&abs, 0.5).expect("non-empty"),
        p90_abs: quantile_sorted(&abs, 0.9).expect("non-empty"),
        p99_abs: quantile_sorted(&abs, 0.99).expect("non-empty"),
        rmse: mean(&sq).expect("non-empty").sqrt(),
        count: deltas.len(),
    })
}

/// `E = (1 - Δ) / (C_P / C_G)`.
pub fn efficiency(delta_abs: f64, cost_g: f64, cost_p: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta_abs) {
        return Err(Error::AccuracyOutOfRange(delta_abs));
    }
    if !(cost_g > 0.0 && cost_p > 0.0) {
        return Err(Error::NonPositiveCost { cost_g, cost_p });
    }
    Ok((1.0 - delta_abs) / (cost_p / cost_g))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointDelta {
    pub pair: PointPair,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub metric: MetricSelector,
    pub stats: DeltaStats,
    pub efficiency: f64,
    /// `C_G / C_P`.
    pub speedup: f64,
    pub cost_g: DatasetCost,
    pub cost_p: DatasetCost,
    pub deltas: Vec<PointDelta>,
    pub residue: Vec<Residue>,
}

/// Costs are compared in currency when priced, otherwise in seconds.
fn comparable_cost(c: &DatasetCost, pricing: &PricingSpec) -> f64 {
    if pricing.cost_per_device_hour > 0.0 {
        c.total_cost
    } else {
        c.total_seconds
    }
}

/// Pairs `g` and `p` on `metric`, aggregates the normalized differences and
/// scores the reduced sweep.
pub fn compare(g: &Dataset, p: &Dataset, metric: MetricSelector, pricing: &PricingSpec) -> Result<Comparison> {
    let report = pair_points(g, p, metric)?;
    let deltas = report
        .pairs
        .iter()
        .map(|pair| Ok(PointDelta { pair: *pair, delta: delta(pair.f_g, pair.f_p)? }))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = deltas.iter().map(|d| d.delta).collect();
    let stats = aggregate(&values)?;
    let cost_g = cost(g, pricing);
    let cost_p = cost(p, pricing);
    let (cg, cp) = (comparable_cost(&cost_g, pricing), comparable_cost(&cost_p, pricing));
    let efficiency = efficiency(stats.accuracy_factor(), cg, cp)?;
    Ok(Comparison {
        metric,
        stats,
        efficiency,
        speedup: cg / cp,
        cost_g,
        cost_p,
        deltas,
        residue: report.residue,
    })
}
