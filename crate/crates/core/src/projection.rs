//! Fills unmeasured batch sizes by piecewise-linear interpolation along the
//! batch axis, and pairs ground-truth and projected points for comparison.

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};
use crate::types::{
    itl_from_thp, thp_from_itl, Dataset, DatasetRole, Measurement, MetricSelector, Provenance, Record, SweepPoint,
};

fn lerp(b: u32, lo: (u32, f64), hi: (u32, f64)) -> f64 {
    let t = f64::from(b - lo.0) / f64::from(hi.0 - lo.0);
    lo.1 + (hi.1 - lo.1) * t
}

/// Decode metrics are interpolated in ITL space unless THP alone is selected.
fn decode_axis(metric_axes: &[MetricSelector]) -> MetricSelector {
    if metric_axes.contains(&MetricSelector::Thp) && !metric_axes.contains(&MetricSelector::Itl) {
        MetricSelector::Thp
    } else {
        MetricSelector::Itl
    }
}

fn interpolate(point: SweepPoint, lo: &Measurement, hi: &Measurement, axis: MetricSelector) -> Measurement {
    let (blo, bhi) = (lo.point.batch, hi.point.batch);
    let b = point.batch;
    let ttft = lerp(b, (blo, lo.ttft_ms), (bhi, hi.ttft_ms));
    let duration = lerp(b, (blo, lo.duration_s), (bhi, hi.duration_s));
    let (itl, thp) = match (axis, lo.itl_ms, hi.itl_ms, lo.thp_tok_s, hi.thp_tok_s) {
        (_, _, _, _, _) if point.is_prefill_only() => (None, None),
        (MetricSelector::Thp, _, _, Some(tl), Some(th)) => {
            let thp = lerp(b, (blo, tl), (bhi, th));
            (Some(itl_from_thp(b, thp)), Some(thp))
        }
        (_, Some(il), Some(ih), _, _) => {
            let itl = lerp(b, (blo, il), (bhi, ih));
            (Some(itl), Some(thp_from_itl(b, itl)))
        }
        _ => (None, None),
    };
    Measurement {
        point,
        ttft_ms: ttft,
        itl_ms: itl,
        thp_tok_s: thp,
        duration_s: duration,
        iterations: 0,
        warmup_excluded: 0,
        flags: Default::default(),
    }
}

/// Builds the projected superset of `measured` over `target_batches`.
///
/// Only records flagged measured act as interpolation knots, so projecting an
/// already projected dataset reproduces it exactly.
pub fn project(measured: &Dataset, target_batches: &[u32], metric_axes: &[MetricSelector]) -> Result<Dataset> {
    let axis = decode_axis(metric_axes);
    let mut targets = target_batches.to_vec();
    targets.sort_unstable();
    targets.dedup();
    if targets.is_empty() {
        return Err(Error::EmptyAxis("target batches"));
    }

    let mut slices: BTreeMap<(u32, u32), BTreeMap<u32, &Measurement>> = BTreeMap::new();
    for r in measured.records.iter().filter(|r| r.provenance == Provenance::Measured) {
        let p = r.point();
        slices.entry((p.input, p.output)).or_default().entry(p.batch).or_insert(&r.measurement);
    }

    let mut out = Dataset::new(DatasetRole::Projected, measured.metadata.clone());
    out.wall_time_s = measured.wall_time_s;
    for (&(input, output), knots) in &slices {
        let knot_list: Vec<(u32, &Measurement)> = knots.iter().map(|(&b, &m)| (b, m)).collect();
        let mut emitted = HashSet::new();
        // Measured points outside the target range still pass through.
        let mut batches: Vec<u32> = targets.iter().copied().chain(knots.keys().copied()).collect();
        batches.sort_unstable();
        batches.dedup();
        for b in batches {
            if !emitted.insert(b) {
                continue;
            }
            if let Some(m) = knots.get(&b) {
                out.push(Record::measured((*m).clone()));
                continue;
            }
            let hi_idx = knot_list.partition_point(|(kb, _)| *kb < b);
            if hi_idx == 0 || hi_idx == knot_list.len() {
                return Err(Error::ExtrapolationRequired { input, output, batch: b });
            }
            let (lo, hi) = (knot_list[hi_idx - 1].1, knot_list[hi_idx].1);
            out.push(Record::projected(interpolate(SweepPoint { input, output, batch: b }, lo, hi, axis)));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPair {
    pub point: SweepPoint,
    pub f_g: f64,
    pub f_p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    GroundOnly,
    ProjectedOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Residue {
    pub point: SweepPoint,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairReport {
    pub metric: MetricSelector,
    pub pairs: Vec<PointPair>,
    pub residue: Vec<Residue>,
}

/// Points of `d` that carry `metric`. TTFT is taken from the TTFT-only
/// (output = 1) records, so the join is effectively on `(input, batch)`.
fn metric_points(d: &Dataset, metric: MetricSelector) -> BTreeMap<SweepPoint, f64> {
    let mut out = BTreeMap::new();
    for r in &d.records {
        let m = &r.measurement;
        let eligible = match metric {
            MetricSelector::Ttft => m.point.is_prefill_only(),
            _ => !m.point.is_prefill_only(),
        };
        if let (true, Some(v)) = (eligible, m.metric(metric)) {
            out.entry(m.point).or_insert(v);
        }
    }
    out
}

/// Inner join of two datasets on the points carrying `metric`; unmatched
/// points are reported as residue.
pub fn pair_points(g: &Dataset, p: &Dataset, metric: MetricSelector) -> Result<PairReport> {
    let gm = metric_points(g, metric);
    let pm = metric_points(p, metric);
    let mut pairs = Vec::new();
    let mut residue = Vec::new();
    for (point, &f_g) in &gm {
        match pm.get(point) {
            Some(&f_p) => pairs.push(PointPair { point: *point, f_g, f_p }),
            None => residue.push(Residue { point: *point, side: Side::GroundOnly }),
        }
    }
    residue.extend(
        pm.keys()
            .filter(|pt| !gm.contains_key(pt))
            .map(|&point| Residue { point, side: Side::ProjectedOnly }),
    );
    if pairs.is_empty() {
        return Err(Error::NoComparablePoints);
    }
    Ok(PairReport { metric, pairs, residue })
}
