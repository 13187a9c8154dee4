//! Domain types shared across the toolkit: sweep points and grids, per-point
//! measurements, datasets and their metadata.

use std::collections::HashMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the `thp * itl_seconds == batch` identity.
pub const THP_IDENTITY_TOL: f64 = 1e-6;

/// One coordinate of the experimental space.
///
/// Ordering is lexicographic on `(input, output, batch)`, which is also the
/// execution order of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SweepPoint {
    pub input: u32,
    pub output: u32,
    pub batch: u32,
}

impl SweepPoint {
    pub fn new(input: u32, output: u32, batch: u32) -> Result<Self> {
        let p = Self { input, output, batch };
        if input == 0 || output == 0 || batch == 0 {
            return Err(Error::InvalidPoint(p));
        }
        Ok(p)
    }

    /// True when the run only collects TTFT.
    pub fn is_prefill_only(&self) -> bool {
        self.output == 1
    }
}

impl fmt::Display for SweepPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(i={}, o={}, b={})", self.input, self.output, self.batch)
    }
}

/// The input, output and batch axes of an experimental space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepGrid {
    inputs: Vec<u32>,
    outputs: Vec<u32>,
    batches: Vec<u32>,
}

impl SweepGrid {
    /// Builds a grid from axes that are already strictly ascending. Use
    /// [`crate::planner::full_grid`] to normalize arbitrary sets.
    pub fn from_sorted(inputs: Vec<u32>, outputs: Vec<u32>, batches: Vec<u32>) -> Result<Self> {
        for (name, axis) in [("inputs", &inputs), ("outputs", &outputs), ("batches", &batches)] {
            if axis.is_empty() {
                return Err(Error::EmptyAxis(name));
            }
            if axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::UnsortedAxis(name));
            }
            if axis[0] == 0 {
                return Err(Error::ZeroOnAxis(name));
            }
        }
        Ok(Self { inputs, outputs, batches })
    }

    pub fn inputs(&self) -> &[u32] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[u32] {
        &self.outputs
    }

    pub fn batches(&self) -> &[u32] {
        &self.batches
    }

    pub fn len(&self) -> usize {
        self.inputs.len() * self.outputs.len() * self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All points in ascending `(input, output, batch)` order.
    pub fn points(&self) -> impl Iterator<Item = SweepPoint> + '_ {
        self.inputs.iter().flat_map(move |&input| {
            self.outputs.iter().flat_map(move |&output| {
                self.batches
                    .iter()
                    .map(move |&batch| SweepPoint { input, output, batch })
            })
        })
    }
}

/// Observed performance of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub point: SweepPoint,
    /// Time to first token, milliseconds.
    pub ttft_ms: f64,
    /// Inter-token latency, milliseconds per token. Absent for TTFT-only runs.
    pub itl_ms: Option<f64>,
    /// Decode throughput across the batch, tokens per second.
    pub thp_tok_s: Option<f64>,
    /// Representative wall time of one experiment iteration, seconds.
    pub duration_s: f64,
    pub iterations: u32,
    pub warmup_excluded: u32,
    #[serde(default)]
    pub flags: MeasurementFlags,
}

/// Runner-side annotations that are not part of the dataset file format.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasurementFlags {
    /// Coefficient of variation of the post-warmup iteration totals.
    pub cv: Option<f64>,
    /// Set when the run stopped on the duration cap before reaching the
    /// variability target.
    pub variability_unmet: bool,
    /// Set when an endpoint returned a different number of tokens than asked.
    pub token_mismatch: bool,
}

impl Measurement {
    /// Derives ITL and THP from a TTFT and a total request time.
    ///
    /// ITL is the generation time excluding TTFT divided by `output - 1`, so
    /// `thp = batch / itl` holds as an identity.
    pub fn from_timings(point: SweepPoint, ttft_ms: f64, total_ms: f64) -> Self {
        let generation_ms = total_ms - ttft_ms;
        Self::from_parts(point, ttft_ms, generation_ms, total_ms / 1e3)
    }

    /// Like [`Measurement::from_timings`] but with the generation (decode) time
    /// and experiment duration given separately.
    pub fn from_parts(point: SweepPoint, ttft_ms: f64, generation_ms: f64, duration_s: f64) -> Self {
        let (itl_ms, thp_tok_s) = if point.is_prefill_only() {
            (None, None)
        } else {
            let itl = generation_ms / f64::from(point.output - 1);
            (Some(itl), Some(thp_from_itl(point.batch, itl)))
        };
        Self {
            point,
            ttft_ms,
            itl_ms,
            thp_tok_s,
            duration_s,
            iterations: 1,
            warmup_excluded: 0,
            flags: MeasurementFlags::default(),
        }
    }

    pub fn metric(&self, metric: MetricSelector) -> Option<f64> {
        match metric {
            MetricSelector::Ttft => Some(self.ttft_ms),
            MetricSelector::Itl => self.itl_ms,
            MetricSelector::Thp => self.thp_tok_s,
        }
    }
}

/// Throughput in tokens per second for `batch` sequences at `itl_ms` per token.
pub fn thp_from_itl(batch: u32, itl_ms: f64) -> f64 {
    f64::from(batch) * 1e3 / itl_ms
}

/// Inverse of [`thp_from_itl`].
pub fn itl_from_thp(batch: u32, thp_tok_s: f64) -> f64 {
    f64::from(batch) * 1e3 / thp_tok_s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetRole {
    GroundTruth,
    Measured,
    Projected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Measured,
    Projected,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Measured => "measured",
            Provenance::Projected => "projected",
        }
    }
}

impl std::str::FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "measured" => Ok(Provenance::Measured),
            "projected" => Ok(Provenance::Projected),
            other => Err(Error::Parse(format!("unknown provenance {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub measurement: Measurement,
    pub provenance: Provenance,
}

impl Record {
    pub fn measured(measurement: Measurement) -> Self {
        Self { measurement, provenance: Provenance::Measured }
    }

    pub fn projected(measurement: Measurement) -> Self {
        Self { measurement, provenance: Provenance::Projected }
    }

    pub fn point(&self) -> SweepPoint {
        self.measurement.point
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub model_id: String,
    pub backend_id: String,
    pub device_name: String,
    pub device_count: u32,
    pub precision: String,
    pub timestamp: DateTime<Utc>,
    pub power_watts: Option<f64>,
}

impl RunMetadata {
    pub fn new(
        model_id: impl Into<String>,
        backend_id: impl Into<String>,
        device_name: impl Into<String>,
        device_count: u32,
        precision: impl Into<String>,
    ) -> Self {
        Self {
            model_id: model_id.into(),
            backend_id: backend_id.into(),
            device_name: device_name.into(),
            device_count,
            precision: precision.into(),
            timestamp: Utc::now(),
            power_watts: None,
        }
    }
}

/// A collection of measurements playing the role of G, M or P.
///
/// Records are kept in insertion order; duplicates are representable so that
/// loaded files can be validated rather than silently deduplicated.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub role: DatasetRole,
    pub records: Vec<Record>,
    pub metadata: RunMetadata,
    /// Wall-clock time spent producing the dataset, when known.
    pub wall_time_s: Option<f64>,
}

impl Dataset {
    pub fn new(role: DatasetRole, metadata: RunMetadata) -> Self {
        Self { role, records: Vec::new(), metadata, wall_time_s: None }
    }

    pub fn push(&mut self, record: Record) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Point-to-record index. On duplicates the first record wins.
    pub fn index(&self) -> HashMap<SweepPoint, &Record> {
        let mut map = HashMap::with_capacity(self.records.len());
        for r in &self.records {
            map.entry(r.point()).or_insert(r);
        }
        map
    }

    pub fn get(&self, point: &SweepPoint) -> Option<&Record> {
        self.records.iter().find(|r| &r.point() == point)
    }

    /// Records sorted by point.
    pub fn sorted_records(&self) -> Vec<&Record> {
        let mut v: Vec<&Record> = self.records.iter().collect();
        v.sort_by_key(|r| r.point());
        v
    }

    /// Distinct `(input, output)` slices in ascending order.
    pub fn slices(&self) -> Vec<(u32, u32)> {
        let mut s: Vec<(u32, u32)> = self.records.iter().map(|r| (r.point().input, r.point().output)).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Records of one `(input, output)` slice sorted by batch.
    pub fn slice(&self, input: u32, output: u32) -> Vec<&Record> {
        let mut v: Vec<&Record> = self
            .records
            .iter()
            .filter(|r| r.point().input == input && r.point().output == output)
            .collect();
        v.sort_by_key(|r| r.point().batch);
        v
    }

    pub fn measured_count(&self) -> usize {
        self.records.iter().filter(|r| r.provenance == Provenance::Measured).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingSpec {
    pub cost_per_device_hour: f64,
    pub currency_label: String,
}

impl PricingSpec {
    pub fn new(cost_per_device_hour: f64) -> Result<Self> {
        if !(cost_per_device_hour >= 0.0) || !cost_per_device_hour.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "cost_per_device_hour must be finite and >= 0, got {cost_per_device_hour}"
            )));
        }
        Ok(Self { cost_per_device_hour, currency_label: "USD".to_string() })
    }

    /// Cost per second of `device_count` devices.
    pub fn unit_cost_per_second(&self, device_count: u32) -> f64 {
        f64::from(device_count) * self.cost_per_device_hour / 3600.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricSelector {
    Ttft,
    Itl,
    Thp,
}

impl MetricSelector {
    pub fn as_str(&self) -> &'static str {
        match self {
            MetricSelector::Ttft => "ttft",
            MetricSelector::Itl => "itl",
            MetricSelector::Thp => "thp",
        }
    }
}

impl fmt::Display for MetricSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MetricSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ttft" => Ok(MetricSelector::Ttft),
            "itl" => Ok(MetricSelector::Itl),
            "thp" => Ok(MetricSelector::Thp),
            other => Err(Error::Parse(format!("unknown metric {other:?}"))),
        }
    }
}

/// One broken rule found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub point: Option<SweepPoint>,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.point {
            Some(p) => write!(f, "{p}: {}", self.rule),
            None => f.write_str(&self.rule),
        }
    }
}

/// Checks every type invariant on a dataset and reports each violation.
pub fn validate_dataset(d: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut v = |point: Option<SweepPoint>, rule: String| out.push(Violation { point, rule });

    if d.metadata.device_count == 0 {
        v(None, "device_count must be >= 1".into());
    }

    let mut seen = std::collections::HashSet::with_capacity(d.records.len());
    for r in &d.records {
        let m = &r.measurement;
        let p = m.point;
        if !seen.insert(p) {
            v(Some(p), "duplicate sweep point".into());
        }
        if p.input == 0 || p.output == 0 || p.batch == 0 {
            v(Some(p), "input, output and batch must be >= 1".into());
        }
        if !(m.ttft_ms > 0.0) {
            v(Some(p), format!("ttft must be > 0, got {}", m.ttft_ms));
        }
        if !(m.duration_s > 0.0) {
            v(Some(p), format!("duration must be > 0, got {}", m.duration_s));
        }
        if p.output > 1 {
            match (m.itl_ms, m.thp_tok_s) {
                (Some(itl), Some(thp)) => {
                    if !(itl > 0.0) {
                        v(Some(p), format!("itl must be > 0, got {itl}"));
                    }
                    if !(thp > 0.0) {
                        v(Some(p), format!("thp must be > 0, got {thp}"));
                    }
                    if itl > 0.0 && thp > 0.0 {
                        let b = f64::from(p.batch);
                        let rel = (thp * itl / 1e3 - b).abs() / b;
                        if !(rel <= THP_IDENTITY_TOL) {
                            v(Some(p), format!("thp * itl != batch (relative error {rel:.3e})"));
                        }
                    }
                }
                (None, _) => v(Some(p), "itl missing for output > 1".into()),
                (_, None) => v(Some(p), "thp missing for output > 1".into()),
            }
        } else if m.itl_ms.is_some() || m.thp_tok_s.is_some() {
            v(Some(p), "itl and thp must be absent for output = 1".into());
        }
        match d.role {
            DatasetRole::GroundTruth | DatasetRole::Measured => {
                if r.provenance != Provenance::Measured {
                    v(Some(p), format!("{:?} dataset holds a projected record", d.role));
                }
            }
            DatasetRole::Projected => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> RunMetadata {
        RunMetadata::new("m", "mock", "cpu", 1, "bf16")
    }

    fn point(i: u32, o: u32, b: u32) -> SweepPoint {
        SweepPoint::new(i, o, b).unwrap()
    }

    #[test]
    fn well_formed_record_validates() {
        let mut d = Dataset::new(DatasetRole::Measured, meta());
        d.push(Record::measured(Measurement::from_timings(point(128, 16, 4), 20.0, 170.0)));
        assert!(validate_dataset(&d).is_empty());
    }

    #[test]
    fn missing_itl_is_one_violation() {
        let mut m = Measurement::from_timings(point(128, 16, 4), 20.0, 170.0);
        m.itl_ms = None;
        let mut d = Dataset::new(DatasetRole::Measured, meta());
        d.push(Record::measured(m));
        let report = validate_dataset(&d);
        assert_eq!(report.len(), 1, "{report:?}");
        assert!(report[0].rule.contains("itl"));
    }

    #[test]
    fn duplicate_point_is_named() {
        let p = point(128, 1, 2);
        let mut d = Dataset::new(DatasetRole::Measured, meta());
        d.push(Record::measured(Measurement::from_timings(p, 5.0, 5.0)));
        d.push(Record::measured(Measurement::from_timings(p, 6.0, 6.0)));
        let report = validate_dataset(&d);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].point, Some(p));
        assert!(report[0].rule.contains("duplicate"));
    }

    #[test]
    fn measured_role_rejects_projected_records() {
        let mut d = Dataset::new(DatasetRole::GroundTruth, meta());
        d.push(Record::projected(Measurement::from_timings(point(1, 1, 1), 1.0, 1.0)));
        assert_eq!(validate_dataset(&d).len(), 1);
    }

    #[test]
    fn prefill_only_has_no_decode_metrics() {
        let m = Measurement::from_timings(point(64, 1, 3), 12.0, 12.0);
        assert_eq!(m.itl_ms, None);
        assert_eq!(m.thp_tok_s, None);
    }

    #[test]
    fn thp_itl_identity() {
        let m = Measurement::from_timings(point(64, 129, 8), 10.0, 10.0 + 128.0 * 4.0);
        assert_eq!(m.itl_ms, Some(4.0));
        assert_eq!(m.thp_tok_s, Some(2000.0));
    }

    #[test]
    fn zero_coordinates_rejected() {
        assert!(SweepPoint::new(0, 1, 1).is_err());
        assert!(SweepPoint::new(1, 0, 1).is_err());
        assert!(SweepPoint::new(1, 1, 0).is_err());
    }

    #[test]
    fn grid_points_are_ordered() {
        let g = SweepGrid::from_sorted(vec![1, 2], vec![1, 3], vec![1, 2, 4]).unwrap();
        let pts: Vec<_> = g.points().collect();
        assert_eq!(pts.len(), 12);
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
    }
}
