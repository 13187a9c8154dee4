//! Experiment execution with the iteration / warmup / variability stopping
//! protocol, and sequential sweeps that assemble measured datasets.
//!
//! The duration budget is accounted in backend-reported call time, so a
//! simulated backend consumes simulated seconds rather than wall time.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{Backend, BackendError};
use crate::stats::{cv, median};
use crate::types::{Dataset, DatasetRole, Measurement, MeasurementFlags, Record, RunMetadata, SweepGrid, SweepPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunnerConfig {
    pub min_iterations: u32,
    /// Target coefficient of variation of post-warmup iteration totals.
    pub variability_target: f64,
    pub warmup_fraction: f64,
    /// Seconds.
    pub max_duration: f64,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        Self { min_iterations: 10, variability_target: 0.05, warmup_fraction: 0.20, max_duration: 60.0 }
    }
}

impl RunnerConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        let ok = self.min_iterations >= 2
            && self.variability_target > 0.0
            && self.variability_target < 1.0
            && (0.0..1.0).contains(&self.warmup_fraction)
            && self.max_duration > 0.0;
        if ok {
            Ok(())
        } else {
            Err(RunError::Config(format!("{self:?}")))
        }
    }

    /// `ceil(warmup_fraction * iterations)`, robust to representation error
    /// in the fraction (0.2 * 15 must give 3, not 4).
    pub fn warmup_count(&self, iterations: u32) -> u32 {
        let raw = self.warmup_fraction * f64::from(iterations);
        ((raw - 1e-9).ceil().max(0.0) as u32).min(iterations)
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid runner configuration: {0}")]
    Config(String),
    #[error("backend failure at {point} on attempt {attempt}: {source}")]
    Backend {
        point: SweepPoint,
        attempt: u32,
        #[source]
        source: BackendError,
    },
    #[error("all samples consumed by warmup at {0}")]
    AllWarmup(SweepPoint),
}

impl RunError {
    pub fn point(&self) -> Option<SweepPoint> {
        match self {
            RunError::Config(_) => None,
            RunError::Backend { point, .. } | RunError::AllWarmup(point) => Some(*point),
        }
    }
}

/// Runs one experiment until the variability target is met after the minimum
/// iteration count, or until one more iteration would overrun the budget.
pub fn run_point<B: Backend + ?Sized>(backend: &mut B, point: SweepPoint, cfg: &RunnerConfig) -> Result<Measurement, RunError> {
    cfg.validate()?;
    let mut ttfts: Vec<f64> = Vec::new();
    let mut totals: Vec<f64> = Vec::new();
    let mut token_mismatch = false;
    let mut elapsed_s = 0.0;
    let budget_s = cfg.max_duration;

    let (variability_met, cv_value) = loop {
        let attempt = totals.len() as u32;
        let t = backend
            .call(point)
            .map_err(|source| RunError::Backend { point, attempt, source })?;
        ttfts.push(t.ttft_ms);
        totals.push(t.total_ms);
        token_mismatch |= t.token_mismatch;
        elapsed_s += t.total_ms / 1e3;

        let n = totals.len() as u32;
        let warm = cfg.warmup_count(n) as usize;
        let current_cv = cv(&totals[warm..]);
        if n >= cfg.min_iterations {
            if let Some(c) = current_cv {
                if c < cfg.variability_target {
                    break (true, Some(c));
                }
            }
        }
        // The last call predicts the next one.
        if elapsed_s + t.total_ms / 1e3 > budget_s {
            break (false, current_cv);
        }
    };

    let n = totals.len() as u32;
    let warm = cfg.warmup_count(n);
    let from = warm as usize;
    if from >= totals.len() {
        return Err(RunError::AllWarmup(point));
    }
    let ttft = median(&ttfts[from..]).expect("non-empty");
    let total = median(&totals[from..]).expect("non-empty");
    let decode: Vec<f64> = totals[from..].iter().zip(&ttfts[from..]).map(|(t, f)| t - f).collect();
    let generation = median(&decode).expect("non-empty");

    let mut m = Measurement::from_parts(point, ttft, generation, total / 1e3);
    m.iterations = n;
    m.warmup_excluded = warm;
    m.flags = MeasurementFlags { cv: cv_value, variability_unmet: !variability_met, token_mismatch };
    Ok(m)
}

/// A failed sweep with everything measured before the failure.
#[derive(Debug, Error)]
#[error("sweep stopped at {point}: {source}")]
pub struct SweepError {
    pub point: SweepPoint,
    #[source]
    pub source: RunError,
    pub partial: Box<Dataset>,
}

/// Runs every grid point sequentially in ascending `(input, output, batch)`
/// order. `on_point` sees each measurement as soon as it completes.
pub fn run_sweep<B, F>(
    backend: &mut B,
    grid: &SweepGrid,
    cfg: &RunnerConfig,
    meta: RunMetadata,
    mut on_point: F,
) -> Result<Dataset, SweepError>
where
    B: Backend + ?Sized,
    F: FnMut(&Measurement),
{
    let started = Instant::now();
    let mut dataset = Dataset::new(DatasetRole::Measured, meta);
    for point in grid.points() {
        match run_point(backend, point, cfg) {
            Ok(m) => {
                on_point(&m);
                dataset.push(Record::measured(m));
            }
            Err(source) => {
                dataset.wall_time_s = Some(started.elapsed().as_secs_f64());
                return Err(SweepError { point, source, partial: Box::new(dataset) });
            }
        }
    }
    dataset.wall_time_s = Some(started.elapsed().as_secs_f64());
    Ok(dataset)
}

/// The per-point progress line written to standard error.
pub fn progress_line(m: &Measurement) -> String {
    let cv = m.flags.cv.map(|c| format!("{c:.4}")).unwrap_or_else(|| "nan".into());
    let itl = m.itl_ms.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
    let mut line = format!(
        "point i={} o={} b={} iters={} cv={} ttft_ms={:.4} itl_ms={}",
        m.point.input, m.point.output, m.point.batch, m.iterations, cv, m.ttft_ms, itl
    );
    if m.flags.variability_unmet {
        line.push_str(" variability-target-unmet");
    }
    if m.flags.token_mismatch {
        line.push_str(" token-mismatch");
    }
    line
}
