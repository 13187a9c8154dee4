//! Reduced-sweep benchmarking for foundation-model inference.
//!
//! The crate plans reduced experimental sweeps over input, output and batch
//! sizes, runs them against pluggable backends, fills the unmeasured batch
//! sizes by interpolation and scores the reduced sweep against a dense
//! ground truth by cost, normalized difference and efficiency. It also builds
//! cost-performance tables and generates synthetic workloads and model
//! geometries.

pub mod backends;
pub mod costperf;
pub mod error;
pub mod io;
pub mod metametrics;
pub mod planner;
pub mod projection;
pub mod report;
pub mod runner;
pub mod stats;
pub mod syninput;
pub mod synmodel;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    validate_dataset, Dataset, DatasetRole, Measurement, MetricSelector, PricingSpec, Provenance, Record,
    RunMetadata, SweepGrid, SweepPoint, Violation,
};
