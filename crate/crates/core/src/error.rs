use thiserror::Error;

use crate::types::SweepPoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty axis: {0}")]
    EmptyAxis(&'static str),
    #[error("axis {0} must be strictly ascending")]
    UnsortedAxis(&'static str),
    #[error("axis {0} contains 0; sizes must be >= 1")]
    ZeroOnAxis(&'static str),
    #[error("invalid sweep point {0}: all sizes must be >= 1")]
    InvalidPoint(SweepPoint),
    #[error("subset larger than axis: requested {requested}, axis has {available}")]
    SubsetTooLarge { requested: usize, available: usize },
    #[error("invalid subset scheme: {0}")]
    InvalidScheme(String),
    #[error("negative time estimate at {0}")]
    NegativeEstimate(SweepPoint),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("extrapolation required at b={batch} for slice (i={input}, o={output})")]
    ExtrapolationRequired { input: u32, output: u32, batch: u32 },
    #[error("no comparable points")]
    NoComparablePoints,
    #[error("unpaired datasets: {0} point(s) present on only one side")]
    Unpaired(usize),
    #[error("degenerate pair: f_g + f_p = 0")]
    DegeneratePair,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("accuracy factor out of range: {0}")]
    AccuracyOutOfRange(f64),
    #[error("cost must be > 0, got C_G={cost_g}, C_P={cost_p}")]
    NonPositiveCost { cost_g: f64, cost_p: f64 },
    #[error("throughput must be > 0, got {0}")]
    NonPositiveThroughput(f64),
    #[error("slice (i={input}, o={output}) missing from dataset {dataset}")]
    MissingSlice { dataset: String, input: u32, output: u32 },
    #[error("hidden must be multiple of 64, got {0}")]
    HiddenNotMultipleOf64(u32),
    #[error("batch ladder for {0} is not consecutive powers of two")]
    BadBatchLadder(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
