//! Plain-text report rendering: color-banded error grids, cost-performance
//! tables and comparison summaries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::costperf::{CostPerfCell, CostPerfTable};
use crate::metametrics::{Comparison, DeltaStats};
use crate::projection::Side;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Green,
    Yellow,
    Orange,
    Red,
}

impl Band {
    /// Upper edges are inclusive: 0.05 is still green.
    pub fn of(value: f64) -> Band {
        if value <= 0.05 {
            Band::Green
        } else if value <= 0.10 {
            Band::Yellow
        } else if value <= 0.50 {
            Band::Orange
        } else {
            Band::Red
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Band::Green => "green",
            Band::Yellow => "yellow",
            Band::Orange => "orange",
            Band::Red => "red",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridCell {
    pub value: f64,
    pub band: Band,
}

/// Rows are output sizes (output 1 is the TTFT row), columns are subset sizes
/// in descending order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorGrid {
    pub subset_sizes: Vec<usize>,
    pub output_sizes: Vec<u32>,
    pub cells: BTreeMap<(usize, u32), GridCell>,
}

fn row_label(output: u32) -> String {
    if output == 1 {
        "TTFT".to_string()
    } else {
        format!("ITL o={output}")
    }
}

/// Bands the mean magnitude of each `(subset size, output size)` entry.
pub fn error_grid_report(stats_by_config: &BTreeMap<(usize, u32), DeltaStats>) -> ErrorGrid {
    let subset_sizes: BTreeSet<usize> = stats_by_config.keys().map(|k| k.0).collect();
    let output_sizes: BTreeSet<u32> = stats_by_config.keys().map(|k| k.1).collect();
    let cells = stats_by_config
        .iter()
        .map(|(&k, s)| (k, GridCell { value: s.mean_abs, band: Band::of(s.mean_abs) }))
        .collect();
    ErrorGrid {
        subset_sizes: subset_sizes.into_iter().rev().collect(),
        output_sizes: output_sizes.into_iter().collect(),
        cells,
    }
}

impl ErrorGrid {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("row,subset_size,mean_abs,band\n");
        for &o in &self.output_sizes {
            for &k in &self.subset_sizes {
                if let Some(c) = self.cells.get(&(k, o)) {
                    let _ = writeln!(s, "{},{},{},{}", row_label(o), k, c.value, c.band.as_str());
                }
            }
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| metric |");
        for k in &self.subset_sizes {
            let _ = write!(s, " {k} |");
        }
        s.push_str("\n|---|");
        s.push_str(&"---|".repeat(self.subset_sizes.len()));
        s.push('\n');
        for &o in &self.output_sizes {
            let _ = write!(s, "| {} |", row_label(o));
            for &k in &self.subset_sizes {
                match self.cells.get(&(k, o)) {
                    Some(c) => {
                        let _ = write!(s, " {:.3} ({}) |", c.value, c.band.as_str());
                    }
                    None => s.push_str("  |"),
                }
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostPerfMetric {
    Itl,
    Thp,
    ThpPerDevice,
    DollarsPerMillion,
}

impl CostPerfMetric {
    pub const ALL: [CostPerfMetric; 4] =
        [CostPerfMetric::Itl, CostPerfMetric::Thp, CostPerfMetric::ThpPerDevice, CostPerfMetric::DollarsPerMillion];

    pub fn name(&self) -> &'static str {
        match self {
            CostPerfMetric::Itl => "itl",
            CostPerfMetric::Thp => "thp",
            CostPerfMetric::ThpPerDevice => "thp_per_device",
            CostPerfMetric::DollarsPerMillion => "dollars_per_million",
        }
    }

    fn title(&self) -> &'static str {
        match self {
            CostPerfMetric::Itl => "ITL (ms/token)",
            CostPerfMetric::Thp => "THP (tokens/s)",
            CostPerfMetric::ThpPerDevice => "THP/DEVICE (tokens/s/device)",
            CostPerfMetric::DollarsPerMillion => "$/M (per million tokens)",
        }
    }

    fn value(&self, c: &CostPerfCell) -> f64 {
        match self {
            CostPerfMetric::Itl => c.itl,
            CostPerfMetric::Thp => c.thp,
            CostPerfMetric::ThpPerDevice => c.thp_per_device,
            CostPerfMetric::DollarsPerMillion => c.dollars_per_million,
        }
    }

    fn is_best(&self, c: &CostPerfCell) -> bool {
        match self {
            CostPerfMetric::Thp => c.best_thp,
            CostPerfMetric::ThpPerDevice => c.best_thp_per_device,
            _ => false,
        }
    }
}

/// Long-form CSV of one table with the markings as boolean columns.
pub fn costperf_csv(table: &CostPerfTable, metric: CostPerfMetric) -> String {
    let mut s = format!(
        "option,device_count,batch,{},within_threshold,best_thp,best_thp_per_device\n",
        metric.name()
    );
    for (row, opt) in table.options.iter().enumerate() {
        for (col, b) in table.batches.iter().enumerate() {
            match &table.cells[row][col] {
                Some(c) => {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{},{}",
                        opt.label,
                        opt.device_count,
                        b,
                        metric.value(c),
                        c.within_threshold,
                        c.best_thp,
                        c.best_thp_per_device
                    );
                }
                None => {
                    let _ = writeln!(s, "{},{},{},,,,", opt.label, opt.device_count, b);
                }
            }
        }
    }
    s
}

/// Markdown rendering: `*v*` marks cells within the latency threshold and
/// `[v]` the best option of the column.
pub fn costperf_markdown(table: &CostPerfTable) -> String {
    let mut s = format!("Slice: input={} output={}\n\n", table.input_size, table.output_size);
    for metric in CostPerfMetric::ALL {
        let _ = writeln!(s, "### {}\n", metric.title());
        s.push_str("| option |");
        for b in &table.batches {
            let _ = write!(s, " b={b} |");
        }
        s.push_str("\n|---|");
        s.push_str(&"---|".repeat(table.batches.len()));
        s.push('\n');
        for (row, opt) in table.options.iter().enumerate() {
            let _ = write!(s, "| {} |", opt.label);
            for col in 0..table.batches.len() {
                match &table.cells[row][col] {
                    Some(c) => {
                        let mut v = format!("{:.2}", metric.value(c));
                        if c.within_threshold {
                            v = format!("*{v}*");
                        }
                        if metric.is_best(c) {
                            v = format!("[{v}]");
                        }
                        let _ = write!(s, " {v} |");
                    }
                    None => s.push_str("  |"),
                }
            }
            s.push('\n');
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Serialize)]
struct ResidueJson {
    input: u32,
    output: u32,
    batch: u32,
    side: &'static str,
}

#[derive(Debug, Serialize)]
struct ComparisonJson<'a> {
    metric: &'a str,
    stats: &'a DeltaStats,
    #[serde(rename = "E")]
    efficiency: f64,
    speedup: f64,
    cost_g_seconds: f64,
    cost_p_seconds: f64,
    cost_g: f64,
    cost_p: f64,
    residue_points: Vec<ResidueJson>,
}

pub fn comparison_json(c: &Comparison) -> String {
    let residue_points = c
        .residue
        .iter()
        .map(|r| ResidueJson {
            input: r.point.input,
            output: r.point.output,
            batch: r.point.batch,
            side: match r.side {
                Side::GroundOnly => "ground",
                Side::ProjectedOnly => "projected",
            },
        })
        .collect();
    let json = ComparisonJson {
        metric: c.metric.as_str(),
        stats: &c.stats,
        efficiency: c.efficiency,
        speedup: c.speedup,
        cost_g_seconds: c.cost_g.total_seconds,
        cost_p_seconds: c.cost_p.total_seconds,
        cost_g: c.cost_g.total_cost,
        cost_p: c.cost_p.total_cost,
        residue_points,
    };
    let mut s = serde_json::to_string_pretty(&json).expect("plain struct serializes");
    s.push('\n');
    s
}

pub fn deltas_csv(c: &Comparison) -> String {
    let mut s = String::from("input,output,batch,f_g,f_p,delta\n");
    for d in &c.deltas {
        let p = d.pair.point;
        let _ = writeln!(s, "{},{},{},{},{},{}", p.input, p.output, p.batch, d.pair.f_g, d.pair.f_p, d.delta);
    }
    s
}
