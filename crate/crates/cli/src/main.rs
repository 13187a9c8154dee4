//! `fmbench`: plan, run, project and score reduced inference benchmark sweeps.
//!
//! Exit codes: 0 on success, 1 on usage or validation errors, 2 on backend or
//! runtime errors.

mod axis;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "fmbench", version, about = "Reduced-sweep benchmarking for foundation-model inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a sweep plan JSON from axes and a subset scheme.
    Plan(PlanArgs),
    /// Execute a plan against a backend and write the dataset CSV.
    Run(RunArgs),
    /// Fill unmeasured batch sizes by interpolation.
    Project(ProjectArgs),
    /// Score a projected dataset against ground truth.
    Metrics(MetricsArgs),
    /// Cost-performance tables across hardware options.
    Costperf(CostperfArgs),
    /// Generate a synthetic prompt stream.
    SynthInput(SynthInputArgs),
    /// Emit a synthetic model config JSON.
    SynthModel(SynthModelArgs),
    /// Throughput doubling factors over a grid of model geometries.
    GeomSweep(GeomSweepArgs),
    /// Bundle error grids, comparisons and cost tables into one markdown file.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Simulator config JSON; overrides --sim-preset.
    #[arg(long)]
    pub sim_config: Option<PathBuf>,
    /// Built-in simulator config: `reference` (default) or `llama8b-h100`
    /// (default for `geom-sweep`).
    #[arg(long)]
    pub sim_preset: Option<String>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long, default_value = "1024")]
    pub inputs: String,
    #[arg(long, default_value = "1,128")]
    pub outputs: String,
    #[arg(long, default_value = "1..128")]
    pub batches: String,
    /// `full`, `pow2` or `even:<k>`.
    #[arg(long, default_value = "full")]
    pub scheme: String,
    /// Print the simulated wall time and cost of the plan at this $/device-hour.
    #[arg(long)]
    pub estimate_price: Option<f64>,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Plan JSON path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub plan: PathBuf,
    /// `sim` or `endpoint`.
    #[arg(long, default_value = "sim")]
    pub backend: String,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Base URL of an OpenAI-compatible server.
    #[arg(long)]
    pub endpoint_url: Option<String>,
    /// Model name sent in each request.
    #[arg(long)]
    pub model_name: Option<String>,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 600.0)]
    pub request_timeout: f64,
    /// Vocabulary size for random prompt tokens.
    #[arg(long, default_value_t = 32000)]
    pub vocab: u32,
    #[arg(long, default_value_t = 10)]
    pub min_iterations: u32,
    #[arg(long, default_value_t = 0.05)]
    pub cv_target: f64,
    #[arg(long, default_value_t = 0.20)]
    pub warmup_fraction: f64,
    /// Seconds of backend time per point.
    #[arg(long, default_value_t = 60.0)]
    pub max_duration: f64,
    #[arg(long)]
    pub model_id: Option<String>,
    #[arg(long)]
    pub device_name: Option<String>,
    #[arg(long)]
    pub device_count: Option<u32>,
    #[arg(long)]
    pub precision: Option<String>,
    #[arg(long)]
    pub power_watts: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Dataset CSV path; metadata goes to `<stem>.meta.json` beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub measured: PathBuf,
    /// Target batch sizes.
    #[arg(long)]
    pub batches: String,
    /// Metrics the projection is for, e.g. `ttft,itl` or `thp`.
    #[arg(long, default_value = "ttft,itl")]
    pub metrics: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub ground: PathBuf,
    #[arg(long)]
    pub projected: PathBuf,
    #[arg(long, default_value = "itl")]
    pub metric: String,
    /// $/device-hour; 0 compares cost in seconds.
    #[arg(long, default_value_t = 0.0)]
    pub price: f64,
    /// Report JSON path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-point delta CSV.
    #[arg(long)]
    pub deltas: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CostperfArgs {
    /// One dataset per hardware option.
    #[arg(long, num_args = 1.., required = true)]
    pub datasets: Vec<PathBuf>,
    #[arg(long)]
    pub price: f64,
    /// ITL threshold in ms/token (inclusive).
    #[arg(long, default_value_t = 50.0)]
    pub threshold: f64,
    #[arg(long, default_value_t = 8)]
    pub devices_per_node: u32,
    #[arg(long)]
    pub input: Option<u32>,
    #[arg(long)]
    pub output: Option<u32>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthInputArgs {
    /// `constant:L`, `uniform:MIN:MAX` or `normal:MEAN:SD:MAX`.
    #[arg(long)]
    pub dist: String,
    #[arg(long, default_value_t = 0.0)]
    pub correlation: f64,
    #[arg(long, default_value_t = 1)]
    pub batch_size: u32,
    /// Number of batches.
    #[arg(long, default_value_t = 1)]
    pub stream_length: u32,
    #[arg(long, default_value_t = 32000)]
    pub vocab: u32,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// JSON-lines prompt file; the manifest is written to `<stem>.manifest.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthModelArgs {
    #[arg(long)]
    pub hidden: u32,
    #[arg(long)]
    pub layers: u32,
    #[arg(long, default_value_t = 32000)]
    pub vocab: u32,
    /// `encoder` or `decoder`.
    #[arg(long, default_value = "decoder")]
    pub family: String,
    /// Config JSON path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GeomSweepArgs {
    #[arg(long, default_value = "128..1024:128")]
    pub dims: String,
    #[arg(long, default_value = "1,4,8,12,16,20,24,28,32")]
    pub layers: String,
    #[arg(long, default_value_t = 32000)]
    pub vocab: u32,
    #[arg(long, default_value = "decoder")]
    pub family: String,
    #[arg(long, default_value_t = 128)]
    pub input: u32,
    #[arg(long, default_value_t = 128)]
    pub output: u32,
    #[arg(long, default_value_t = 65536)]
    pub max_batch: u32,
    /// Per-step overhead in seconds; replaces the simulator config's value.
    #[arg(long, default_value_t = 1e-5)]
    pub overhead: f64,
    /// Doubling factor at or below which throughput counts as saturated.
    #[arg(long, default_value_t = 1.05)]
    pub threshold: f64,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Factor table CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub ground: PathBuf,
    /// Projected datasets, one per subset scheme.
    #[arg(long, num_args = 1.., required = true)]
    pub projected: Vec<PathBuf>,
    /// Datasets for the cost-performance section.
    #[arg(long, num_args = 1..)]
    pub costperf: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub price: f64,
    #[arg(long, default_value_t = 50.0)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", render_chain(&f.error));
            ExitCode::from(f.code)
        }
    }
}

/// Joins the error chain, skipping causes already spelled out by their parent.
fn render_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut shown = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if shown.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
        shown = msg;
    }
    out
}
