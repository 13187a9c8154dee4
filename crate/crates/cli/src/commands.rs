use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use fmbench_core::backends::{
    Backend, EndpointBackend, EndpointBackendConfig, SimBackend, SimBackendConfig, SyntheticPrompts,
};
use fmbench_core::costperf::{build_table, max_concurrency_within_threshold, CostPerfConfig, CostPerfTable};
use fmbench_core::io::{read_dataset, read_plan, write_dataset, write_plan};
use fmbench_core::metametrics::compare;
use fmbench_core::planner::{project_sweep_cost, SubsetScheme, SweepPlan};
use fmbench_core::projection::project;
use fmbench_core::report::{comparison_json, costperf_csv, costperf_markdown, deltas_csv, error_grid_report, CostPerfMetric};
use fmbench_core::runner::{progress_line, run_sweep, RunnerConfig};
use fmbench_core::syninput::{gen_stream, LengthDistribution, StreamSpec};
use fmbench_core::synmodel::{factor_table, geometry_sweep_spec, make_geometry, model_config_json, simulate_geometry_sweep, ModelFamily};
use fmbench_core::{Dataset, MetricSelector, PricingSpec, Provenance, RunMetadata, SweepGrid};

use crate::axis::parse_axis;
use crate::{
    Command, CostperfArgs, GeomSweepArgs, MetricsArgs, PlanArgs, ProjectArgs, ReportArgs, RunArgs, SimArgs,
    SynthInputArgs, SynthModelArgs,
};

pub const TOKEN_ENV: &str = "FMBENCH_ENDPOINT_TOKEN";

/// An error with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

type CmdResult<T = ()> = Result<T, Failure>;

fn invalid(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: e.into() }
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: e.into() }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        invalid(e)
    }
}

impl From<fmbench_core::Error> for Failure {
    fn from(e: fmbench_core::Error) -> Self {
        match e {
            fmbench_core::Error::Io(_) => runtime(e),
            other => invalid(other),
        }
    }
}

pub fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Plan(a) => plan(a),
        Command::Run(a) => run(a),
        Command::Project(a) => project_cmd(a),
        Command::Metrics(a) => metrics(a),
        Command::Costperf(a) => costperf(a),
        Command::SynthInput(a) => synth_input(a),
        Command::SynthModel(a) => synth_model(a),
        Command::GeomSweep(a) => geom_sweep(a),
        Command::Report(a) => report(a),
    }
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display())).map_err(runtime)
}

fn emit(out: Option<&Path>, contents: &str) -> CmdResult {
    match out {
        Some(p) => write_file(p, contents),
        None => std::io::stdout().write_all(contents.as_bytes()).map_err(runtime),
    }
}

fn load(path: &Path) -> CmdResult<Dataset> {
    read_dataset(path).with_context(|| format!("reading {}", path.display())).map_err(|e| {
        let io = e.downcast_ref::<fmbench_core::Error>().is_some_and(|c| matches!(c, fmbench_core::Error::Io(_)));
        Failure { code: if io { 2 } else { 1 }, error: e }
    })
}

fn load_sim(args: &SimArgs, default_preset: &str) -> CmdResult<SimBackendConfig> {
    let cfg = match &args.sim_config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(runtime)?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => match args.sim_preset.as_deref().unwrap_or(default_preset) {
            "reference" => SimBackendConfig::reference(),
            "llama8b-h100" => SimBackendConfig::llama8b_h100(),
            other => return Err(invalid(anyhow!("unknown simulator preset {other:?}"))),
        },
    };
    cfg.validate().map_err(invalid)?;
    Ok(cfg)
}

fn precision_label(bytes: u32) -> &'static str {
    match bytes {
        1 => "fp8",
        2 => "bf16",
        _ => "fp32",
    }
}

fn plan(a: PlanArgs) -> CmdResult {
    let scheme: SubsetScheme = a.scheme.parse()?;
    let plan = SweepPlan::build(&parse_axis(&a.inputs)?, &parse_axis(&a.outputs)?, &parse_axis(&a.batches)?, scheme)?;
    let grid = plan.grid()?;
    eprintln!("plan: {} points ({} batch sizes)", grid.len(), plan.batches.len());
    if let Some(price) = a.estimate_price {
        let sim = load_sim(&a.sim, "reference")?;
        let model = sim.roofline();
        let iters = f64::from(RunnerConfig::default().min_iterations);
        let pricing = PricingSpec::new(price)?;
        let est = project_sweep_cost(&grid, |p| iters * model.timings(p).1, &pricing, sim.device.device_count)?;
        eprintln!("estimate: {:.3} s, {:.4} {}", est.total_seconds, est.total_cost, pricing.currency_label);
    }
    match &a.out {
        Some(p) => write_plan(p, &plan)?,
        None => {
            let mut s = serde_json::to_string_pretty(&plan).map_err(runtime)?;
            s.push('\n');
            emit(None, &s)?;
        }
    }
    Ok(())
}

fn run(a: RunArgs) -> CmdResult {
    let plan = read_plan(&a.plan).with_context(|| format!("reading {}", a.plan.display()))?;
    let grid = plan.grid()?;
    let rc = RunnerConfig {
        min_iterations: a.min_iterations,
        variability_target: a.cv_target,
        warmup_fraction: a.warmup_fraction,
        max_duration: a.max_duration,
    };
    rc.validate().map_err(invalid)?;

    match a.backend.as_str() {
        "sim" => {
            let cfg = load_sim(&a.sim, "reference")?;
            let mut meta = RunMetadata::new(
                a.model_id.clone().unwrap_or_else(|| cfg.geometry.label()),
                "",
                a.device_name.clone().unwrap_or_else(|| "simulated".into()),
                a.device_count.unwrap_or(cfg.device.device_count),
                a.precision.clone().unwrap_or_else(|| precision_label(cfg.precision_bytes).into()),
            );
            meta.power_watts = a.power_watts;
            let mut be = SimBackend::new(cfg, a.seed).map_err(invalid)?;
            execute(&mut be, &grid, &rc, meta, &a.out)
        }
        "endpoint" => {
            let base_url = a.endpoint_url.clone().ok_or_else(|| anyhow!("--endpoint-url is required for the endpoint backend"))?;
            let model_name = a.model_name.clone().ok_or_else(|| anyhow!("--model-name is required for the endpoint backend"))?;
            let cfg = EndpointBackendConfig {
                base_url,
                model_name: model_name.clone(),
                request_timeout: a.request_timeout,
                api_key: std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            };
            let mut meta = RunMetadata::new(
                a.model_id.clone().unwrap_or(model_name),
                "",
                a.device_name.clone().unwrap_or_else(|| "unknown".into()),
                a.device_count.unwrap_or(1),
                a.precision.clone().unwrap_or_else(|| "unknown".into()),
            );
            meta.power_watts = a.power_watts;
            let prompts = SyntheticPrompts::new(a.vocab, a.seed);
            let mut be = EndpointBackend::new(cfg, Box::new(prompts)).map_err(invalid)?;
            execute(&mut be, &grid, &rc, meta, &a.out)
        }
        other => Err(invalid(anyhow!("unknown backend {other:?}; expected `sim` or `endpoint`"))),
    }
}

fn execute<B: Backend>(be: &mut B, grid: &SweepGrid, rc: &RunnerConfig, mut meta: RunMetadata, out: &Path) -> CmdResult {
    meta.backend_id = be.id().to_string();
    match run_sweep(be, grid, rc, meta, |m| eprintln!("{}", progress_line(m))) {
        Ok(d) => {
            write_dataset(out, &d)?;
            eprintln!("wrote {} points to {}", d.len(), out.display());
            Ok(())
        }
        Err(e) => {
            let n = e.partial.len();
            write_dataset(out, &e.partial)?;
            Err(runtime(anyhow!(e).context(format!("sweep aborted; {n} completed points written to {}", out.display()))))
        }
    }
}

fn parse_metrics(s: &str) -> CmdResult<Vec<MetricSelector>> {
    s.split(',')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .map(|m| m.parse::<MetricSelector>().map_err(Failure::from))
        .collect()
}

fn project_cmd(a: ProjectArgs) -> CmdResult {
    let m = load(&a.measured)?;
    let targets = parse_axis(&a.batches)?;
    let p = project(&m, &targets, &parse_metrics(&a.metrics)?)?;
    write_dataset(&a.out, &p)?;
    eprintln!(
        "projected {} points ({} measured) to {}",
        p.len(),
        p.measured_count(),
        a.out.display()
    );
    Ok(())
}

fn metrics(a: MetricsArgs) -> CmdResult {
    let g = load(&a.ground)?;
    let p = load(&a.projected)?;
    let metric: MetricSelector = a.metric.parse()?;
    let c = compare(&g, &p, metric, &PricingSpec::new(a.price)?)?;
    emit(a.out.as_deref(), &comparison_json(&c))?;
    if let Some(path) = &a.deltas {
        write_file(path, &deltas_csv(&c))?;
    }
    if !c.residue.is_empty() {
        eprintln!("warning: {} unpaired points left out", c.residue.len());
    }
    Ok(())
}

/// The requested slice, or the only decode slice shared by every dataset.
fn pick_slice(datasets: &[Dataset], input: Option<u32>, output: Option<u32>) -> CmdResult<(u32, u32)> {
    let mut common: Option<BTreeSet<(u32, u32)>> = None;
    for d in datasets {
        let s: BTreeSet<(u32, u32)> = d
            .slices()
            .into_iter()
            .filter(|&(i, o)| o > 1 && input.is_none_or(|x| x == i) && output.is_none_or(|x| x == o))
            .collect();
        common = Some(match common {
            None => s,
            Some(c) => c.intersection(&s).copied().collect(),
        });
    }
    let common: Vec<_> = common.unwrap_or_default().into_iter().collect();
    match common.as_slice() {
        [one] => Ok(*one),
        [] => Err(invalid(anyhow!("no decode slice common to all datasets"))),
        many => Err(invalid(anyhow!(
            "several decode slices match; pick one with --input/--output: {}",
            many.iter().map(|(i, o)| format!("i={i} o={o}")).collect::<Vec<_>>().join(", ")
        ))),
    }
}

fn costperf_table(paths: &[PathBuf], price: f64, threshold: f64, per_node: u32, input: Option<u32>, output: Option<u32>) -> CmdResult<(CostPerfTable, CostPerfConfig, Vec<Dataset>)> {
    let datasets = paths.iter().map(|p| load(p)).collect::<CmdResult<Vec<_>>>()?;
    let cfg = CostPerfConfig { latency_threshold: threshold, pricing: PricingSpec::new(price)?, devices_per_node: per_node };
    let slice = pick_slice(&datasets, input, output)?;
    let table = build_table(&datasets, &cfg, slice)?;
    Ok((table, cfg, datasets))
}

fn concurrency_summary(table: &CostPerfTable, cfg: &CostPerfConfig, datasets: &[Dataset]) -> String {
    let mut s = format!("Max concurrency within {} ms/token:\n\n", cfg.latency_threshold);
    for (opt, d) in table.options.iter().zip(datasets) {
        let b = max_concurrency_within_threshold(d, cfg, (table.input_size, table.output_size));
        let _ = writeln!(s, "- {}: {}", opt.label, b.map_or_else(|| "none".to_string(), |b| b.to_string()));
    }
    s
}

fn costperf(a: CostperfArgs) -> CmdResult {
    let (table, cfg, datasets) =
        costperf_table(&a.datasets, a.price, a.threshold, a.devices_per_node, a.input, a.output)?;
    std::fs::create_dir_all(&a.out_dir).map_err(runtime)?;
    for metric in CostPerfMetric::ALL {
        write_file(&a.out_dir.join(format!("{}.csv", metric.name())), &costperf_csv(&table, metric))?;
    }
    let md = format!(
        "# Cost-performance\n\n{}\n{}",
        costperf_markdown(&table),
        concurrency_summary(&table, &cfg, &datasets)
    );
    write_file(&a.out_dir.join("costperf.md"), &md)?;
    eprintln!("wrote cost-performance tables to {}", a.out_dir.display());
    Ok(())
}

#[derive(serde::Serialize)]
struct PromptLine<'a> {
    tokens: &'a [u32],
}

fn synth_input(a: SynthInputArgs) -> CmdResult {
    let dist: LengthDistribution = a.dist.parse()?;
    let spec = StreamSpec::new(dist, a.correlation, a.batch_size, a.stream_length, a.vocab, a.seed);
    let stream = gen_stream(&spec)?;
    let mut s = String::new();
    for prompt in stream.iter().flatten() {
        s.push_str(&serde_json::to_string(&PromptLine { tokens: prompt }).map_err(runtime)?);
        s.push('\n');
    }
    write_file(&a.out, &s)?;
    let mut manifest = serde_json::to_string_pretty(&spec).map_err(runtime)?;
    manifest.push('\n');
    write_file(&a.out.with_extension("manifest.json"), &manifest)?;
    eprintln!("wrote {} prompts to {}", spec.request_count(), a.out.display());
    Ok(())
}

fn synth_model(a: SynthModelArgs) -> CmdResult {
    let family: ModelFamily = a.family.parse()?;
    let g = make_geometry(a.hidden, a.layers, a.vocab, family)?;
    emit(a.out.as_deref(), &model_config_json(&g))
}

fn geom_sweep(a: GeomSweepArgs) -> CmdResult {
    let family: ModelFamily = a.family.parse()?;
    let geometries = geometry_sweep_spec(&parse_axis(&a.dims)?, &parse_axis(&a.layers)?, a.vocab, family)?;
    let template = SimBackendConfig { fixed_overhead: a.overhead, ..load_sim(&a.sim, "llama8b-h100")? };
    template.validate().map_err(invalid)?;
    let sweep = simulate_geometry_sweep(&geometries, &template, a.input, a.output, a.max_batch);
    let table = factor_table(&sweep, a.threshold)?;
    eprintln!("geometry sweep: {} geometries", table.columns.len());
    emit(a.out.as_deref(), &table.to_csv())
}

fn output_slice(d: &Dataset, output: u32) -> Dataset {
    let mut s = Dataset::new(d.role, d.metadata.clone());
    s.wall_time_s = d.wall_time_s;
    s.records = d.records.iter().filter(|r| r.point().output == output).cloned().collect();
    s
}

fn subset_size(p: &Dataset) -> usize {
    p.records
        .iter()
        .filter(|r| r.provenance == Provenance::Measured)
        .map(|r| r.point().batch)
        .collect::<BTreeSet<_>>()
        .len()
}

fn report(a: ReportArgs) -> CmdResult {
    let g = load(&a.ground)?;
    let pricing = PricingSpec::new(a.price)?;
    let outputs: BTreeSet<u32> = g.records.iter().map(|r| r.point().output).collect();

    let mut grid_stats = BTreeMap::new();
    let mut summary = String::from(
        "| projected | measured batches | metric | mean abs delta | p90 abs delta | E | speedup |\n|---|---|---|---|---|---|---|\n",
    );
    for path in &a.projected {
        let p = load(path)?;
        let k = subset_size(&p);
        let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        for &o in &outputs {
            let metric = if o == 1 { MetricSelector::Ttft } else { MetricSelector::Itl };
            let c = compare(&output_slice(&g, o), &output_slice(&p, o), metric, &pricing)
                .with_context(|| format!("{name}, output {o}"))?;
            if grid_stats.insert((k, o), c.stats).is_some() {
                return Err(invalid(anyhow!("two projected datasets measure {k} batch sizes")));
            }
        }
        for metric in [MetricSelector::Ttft, MetricSelector::Itl] {
            let Ok(c) = compare(&g, &p, metric, &pricing) else { continue };
            let _ = writeln!(
                summary,
                "| {name} | {k} | {} | {:.4} | {:.4} | {:.2} | {:.2} |",
                metric.as_str().to_uppercase(),
                c.stats.mean_abs,
                c.stats.p90_abs,
                c.efficiency,
                c.speedup
            );
        }
    }

    let grid = error_grid_report(&grid_stats);
    let mut md = String::from("# Benchmark report\n\n");
    let _ = writeln!(md, "Ground truth: `{}` ({} points, model `{}` on {} x{})\n", a.ground.display(), g.len(), g.metadata.model_id, g.metadata.device_name, g.metadata.device_count);
    md.push_str("## Error grid\n\nMean |delta| per measured-subset size; bands: green <= 0.05, yellow <= 0.10, orange <= 0.50, red above.\n\n");
    md.push_str(&grid.to_markdown());
    md.push_str("\n## Comparisons\n\n");
    md.push_str(&summary);
    if !a.costperf.is_empty() {
        let (table, cfg, datasets) = costperf_table(&a.costperf, a.price, a.threshold, 8, None, None)?;
        md.push_str("\n## Cost-performance\n\n");
        md.push_str(&costperf_markdown(&table));
        md.push('\n');
        md.push_str(&concurrency_summary(&table, &cfg, &datasets));
    }
    write_file(&a.out, &md)?;
    eprintln!("wrote report to {}", a.out.display());
    Ok(())
}
