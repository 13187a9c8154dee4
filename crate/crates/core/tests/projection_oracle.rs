//! Powers-of-two projection against a dense simulated ground truth.

use fmbench_core::backends::{SimBackend, SimBackendConfig};
use fmbench_core::metametrics::compare;
use fmbench_core::planner::{full_grid, subset_batches, SubsetScheme};
use fmbench_core::projection::project;
use fmbench_core::runner::{run_sweep, RunnerConfig};
use fmbench_core::{
    Dataset, DatasetRole, Measurement, MetricSelector, PricingSpec, Provenance, Record, RunMetadata, SweepPoint,
};

fn meta() -> RunMetadata {
    RunMetadata::new("ref-8b", "sim-roofline", "ref-accel", 1, "bf16")
}

fn simulate(batches: &[u32]) -> Dataset {
    let grid = full_grid(&[1024], &[1, 128], batches).unwrap();
    let mut be = SimBackend::new(SimBackendConfig::reference(), 0).unwrap();
    run_sweep(&mut be, &grid, &RunnerConfig::default(), meta(), |_| {}).unwrap()
}

#[test]
fn pow2_projection_tracks_dense_ground_truth() {
    let all: Vec<u32> = (1..=128).collect();
    let g = simulate(&all);
    let m = simulate(&subset_batches(&all, SubsetScheme::PowersOfTwo).unwrap());
    assert_eq!(m.len(), 16);
    let p = project(&m, &all, &[MetricSelector::Ttft, MetricSelector::Itl]).unwrap();
    assert_eq!(p.len(), g.len());
    assert_eq!(p.measured_count(), 16);

    let pricing = PricingSpec::new(5.5).unwrap();
    let itl = compare(&g, &p, MetricSelector::Itl, &pricing).unwrap();
    let ttft = compare(&g, &p, MetricSelector::Ttft, &pricing).unwrap();
    assert!(itl.stats.mean_abs <= 0.02, "ITL mean |delta| {}", itl.stats.mean_abs);
    assert!(itl.stats.mean_abs > 0.0);
    assert!(ttft.stats.mean_abs < 1e-9, "TTFT mean |delta| {}", ttft.stats.mean_abs);
    assert_eq!(itl.stats.count, 128);
    assert!(itl.efficiency > 1.0 && itl.speedup > 1.0);
}

#[test]
fn projection_is_idempotent() {
    let all: Vec<u32> = (1..=128).collect();
    let m = simulate(&subset_batches(&all, SubsetScheme::PowersOfTwo).unwrap());
    let p = project(&m, &all, &[MetricSelector::Itl]).unwrap();
    let pp = project(&p, &all, &[MetricSelector::Itl]).unwrap();
    assert_eq!(p.records, pp.records);
}

#[test]
fn affine_data_is_reproduced_exactly() {
    let ttft = |b: u32| 3.25 + 0.71 * f64::from(b);
    let itl = |b: u32| 11.5 + 0.037 * f64::from(b);
    let mut m = Dataset::new(DatasetRole::Measured, meta());
    for b in [1, 3, 10, 17, 64, 200] {
        let point = SweepPoint::new(512, 33, b).unwrap();
        let gen = itl(b) * 32.0;
        m.push(Record::measured(Measurement::from_parts(point, ttft(b), gen, (ttft(b) + gen) / 1e3)));
    }
    let targets: Vec<u32> = (1..=200).collect();
    let p = project(&m, &targets, &[MetricSelector::Ttft, MetricSelector::Itl]).unwrap();
    assert_eq!(p.len(), 200);
    for r in &p.records {
        let b = r.point().batch;
        let rm = &r.measurement;
        assert!((rm.ttft_ms - ttft(b)).abs() < 1e-12, "ttft at b={b}");
        assert!((rm.itl_ms.unwrap() - itl(b)).abs() < 1e-12, "itl at b={b}");
        let thp = f64::from(b) * 1000.0 / itl(b);
        assert!((rm.thp_tok_s.unwrap() - thp).abs() / thp < 1e-12);
        if [1, 3, 10, 17, 64, 200].contains(&b) {
            assert_eq!(r.provenance, Provenance::Measured);
        } else {
            assert_eq!(r.provenance, Provenance::Projected);
        }
    }
    let err = project(&m, &[250], &[MetricSelector::Itl]).unwrap_err();
    assert!(err.to_string().contains("extrapolation required"));
}
