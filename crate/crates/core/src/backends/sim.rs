//! Roofline simulator.
//!
//! Prefill is compute-bound: `ttft = overhead + 2·N·b·i / F`. Each decode step
//! costs `overhead + max(T_mem, T_comp(b))` where `T_mem` streams the weights
//! once and `T_comp(b) = 2·N·b / F`. Throughput therefore grows linearly with
//! batch until the crossover `b* = T_mem·F / (2N)` and is flat afterwards.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, CallTiming};
use crate::synmodel::ModelGeometry;
use crate::types::SweepPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    /// FLOP/s per device.
    pub peak_flops: f64,
    /// Bytes/s per device.
    pub mem_bandwidth: f64,
    /// Bytes per device.
    pub mem_capacity: f64,
    pub device_count: u32,
}

impl DeviceSpec {
    /// H100 SXM dense BF16 figures.
    pub fn h100(device_count: u32) -> Self {
        Self { peak_flops: 989e12, mem_bandwidth: 3.35e12, mem_capacity: 80e9, device_count }
    }

    fn validate(&self) -> Result<(), BackendError> {
        let ok = [self.peak_flops, self.mem_bandwidth, self.mem_capacity]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
            && self.device_count > 0;
        if ok {
            Ok(())
        } else {
            Err(BackendError::Config("device figures must all be strictly positive".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimBackendConfig {
    pub geometry: ModelGeometry,
    pub device: DeviceSpec,
    pub precision_bytes: u32,
    pub kv_precision_bytes: u32,
    /// Seconds added to prefill and to every decode step.
    pub fixed_overhead: f64,
    #[serde(default)]
    pub noise_fraction: f64,
    /// Add per-step kv-cache reads to the memory term.
    #[serde(default)]
    pub kv_in_bandwidth: bool,
}

impl SimBackendConfig {
    /// Llama-3.1-8B-shaped geometry (full multi-head attention) at BF16 on a
    /// single H100.
    pub fn llama8b_h100() -> Self {
        Self {
            geometry: ModelGeometry {
                hidden: 4096,
                layers: 32,
                heads: 64,
                intermediate: 4 * 4096,
                vocab: 128_256,
                max_positions: 131_072,
                family: crate::synmodel::ModelFamily::Decoder,
            },
            device: DeviceSpec::h100(1),
            precision_bytes: 2,
            kv_precision_bytes: 2,
            fixed_overhead: 2e-3,
            noise_fraction: 0.0,
            kv_in_bandwidth: false,
        }
    }

    /// The same 8B geometry on a device whose ridge point sits at `b = 100`,
    /// with room for the kv-cache of a full 1..128 batch ladder at 1k context.
    /// Zero overhead and zero noise.
    pub fn reference() -> Self {
        Self {
            device: DeviceSpec { peak_flops: 335e12, mem_bandwidth: 3.35e12, mem_capacity: 160e9, device_count: 1 },
            fixed_overhead: 0.0,
            ..Self::llama8b_h100()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        self.device.validate()?;
        self.geometry.check().map_err(|e| BackendError::Config(e.to_string()))?;
        if ![1, 2, 4].contains(&self.precision_bytes) {
            return Err(BackendError::Config(format!(
                "precision_bytes must be 1, 2 or 4, got {}",
                self.precision_bytes
            )));
        }
        if self.kv_precision_bytes == 0 {
            return Err(BackendError::Config("kv_precision_bytes must be >= 1".into()));
        }
        if !(self.noise_fraction >= 0.0) || !(self.fixed_overhead >= 0.0) {
            return Err(BackendError::Config("noise_fraction and fixed_overhead must be >= 0".into()));
        }
        Ok(())
    }

    pub fn roofline(&self) -> Roofline {
        Roofline {
            params: sim_param_count(&self.geometry) as f64,
            precision_bytes: f64::from(self.precision_bytes),
            kv_bytes_per_token: kv_bytes_per_token(&self.geometry, self.kv_precision_bytes),
            device: self.device,
            fixed_overhead: self.fixed_overhead,
            kv_in_bandwidth: self.kv_in_bandwidth,
        }
    }
}

/// Weights of `L` blocks of `12·d²` (attention 4d², MLP 8d² at 4x width) plus
/// one shared embedding matrix.
pub fn sim_param_count(g: &ModelGeometry) -> u64 {
    let d = u64::from(g.hidden);
    u64::from(g.layers) * 12 * d * d + u64::from(g.vocab) * d
}

fn kv_bytes_per_token(g: &ModelGeometry, kv_precision_bytes: u32) -> f64 {
    2.0 * f64::from(g.layers) * f64::from(g.hidden) * f64::from(kv_precision_bytes)
}

/// Closed-form timing model. All times are in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Roofline {
    pub params: f64,
    pub precision_bytes: f64,
    pub kv_bytes_per_token: f64,
    pub device: DeviceSpec,
    pub fixed_overhead: f64,
    pub kv_in_bandwidth: bool,
}

impl Roofline {
    fn devices(&self) -> f64 {
        f64::from(self.device.device_count)
    }

    pub fn ttft(&self, batch: u32, input: u32) -> f64 {
        self.fixed_overhead
            + 2.0 * self.params * f64::from(batch) * f64::from(input) / (self.device.peak_flops * self.devices())
    }

    /// Weight-streaming time of one decode step.
    pub fn t_mem(&self) -> f64 {
        self.precision_bytes * self.params / (self.device.mem_bandwidth * self.devices())
    }

    pub fn t_comp(&self, batch: u32) -> f64 {
        2.0 * self.params * f64::from(batch) / (self.device.peak_flops * self.devices())
    }

    /// Decode step time ignoring kv-cache traffic.
    pub fn step(&self, batch: u32) -> f64 {
        self.fixed_overhead + self.t_mem().max(self.t_comp(batch))
    }

    /// Decode step time with `context` tokens per sequence already cached,
    /// honouring `kv_in_bandwidth`.
    pub fn step_at(&self, batch: u32, context: u64) -> f64 {
        if !self.kv_in_bandwidth {
            return self.step(batch);
        }
        let kv = f64::from(batch) * context as f64 * self.kv_bytes_per_token
            / (self.device.mem_bandwidth * self.devices());
        self.fixed_overhead + (self.t_mem() + kv).max(self.t_comp(batch))
    }

    /// Batch at which compute time equals weight-streaming time.
    pub fn crossover_batch(&self) -> f64 {
        self.t_mem() * self.device.peak_flops * self.devices() / (2.0 * self.params)
    }

    /// Decode throughput in tokens/s ignoring kv-cache traffic.
    pub fn decode_thp(&self, batch: u32) -> f64 {
        f64::from(batch) / self.step(batch)
    }

    pub fn required_memory(&self, point: &SweepPoint) -> f64 {
        self.precision_bytes * self.params
            + self.kv_bytes_per_token * f64::from(point.batch) * (f64::from(point.input) + f64::from(point.output))
    }

    pub fn fits(&self, point: &SweepPoint) -> bool {
        self.required_memory(point) <= self.device.mem_capacity * self.devices()
    }

    /// Largest batch that fits for the given sequence lengths, if any.
    pub fn max_feasible_batch(&self, input: u32, output: u32) -> Option<u32> {
        let free = self.device.mem_capacity * self.devices() - self.precision_bytes * self.params;
        let per_seq = self.kv_bytes_per_token * (f64::from(input) + f64::from(output));
        if free < per_seq {
            return None;
        }
        let mut b = (free / per_seq).floor().min(f64::from(u32::MAX)) as u32;
        // Guard the floor against rounding at the boundary.
        while b > 0 && !self.fits(&SweepPoint { input, output, batch: b }) {
            b -= 1;
        }
        while b < u32::MAX && self.fits(&SweepPoint { input, output, batch: b + 1 }) {
            b += 1;
        }
        (b > 0).then_some(b)
    }

    /// Noise-free `(ttft, total)` for a feasible point.
    pub fn timings(&self, point: &SweepPoint) -> (f64, f64) {
        let ttft = self.ttft(point.batch, point.input);
        let steps = point.output - 1;
        let decode = if self.kv_in_bandwidth {
            (1..=steps)
                .map(|k| self.step_at(point.batch, u64::from(point.input) + u64::from(k)))
                .sum::<f64>()
        } else {
            f64::from(steps) * self.step(point.batch)
        };
        (ttft, ttft + decode)
    }
}

/// One simulated call. With `noise_fraction = 0` the result is a pure
/// function of `(cfg, point)` and `rng` is not touched.
pub fn sim_call<R: Rng + ?Sized>(
    cfg: &SimBackendConfig,
    point: SweepPoint,
    rng: &mut R,
) -> Result<CallTiming, BackendError> {
    let model = cfg.roofline();
    if !model.fits(&point) {
        return Err(BackendError::MemoryExceeded(point));
    }
    let (mut ttft, mut total) = model.timings(&point);
    if cfg.noise_fraction > 0.0 {
        let jitter = 1.0 + rng.random_range(-cfg.noise_fraction..=cfg.noise_fraction);
        ttft *= jitter;
        total *= jitter;
    }
    Ok(CallTiming { ttft_ms: ttft * 1e3, total_ms: total * 1e3, token_mismatch: false })
}

/// Simulator as a [`Backend`], with a seeded jitter source.
#[derive(Debug, Clone)]
pub struct SimBackend {
    cfg: SimBackendConfig,
    id: String,
    rng: ChaCha8Rng,
}

impl SimBackend {
    pub fn new(cfg: SimBackendConfig, seed: u64) -> Result<Self, BackendError> {
        cfg.validate()?;
        Ok(Self { cfg, id: "sim-roofline".to_string(), rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn config(&self) -> &SimBackendConfig {
        &self.cfg
    }
}

impl Backend for SimBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn call(&mut self, point: SweepPoint) -> Result<CallTiming, BackendError> {
        sim_call(&self.cfg, point, &mut self.rng)
    }
}
