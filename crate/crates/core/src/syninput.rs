//! Synthetic text workloads: prompt batches with parameterized length
//! distributions and AR(1)-correlated lengths, plus the real-vs-synthetic
//! performance comparison.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::pair_points;
use crate::types::{Dataset, MetricSelector, SweepPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LengthDistribution {
    Constant { length: u32 },
    Uniform { min: u32, max: u32 },
    Normal { mean: f64, stddev: f64, max_len: u32 },
}

impl LengthDistribution {
    /// Inclusive bounds every emitted length respects.
    pub fn bounds(&self) -> (u32, u32) {
        match *self {
            LengthDistribution::Constant { length } => (length, length),
            LengthDistribution::Uniform { min, max } => (min, max),
            LengthDistribution::Normal { max_len, .. } => (1, max_len),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LengthDistribution::Constant { length } => length >= 1,
            LengthDistribution::Uniform { min, max } => min >= 1 && min <= max,
            LengthDistribution::Normal { mean, stddev, max_len } => {
                mean.is_finite() && stddev.is_finite() && stddev >= 0.0 && max_len >= 1
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid length distribution {self:?}")))
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            LengthDistribution::Constant { length } => f64::from(length),
            LengthDistribution::Uniform { min, max } => f64::from(rng.random_range(min..=max)),
            LengthDistribution::Normal { mean, stddev, .. } => {
                Normal::new(mean, stddev).expect("validated parameters").sample(rng)
            }
        }
    }
}

impl std::str::FromStr for LengthDistribution {
    type Err = Error;

    /// `constant:L`, `uniform:MIN:MAX` or `normal:MEAN:STDDEV:MAX`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Parse(format!("bad length distribution {s:?}"));
        let int = |x: &str| x.parse::<u32>().map_err(|_| bad());
        let float = |x: &str| x.parse::<f64>().map_err(|_| bad());
        let d = match parts.as_slice() {
            ["constant", l] => LengthDistribution::Constant { length: int(l)? },
            ["uniform", a, b] => LengthDistribution::Uniform { min: int(a)?, max: int(b)? },
            ["normal", m, sd, max] => LengthDistribution::Normal { mean: float(m)?, stddev: float(sd)?, max_len: int(max)? },
            _ => return Err(bad()),
        };
        d.validate()?;
        Ok(d)
    }
}

fn default_modality() -> String {
    "text".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub distribution: LengthDistribution,
    /// AR(1) coefficient on the latent length, in [0, 1].
    pub correlation: f64,
    pub batch_size: u32,
    /// Number of batches.
    pub stream_length: u32,
    pub vocab_size: u32,
    pub seed: u64,
    /// Only `text` is generated.
    #[serde(default = "default_modality")]
    pub modality: String,
}

impl StreamSpec {
    pub fn new(distribution: LengthDistribution, correlation: f64, batch_size: u32, stream_length: u32, vocab_size: u32, seed: u64) -> Self {
        Self { distribution, correlation, batch_size, stream_length, vocab_size, seed, modality: default_modality() }
    }

    pub fn validate(&self) -> Result<()> {
        self.distribution.validate()?;
        if !(0.0..=1.0).contains(&self.correlation) {
            return Err(Error::InvalidConfig(format!("correlation must be in [0, 1], got {}", self.correlation)));
        }
        if self.vocab_size < 2 {
            return Err(Error::InvalidConfig(format!("vocab_size must be >= 2, got {}", self.vocab_size)));
        }
        if self.modality != "text" {
            return Err(Error::InvalidConfig(format!("unsupported modality {:?}", self.modality)));
        }
        Ok(())
    }

    pub fn request_count(&self) -> usize {
        self.batch_size as usize * self.stream_length as usize
    }
}

pub fn random_tokens<R: Rng + ?Sized>(rng: &mut R, len: u32, vocab_size: u32) -> Vec<u32> {
    (0..len).map(|_| rng.random_range(0..vocab_size)).collect()
}

/// Per-request lengths in stream order: `x_t = ρ·x_{t-1} + (1-ρ)·fresh_t`,
/// rounded and clipped to the distribution bounds.
pub fn gen_lengths(spec: &StreamSpec) -> Result<Vec<u32>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = spec.distribution.bounds();
    let rho = spec.correlation;
    let mut latent: Option<f64> = None;
    let mut out = Vec::with_capacity(spec.request_count());
    for _ in 0..spec.request_count() {
        let fresh = spec.distribution.draw(&mut rng);
        let x = match latent {
            None => fresh,
            Some(prev) => rho * prev + (1.0 - rho) * fresh,
        };
        latent = Some(x);
        out.push((x.round().max(f64::from(lo)).min(f64::from(hi))) as u32);
    }
    Ok(out)
}

/// Batches of prompts (token-id sequences), deterministic in `spec.seed`.
pub fn gen_stream(spec: &StreamSpec) -> Result<Vec<Vec<Vec<u32>>>> {
    let lengths = gen_lengths(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    Ok(lengths
        .chunks(spec.batch_size.max(1) as usize)
        .map(|batch| batch.iter().map(|&len| random_tokens(&mut rng, len, spec.vocab_size)).collect())
        .collect())
}

/// Lag-1 sample autocorrelation.
pub fn lag1_autocorrelation(xs: &[f64]) -> Option<f64> {
    if xs.len() < 3 {
        return None;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let var: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    if var == 0.0 {
        return None;
    }
    let cov: f64 = xs.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    Some(cov / var)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticComparison {
    /// `(real - synth) / real * 100` per point.
    pub per_point_pct: Vec<(SweepPoint, f64)>,
    /// Geometric mean of `max/min` ratios, as a percentage above 100.
    pub geomean_pct: f64,
    pub max_pct: f64,
}

pub fn compare_real_vs_synthetic(real: &Dataset, synth: &Dataset, metric: MetricSelector) -> Result<SyntheticComparison> {
    let report = pair_points(real, synth, metric)?;
    if !report.residue.is_empty() {
        return Err(Error::Unpaired(report.residue.len()));
    }
    let mut per_point_pct = Vec::with_capacity(report.pairs.len());
    let mut log_sum = 0.0;
    for pair in &report.pairs {
        let (r, s) = (pair.f_g, pair.f_p);
        if !(r > 0.0 && s > 0.0) {
            return Err(Error::InvalidConfig(format!("non-positive metric at {}", pair.point)));
        }
        per_point_pct.push((pair.point, (r - s) / r * 100.0));
        log_sum += (r.max(s) / r.min(s)).ln();
    }
    let geomean_pct = ((log_sum / report.pairs.len() as f64).exp() - 1.0) * 100.0;
    let max_pct = per_point_pct.iter().map(|(_, p)| p.abs()).fold(0.0, f64::max);
    Ok(SyntheticComparison { per_point_pct, geomean_pct, max_pct })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{DatasetRole, Measurement, Record, RunMetadata};

    #[test]
    fn constant_stream() {
        let spec = StreamSpec::new(LengthDistribution::Constant { length: 1024 }, 0.0, 4, 2, 32000, 1);
        let s = gen_stream(&spec).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.iter().flatten().all(|p| p.len() == 1024));
        assert_eq!(s.iter().flatten().count(), 8);
        assert!(s.iter().flatten().flatten().all(|&t| t < 32000));
    }

    #[test]
    fn full_correlation_repeats_first_draw() {
        let spec = StreamSpec::new(LengthDistribution::Uniform { min: 10, max: 1000 }, 1.0, 8, 50, 100, 3);
        let l = gen_lengths(&spec).unwrap();
        assert!(l.iter().all(|&x| x == l[0]));
    }

    #[test]
    fn vocab_too_small() {
        let spec = StreamSpec::new(LengthDistribution::Constant { length: 4 }, 0.0, 1, 1, 1, 0);
        assert!(gen_stream(&spec).is_err());
    }

    #[test]
    fn normal_is_clipped() {
        let spec = StreamSpec::new(LengthDistribution::Normal { mean: 10.0, stddev: 50.0, max_len: 40 }, 0.3, 16, 100, 10, 5);
        assert!(gen_lengths(&spec).unwrap().iter().all(|&l| (1..=40).contains(&l)));
    }

    #[test]
    fn parse_distribution() {
        assert_eq!("constant:7".parse::<LengthDistribution>().unwrap(), LengthDistribution::Constant { length: 7 });
        assert_eq!("uniform:1:9".parse::<LengthDistribution>().unwrap(), LengthDistribution::Uniform { min: 1, max: 9 });
        assert!("uniform:9:1".parse::<LengthDistribution>().is_err());
        assert!("normal:1:2".parse::<LengthDistribution>().is_err());
    }

    fn thp_dataset(values: &[(u32, f64)]) -> Dataset {
        let mut d = Dataset::new(DatasetRole::Measured, RunMetadata::new("m", "b", "d", 1, "bf16"));
        for &(b, thp) in values {
            let p = SweepPoint::new(1024, 2, b).unwrap();
            let itl = crate::types::itl_from_thp(b, thp);
            d.push(Record::measured(Measurement::from_parts(p, 1.0, itl, 1.0)));
        }
        d
    }

    #[test]
    fn worst_case_pair() {
        let real = thp_dataset(&[(96, 100.0)]);
        let synth = thp_dataset(&[(96, 107.01)]);
        let c = compare_real_vs_synthetic(&real, &synth, MetricSelector::Thp).unwrap();
        assert!((c.per_point_pct[0].1 + 7.01).abs() < 1e-9);
        assert!((c.max_pct - 7.01).abs() < 1e-9);
    }

    #[test]
    fn geomean_of_two_ratios() {
        let real = thp_dataset(&[(1, 100.0), (2, 100.0)]);
        let synth = thp_dataset(&[(1, 101.0), (2, 104.0)]);
        let c = compare_real_vs_synthetic(&real, &synth, MetricSelector::Thp).unwrap();
        let expected = ((1.01f64 * 1.04).sqrt() - 1.0) * 100.0;
        assert!((c.geomean_pct - expected).abs() < 1e-9);
        assert!((c.geomean_pct - 2.489).abs() < 1e-3);
        let swapped = compare_real_vs_synthetic(&synth, &real, MetricSelector::Thp).unwrap();
        assert!((swapped.geomean_pct - c.geomean_pct).abs() < 1e-12);
    }

    #[test]
    fn identical_is_zero() {
        let d = thp_dataset(&[(1, 50.0), (2, 90.0)]);
        let c = compare_real_vs_synthetic(&d, &d, MetricSelector::Thp).unwrap();
        assert_eq!((c.geomean_pct, c.max_pct), (0.0, 0.0));
    }

    #[test]
    fn unpaired_is_error() {
        let a = thp_dataset(&[(1, 50.0), (2, 90.0)]);
        let b = thp_dataset(&[(1, 50.0)]);
        assert!(compare_real_vs_synthetic(&a, &b, MetricSelector::Thp).is_err());
    }
}
