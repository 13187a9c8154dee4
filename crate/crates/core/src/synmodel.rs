//! Synthetic transformer geometries, model-config emission and incremental
//! throughput-factor tables for geometry sweeps.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::SimBackendConfig;
use crate::error::{Error, Result};
use crate::types::SweepPoint;

pub const HEAD_DIM: u32 = 64;
pub const DEFAULT_SATURATION_THRESHOLD: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Encoder,
    Decoder,
}

impl ModelFamily {
    pub fn default_max_positions(&self) -> u32 {
        match self {
            ModelFamily::Encoder => 512,
            ModelFamily::Decoder => 4096,
        }
    }

    fn model_type(&self) -> &'static str {
        match self {
            ModelFamily::Encoder => "bert",
            ModelFamily::Decoder => "llama",
        }
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "encoder" => Ok(ModelFamily::Encoder),
            "decoder" => Ok(ModelFamily::Decoder),
            other => Err(Error::Parse(format!("unknown model family {other:?}"))),
        }
    }
}

/// Transformer shape. Construct through [`make_geometry`] so the head count
/// and MLP width stay tied to `hidden`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelGeometry {
    pub hidden: u32,
    pub layers: u32,
    pub heads: u32,
    pub intermediate: u32,
    pub vocab: u32,
    pub max_positions: u32,
    pub family: ModelFamily,
}

impl ModelGeometry {
    /// Checks the architectural constraints on an already-built geometry.
    pub fn check(&self) -> Result<()> {
        if self.hidden == 0 || self.hidden % HEAD_DIM != 0 {
            return Err(Error::HiddenNotMultipleOf64(self.hidden));
        }
        if self.heads * HEAD_DIM != self.hidden {
            return Err(Error::InvalidConfig(format!(
                "heads ({}) must equal hidden / {HEAD_DIM}",
                self.heads
            )));
        }
        if self.intermediate != 4 * self.hidden {
            return Err(Error::InvalidConfig(format!(
                "intermediate ({}) must equal 4 x hidden",
                self.intermediate
            )));
        }
        if self.layers < 1 || self.vocab < 2 || self.max_positions < 1 {
            return Err(Error::InvalidConfig("layers >= 1, vocab >= 2 and max_positions >= 1 required".into()));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!("d{}_l{}", self.hidden, self.layers)
    }
}

pub fn make_geometry(hidden: u32, layers: u32, vocab: u32, family: ModelFamily) -> Result<ModelGeometry> {
    if hidden == 0 || hidden % HEAD_DIM != 0 {
        return Err(Error::HiddenNotMultipleOf64(hidden));
    }
    let g = ModelGeometry {
        hidden,
        layers,
        heads: hidden / HEAD_DIM,
        intermediate: 4 * hidden,
        vocab,
        max_positions: family.default_max_positions(),
        family,
    };
    g.check()?;
    Ok(g)
}

/// Cartesian product of dimensions and layer counts, dimension-major.
pub fn geometry_sweep_spec(
    dims: &[u32],
    layer_counts: &[u32],
    vocab: u32,
    family: ModelFamily,
) -> Result<Vec<ModelGeometry>> {
    let mut out = Vec::with_capacity(dims.len() * layer_counts.len());
    for &d in dims {
        for &l in layer_counts {
            out.push(make_geometry(d, l, vocab, family)?);
        }
    }
    Ok(out)
}

/// Dimensions 128..=1024 step 128.
pub fn reference_dims() -> Vec<u32> {
    (1..=8).map(|k| 128 * k).collect()
}

/// Layer counts 1, then 4..=32 step 4.
pub fn reference_layer_counts() -> Vec<u32> {
    std::iter::once(1).chain((1..=8).map(|k| 4 * k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorColumn {
    pub geometry: ModelGeometry,
    /// `(b, thp(b) / thp(b / 2))` for every doubling on the ladder.
    pub factors: Vec<(u32, f64)>,
    pub saturation_batch: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorTable {
    pub threshold: f64,
    pub columns: Vec<FactorColumn>,
}

impl FactorTable {
    /// Union of batch sizes across columns.
    pub fn rows(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.columns.iter().flat_map(|c| c.factors.iter().map(|f| f.0)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("hidden,layers,batch,factor,saturation_batch\n");
        for c in &self.columns {
            let sat = c.saturation_batch.map(|b| b.to_string()).unwrap_or_default();
            for (b, f) in &c.factors {
                s.push_str(&format!("{},{},{},{},{}\n", c.geometry.hidden, c.geometry.layers, b, f, sat));
            }
        }
        s
    }
}

/// Computes doubling factors and the saturation batch per geometry.
///
/// Saturation is the smallest batch whose factor is at or below `threshold`
/// with every later factor also at or below it.
pub fn factor_table(sweep: &BTreeMap<(ModelGeometry, u32), f64>, threshold: f64) -> Result<FactorTable> {
    let mut by_geometry: BTreeMap<ModelGeometry, Vec<(u32, f64)>> = BTreeMap::new();
    for (&(g, b), &thp) in sweep {
        by_geometry.entry(g).or_default().push((b, thp));
    }
    let mut columns = Vec::with_capacity(by_geometry.len());
    for (geometry, ladder) in by_geometry {
        // BTreeMap iteration already sorts by batch within a geometry.
        let consecutive = ladder.iter().all(|(b, _)| b.is_power_of_two())
            && ladder.windows(2).all(|w| w[1].0 == 2 * w[0].0);
        if !consecutive || ladder.len() < 2 {
            return Err(Error::BadBatchLadder(geometry.label()));
        }
        let factors: Vec<(u32, f64)> = ladder.windows(2).map(|w| (w[1].0, w[1].1 / w[0].1)).collect();
        if let Some(bad) = factors.iter().find(|(_, f)| !(*f > 0.0)) {
            return Err(Error::InvalidConfig(format!("non-positive factor at b={} for {}", bad.0, geometry.label())));
        }
        let saturation_batch = saturation(&factors, threshold);
        columns.push(FactorColumn { geometry, factors, saturation_batch });
    }
    Ok(FactorTable { threshold, columns })
}

fn saturation(factors: &[(u32, f64)], threshold: f64) -> Option<u32> {
    let tail_start = factors.iter().rposition(|(_, f)| *f > threshold).map_or(0, |i| i + 1);
    factors.get(tail_start).map(|(b, _)| *b)
}

/// Decode throughput of every geometry on a power-of-two batch ladder under
/// the roofline simulator. `template` supplies device, precisions and
/// overhead; its geometry is replaced. Each ladder stops at the first batch
/// that does not fit in memory.
pub fn simulate_geometry_sweep(
    geometries: &[ModelGeometry],
    template: &SimBackendConfig,
    input: u32,
    output: u32,
    max_batch: u32,
) -> BTreeMap<(ModelGeometry, u32), f64> {
    let mut out = BTreeMap::new();
    for g in geometries {
        let cfg = SimBackendConfig { geometry: *g, ..template.clone() };
        let model = cfg.roofline();
        let mut b = 1u32;
        while b <= max_batch && model.fits(&SweepPoint { input, output, batch: b }) {
            out.insert((*g, b), model.decode_thp(b));
            b *= 2;
        }
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelConfigFile {
    model_type: String,
    hidden_size: u32,
    num_hidden_layers: u32,
    num_attention_heads: u32,
    intermediate_size: u32,
    vocab_size: u32,
    max_position_embeddings: u32,
}

/// Model config JSON in the usual Hugging Face key layout, fixed key order.
pub fn model_config_json(g: &ModelGeometry) -> String {
    let cfg = ModelConfigFile {
        model_type: g.family.model_type().to_string(),
        hidden_size: g.hidden,
        num_hidden_layers: g.layers,
        num_attention_heads: g.heads,
        intermediate_size: g.intermediate,
        vocab_size: g.vocab,
        max_position_embeddings: g.max_positions,
    };
    let mut s = serde_json::to_string_pretty(&cfg).expect("plain struct serializes");
    s.push('\n');
    s
}

pub fn emit_model_config(g: &ModelGeometry, path: &Path) -> Result<()> {
    std::fs::write(path, model_config_json(g))?;
    Ok(())
}

pub fn parse_model_config(json: &str) -> Result<ModelGeometry> {
    let cfg: ModelConfigFile = serde_json::from_str(json)?;
    let family = match cfg.model_type.as_str() {
        "bert" => ModelFamily::Encoder,
        "llama" => ModelFamily::Decoder,
        other => return Err(Error::Parse(format!("unknown model_type {other:?}"))),
    };
    let g = ModelGeometry {
        hidden: cfg.hidden_size,
        layers: cfg.num_hidden_layers,
        heads: cfg.num_attention_heads,
        intermediate: cfg.intermediate_size,
        vocab: cfg.vocab_size,
        max_positions: cfg.max_position_embeddings,
        family,
    };
    g.check()?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bert_base_shape() {
        let g = make_geometry(768, 12, 30522, ModelFamily::Encoder).unwrap();
        assert_eq!((g.heads, g.intermediate, g.max_positions), (12, 3072, 512));
    }

    #[test]
    fn small_geometry() {
        let g = make_geometry(128, 1, 1000, ModelFamily::Decoder).unwrap();
        assert_eq!((g.heads, g.intermediate, g.max_positions), (2, 512, 4096));
    }

    #[test]
    fn hidden_must_be_multiple_of_64() {
        let err = make_geometry(100, 1, 1000, ModelFamily::Encoder).unwrap_err();
        assert!(err.to_string().contains("hidden must be multiple of 64"));
        assert!(geometry_sweep_spec(&[65], &[1], 1000, ModelFamily::Encoder).is_err());
    }

    #[test]
    fn reference_sweep_has_72_geometries() {
        let v = geometry_sweep_spec(&reference_dims(), &reference_layer_counts(), 30522, ModelFamily::Encoder).unwrap();
        assert_eq!(v.len(), 72);
        assert_eq!(geometry_sweep_spec(&[128], &[1], 2, ModelFamily::Encoder).unwrap().len(), 1);
    }

    fn ladder(g: ModelGeometry, thp: &[(u32, f64)]) -> BTreeMap<(ModelGeometry, u32), f64> {
        thp.iter().map(|&(b, t)| ((g, b), t)).collect()
    }

    #[test]
    fn factors_by_hand() {
        let g = make_geometry(128, 1, 100, ModelFamily::Encoder).unwrap();
        let t = factor_table(&ladder(g, &[(1, 100.0), (2, 190.0), (4, 260.0)]), 1.05).unwrap();
        let f = &t.columns[0].factors;
        assert_eq!(f[0], (2, 1.9));
        assert!((f[1].1 - 260.0 / 190.0).abs() < 1e-15);
        assert_eq!(t.columns[0].saturation_batch, None);
    }

    #[test]
    fn constant_ladder_saturates_immediately() {
        let g = make_geometry(128, 1, 100, ModelFamily::Encoder).unwrap();
        let t = factor_table(&ladder(g, &[(1, 5.0), (2, 5.0), (4, 5.0), (8, 5.0)]), 1.05).unwrap();
        assert!(t.columns[0].factors.iter().all(|f| f.1 == 1.0));
        assert_eq!(t.columns[0].saturation_batch, Some(2));
    }

    #[test]
    fn linear_scaling_never_saturates() {
        let g = make_geometry(128, 1, 100, ModelFamily::Encoder).unwrap();
        let pts: Vec<(u32, f64)> = (0..8).map(|k| (1 << k, 3.0 * f64::from(1u32 << k))).collect();
        let t = factor_table(&ladder(g, &pts), 1.05).unwrap();
        assert!(t.columns[0].factors.iter().all(|f| f.1 == 2.0));
        assert_eq!(t.columns[0].saturation_batch, None);
    }

    #[test]
    fn saturation_requires_all_later_factors_flat() {
        let g = make_geometry(128, 1, 100, ModelFamily::Encoder).unwrap();
        // Dips at 4, recovers at 8, flat from 16.
        let t = factor_table(&ladder(g, &[(1, 1.0), (2, 2.0), (4, 2.02), (8, 4.0), (16, 4.1), (32, 4.2)]), 1.05).unwrap();
        assert_eq!(t.columns[0].saturation_batch, Some(16));
    }

    #[test]
    fn ladder_must_be_consecutive_doublings() {
        let g = make_geometry(128, 1, 100, ModelFamily::Encoder).unwrap();
        assert!(factor_table(&ladder(g, &[(1, 1.0), (4, 2.0)]), 1.05).is_err());
        assert!(factor_table(&ladder(g, &[(1, 1.0), (3, 2.0)]), 1.05).is_err());
    }

    #[test]
    fn config_json_fields_and_round_trip() {
        let g = make_geometry(768, 12, 30522, ModelFamily::Encoder).unwrap();
        let json = model_config_json(&g);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["hidden_size"], 768);
        assert_eq!(v["num_attention_heads"], 12);
        assert_eq!(v["intermediate_size"], 3072);
        assert_eq!(parse_model_config(&json).unwrap(), g);
        let keys: Vec<&str> = json.lines().filter_map(|l| l.trim().split('"').nth(1)).collect();
        assert_eq!(
            keys,
            [
                "model_type",
                "hidden_size",
                "num_hidden_layers",
                "num_attention_heads",
                "intermediate_size",
                "vocab_size",
                "max_position_embeddings"
            ]
        );
    }

    #[test]
    fn decoder_model_type() {
        let g = make_geometry(256, 2, 32000, ModelFamily::Decoder).unwrap();
        assert!(model_config_json(&g).contains("\"model_type\": \"llama\""));
        let e = make_geometry(256, 2, 32000, ModelFamily::Encoder).unwrap();
        assert!(model_config_json(&e).contains("\"model_type\": \"bert\""));
    }
}
