//! Sweep grids, reduced batch-size subsets and up-front cost projection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{PricingSpec, SweepGrid, SweepPoint};

/// How to pick batch sizes out of a full axis. The axis extremes are always
/// part of the subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubsetScheme {
    Full,
    #[serde(rename = "pow2")]
    PowersOfTwo,
    #[serde(rename = "even")]
    EvenCount { k: usize },
}

impl std::str::FromStr for SubsetScheme {
    type Err = Error;

    /// Accepts `full`, `pow2` and `even:<k>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SubsetScheme::Full),
            "pow2" => Ok(SubsetScheme::PowersOfTwo),
            _ => {
                let k = s
                    .strip_prefix("even:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .ok_or_else(|| Error::InvalidScheme(format!("unrecognized scheme {s:?}")))?;
                Ok(SubsetScheme::EvenCount { k })
            }
        }
    }
}

/// Plan file contents: the axes to run and the scheme that produced `batches`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub inputs: Vec<u32>,
    pub outputs: Vec<u32>,
    pub batches: Vec<u32>,
    pub scheme: SubsetScheme,
}

impl SweepPlan {
    pub fn build(inputs: &[u32], outputs: &[u32], batches: &[u32], scheme: SubsetScheme) -> Result<Self> {
        let grid = full_grid(inputs, outputs, batches)?;
        let batches = subset_batches(grid.batches(), scheme)?;
        Ok(Self {
            inputs: grid.inputs().to_vec(),
            outputs: grid.outputs().to_vec(),
            batches,
            scheme,
        })
    }

    pub fn grid(&self) -> Result<SweepGrid> {
        full_grid(&self.inputs, &self.outputs, &self.batches)
    }
}

fn normalize(axis: &[u32]) -> Vec<u32> {
    let mut v = axis.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Builds a grid from arbitrary axis sets, sorting and deduplicating each.
pub fn full_grid(inputs: &[u32], outputs: &[u32], batches: &[u32]) -> Result<SweepGrid> {
    SweepGrid::from_sorted(normalize(inputs), normalize(outputs), normalize(batches))
}

/// Selects a subset of an ascending batch axis.
pub fn subset_batches(batches: &[u32], scheme: SubsetScheme) -> Result<Vec<u32>> {
    if batches.is_empty() {
        return Err(Error::EmptyAxis("batches"));
    }
    if batches.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::UnsortedAxis("batches"));
    }
    let (lo, hi) = (batches[0], batches[batches.len() - 1]);
    match scheme {
        SubsetScheme::Full => Ok(batches.to_vec()),
        SubsetScheme::PowersOfTwo => {
            if batches.len() < 2 {
                return Err(Error::InvalidScheme("pow2 needs at least two batch sizes".into()));
            }
            Ok(batches
                .iter()
                .copied()
                .filter(|&b| b == lo || b == hi || b.is_power_of_two())
                .collect())
        }
        SubsetScheme::EvenCount { k } => {
            if k < 2 {
                return Err(Error::InvalidScheme(format!("even count requires k >= 2, got {k}")));
            }
            if k > batches.len() {
                return Err(Error::SubsetTooLarge { requested: k, available: batches.len() });
            }
            Ok(log_even_subset(batches, k))
        }
    }
}

/// Extremes plus `k - 2` interior values at evenly spaced log2 targets, each
/// snapped to the nearest unused axis value.
fn log_even_subset(batches: &[u32], k: usize) -> Vec<u32> {
    let n = batches.len();
    let logs: Vec<f64> = batches.iter().map(|&b| f64::from(b).log2()).collect();
    let (l0, l1) = (logs[0], logs[n - 1]);
    let mut used = vec![false; n];
    used[0] = true;
    used[n - 1] = true;

    for j in 1..k - 1 {
        let target = l0 + (l1 - l0) * j as f64 / (k - 1) as f64;
        // On a tie the smaller value wins.
        let pick = (0..n)
            .filter(|&idx| !used[idx])
            .min_by(|&a, &b| {
                let da = (logs[a] - target).abs();
                let db = (logs[b] - target).abs();
                da.total_cmp(&db).then(a.cmp(&b))
            })
            .expect("k <= n leaves an unused value");
        used[pick] = true;
    }
    batches
        .iter()
        .zip(used)
        .filter_map(|(&b, u)| u.then_some(b))
        .collect()
}

/// Projected time and cost of a sweep before running it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCost {
    pub total_seconds: f64,
    pub total_cost: f64,
}

/// Sums per-point time estimates over the grid and prices them.
pub fn project_sweep_cost<F>(
    grid: &SweepGrid,
    mut per_point_estimate: F,
    pricing: &PricingSpec,
    device_count: u32,
) -> Result<SweepCost>
where
    F: FnMut(&SweepPoint) -> f64,
{
    let mut total_seconds = 0.0;
    for p in grid.points() {
        let t = per_point_estimate(&p);
        if !(t >= 0.0) {
            return Err(Error::NegativeEstimate(p));
        }
        total_seconds += t;
    }
    Ok(SweepCost {
        total_seconds,
        total_cost: pricing.unit_cost_per_second(device_count) * total_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn range(lo: u32, hi: u32) -> Vec<u32> {
        (lo..=hi).collect()
    }

    /// Brute force over all increasing interior pairs, minimizing the summed
    /// log2 distance to the evenly spaced targets.
    fn brute_force_pair(batches: &[u32]) -> (u32, u32) {
        let lo = f64::from(batches[0]).log2();
        let hi = f64::from(*batches.last().unwrap()).log2();
        let t1 = lo + (hi - lo) / 3.0;
        let t2 = lo + 2.0 * (hi - lo) / 3.0;
        let interior = &batches[1..batches.len() - 1];
        let mut best = (f64::INFINITY, 0, 0);
        for (x, &a) in interior.iter().enumerate() {
            for &b in &interior[x + 1..] {
                let cost = (f64::from(a).log2() - t1).abs() + (f64::from(b).log2() - t2).abs();
                if cost < best.0 {
                    best = (cost, a, b);
                }
            }
        }
        (best.1, best.2)
    }

    #[test]
    fn full_grid_reference_sweep() {
        let g = full_grid(&[1024], &[1, 16, 128, 1024], &range(1, 128)).unwrap();
        assert_eq!(g.len(), 4 * 128);
    }

    #[test]
    fn full_grid_sorts_and_dedups() {
        let g = full_grid(&[1], &[1], &[4, 2, 2, 1]).unwrap();
        assert_eq!(g.batches(), &[1, 2, 4]);
    }

    #[test]
    fn full_grid_rejects_empty_axis() {
        let err = full_grid(&[1], &[], &[1]).unwrap_err();
        assert!(err.to_string().contains("empty axis"));
    }

    #[test]
    fn powers_of_two_subset() {
        let s = subset_batches(&range(1, 128), SubsetScheme::PowersOfTwo).unwrap();
        assert_eq!(s, vec![1, 2, 4, 8, 16, 32, 64, 128]);
    }

    #[test]
    fn powers_of_two_forces_extremes() {
        let s = subset_batches(&range(3, 100), SubsetScheme::PowersOfTwo).unwrap();
        assert_eq!(s, vec![3, 4, 8, 16, 32, 64, 100]);
    }

    #[test]
    fn even_two_is_extremes() {
        assert_eq!(subset_batches(&range(1, 128), SubsetScheme::EvenCount { k: 2 }).unwrap(), vec![1, 128]);
    }

    #[test]
    fn even_four_matches_brute_force() {
        let axis = range(1, 128);
        let s = subset_batches(&axis, SubsetScheme::EvenCount { k: 4 }).unwrap();
        let (a, b) = brute_force_pair(&axis);
        assert_eq!(s, vec![1, a, b, 128]);
        assert_eq!(s, vec![1, 5, 25, 128]);
    }

    #[test]
    fn even_count_too_large() {
        let err = subset_batches(&[1, 2, 3], SubsetScheme::EvenCount { k: 4 }).unwrap_err();
        assert!(err.to_string().contains("subset larger than axis"));
    }

    #[test]
    fn even_count_collisions_take_neighbours() {
        // Every target lands near 1..4; all values must still be distinct.
        let s = subset_batches(&[1, 2, 3, 4, 1000], SubsetScheme::EvenCount { k: 5 }).unwrap();
        assert_eq!(s, vec![1, 2, 3, 4, 1000]);
    }

    #[test]
    fn scheme_parsing_and_json() {
        assert_eq!("pow2".parse::<SubsetScheme>().unwrap(), SubsetScheme::PowersOfTwo);
        assert_eq!("even:6".parse::<SubsetScheme>().unwrap(), SubsetScheme::EvenCount { k: 6 });
        assert!("even:x".parse::<SubsetScheme>().is_err());
        let json = serde_json::to_string(&SubsetScheme::EvenCount { k: 3 }).unwrap();
        assert_eq!(json, r#"{"kind":"even","k":3}"#);
        assert_eq!(serde_json::to_string(&SubsetScheme::PowersOfTwo).unwrap(), r#"{"kind":"pow2"}"#);
    }

    #[test]
    fn sweep_cost_hand_arithmetic() {
        let g = full_grid(&[1], &[1], &[1, 2]).unwrap();
        let pricing = PricingSpec::new(3.6).unwrap();
        let c = project_sweep_cost(&g, |_| 10.0, &pricing, 1).unwrap();
        assert_eq!(c.total_seconds, 20.0);
        assert!((c.total_cost - 0.02).abs() < 1e-12);
    }

    #[test]
    fn sweep_cost_zero_and_linear_in_devices() {
        let g = full_grid(&[1], &[1], &[1]).unwrap();
        let pricing = PricingSpec::new(3.6).unwrap();
        let c = project_sweep_cost(&g, |_| 0.0, &pricing, 1).unwrap();
        assert_eq!((c.total_seconds, c.total_cost), (0.0, 0.0));

        let g = full_grid(&[1, 2], &[1], &[1, 2, 3]).unwrap();
        let one = project_sweep_cost(&g, |p| f64::from(p.batch), &pricing, 1).unwrap();
        let two = project_sweep_cost(&g, |p| f64::from(p.batch), &pricing, 2).unwrap();
        assert_eq!(one.total_seconds, two.total_seconds);
        assert!((two.total_cost - 2.0 * one.total_cost).abs() < 1e-12);
    }

    #[test]
    fn sweep_cost_rejects_negative() {
        let g = full_grid(&[1], &[1], &[1]).unwrap();
        let err = project_sweep_cost(&g, |_| -1.0, &PricingSpec::new(1.0).unwrap(), 1).unwrap_err();
        assert!(err.to_string().contains("negative time estimate"));
    }

    fn axis_strategy() -> impl Strategy<Value = Vec<u32>> {
        proptest::collection::btree_set(1u32..2000, 2..60).prop_map(|s| s.into_iter().collect())
    }

    proptest! {
        #[test]
        fn subsets_are_sorted_subsets_with_extremes(axis in axis_strategy(), k in 2usize..60, which in 0u8..3) {
            let scheme = match which {
                0 => SubsetScheme::Full,
                1 => SubsetScheme::PowersOfTwo,
                _ => SubsetScheme::EvenCount { k: k.min(axis.len()) },
            };
            let s = subset_batches(&axis, scheme).unwrap();
            prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(s.iter().all(|b| axis.contains(b)));
            prop_assert_eq!(s[0], axis[0]);
            prop_assert_eq!(*s.last().unwrap(), *axis.last().unwrap());
            match scheme {
                SubsetScheme::Full => prop_assert_eq!(&s, &axis),
                SubsetScheme::EvenCount { k } => prop_assert_eq!(s.len(), k),
                SubsetScheme::PowersOfTwo => {}
            }
        }

        #[test]
        fn pow2_on_dyadic_range(n in 1u32..12) {
            let axis = range(1, 1 << n);
            prop_assert_eq!(subset_batches(&axis, SubsetScheme::PowersOfTwo).unwrap().len(), n as usize + 1);
        }

        #[test]
        fn sweep_cost_additive_and_linear(a in 1u32..50, b in 51u32..100, price in 0.0f64..100.0) {
            let pricing = PricingSpec::new(price).unwrap();
            let doubled = PricingSpec::new(price * 2.0).unwrap();
            let est = |p: &SweepPoint| f64::from(p.batch) * 0.5;
            let ga = full_grid(&[1], &[1], &[a]).unwrap();
            let gb = full_grid(&[1], &[1], &[b]).unwrap();
            let gab = full_grid(&[1], &[1], &[a, b]).unwrap();
            let ca = project_sweep_cost(&ga, est, &pricing, 3).unwrap();
            let cb = project_sweep_cost(&gb, est, &pricing, 3).unwrap();
            let cab = project_sweep_cost(&gab, est, &pricing, 3).unwrap();
            prop_assert!((ca.total_seconds + cb.total_seconds - cab.total_seconds).abs() < 1e-9);
            prop_assert!((ca.total_cost + cb.total_cost - cab.total_cost).abs() < 1e-9);
            let c2 = project_sweep_cost(&gab, est, &doubled, 3).unwrap();
            prop_assert!((c2.total_cost - 2.0 * cab.total_cost).abs() < 1e-9);
        }
    }
}
