//! Axis and list syntax: `1..128` (inclusive), `128..1024:128` (stepped),
//! `1,2,4`, or a mix such as `1..8,16,32`.

use anyhow::{bail, Context, Result};

pub fn parse_axis(s: &str) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((lo, rest)) = part.split_once("..") {
            let (hi, step) = rest.split_once(':').unwrap_or((rest, "1"));
            let lo: u32 = lo.trim().parse().with_context(|| format!("bad range start in {part:?}"))?;
            let hi: u32 = hi.trim().parse().with_context(|| format!("bad range end in {part:?}"))?;
            let step: usize = step.trim().parse().with_context(|| format!("bad range step in {part:?}"))?;
            if lo > hi || step == 0 {
                bail!("empty range {part:?}");
            }
            out.extend((lo..=hi).step_by(step));
        } else {
            out.push(part.parse().with_context(|| format!("bad value {part:?}"))?);
        }
    }
    if out.is_empty() {
        bail!("empty axis {s:?}");
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_and_lists() {
        assert_eq!(parse_axis("1..4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_axis("8, 1,2").unwrap(), vec![1, 2, 8]);
        assert_eq!(parse_axis("1..3,16,2").unwrap(), vec![1, 2, 3, 16]);
        assert_eq!(parse_axis("1..128").unwrap().len(), 128);
        assert_eq!(parse_axis("128..1024:128").unwrap(), vec![128, 256, 384, 512, 640, 768, 896, 1024]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_axis("").is_err());
        assert!(parse_axis("4..1").is_err());
        assert!(parse_axis("a..b").is_err());
        assert!(parse_axis("-1").is_err());
        assert!(parse_axis("1..8:0").is_err());
    }
}
