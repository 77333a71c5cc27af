use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Minimum number of non-zero differences.
const MIN_PAIRS: usize = 6;
/// Up to this many pairs the null distribution is enumerated exactly.
const EXACT_MAX: usize = 15;
/// Differences and gaps smaller than this (relative to the data scale) are
/// treated as zero, so float noise neither creates nor breaks ties.
const REL_TOL: f64 = 1e-9;

/// Two-sided Wilcoxon signed-rank p-value for paired samples.
///
/// Zero differences are dropped and tied magnitudes get mid-ranks. With at
/// most 15 remaining pairs the p-value comes from the exact distribution of
/// the positive rank sum over all sign assignments; otherwise from the
/// normal approximation with tie and continuity corrections.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Size(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let scale = a.iter().chain(b).fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = REL_TOL * scale;
    let mut diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| d.abs() > tol).collect();
    if diffs.len() < MIN_PAIRS {
        return Err(Error::TooFewPairs(diffs.len()));
    }
    diffs.sort_by(|x, y| x.abs().total_cmp(&y.abs()));

    // doubled mid-ranks keep everything in integers
    let n = diffs.len();
    let mut ranks2 = vec![0u64; n];
    let mut tie_term = 0.0;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && diffs[end].abs() - diffs[start].abs() <= tol {
            end += 1;
        }
        let r2 = (start + 1 + end) as u64;
        ranks2[start..end].iter_mut().for_each(|r| *r = r2);
        let t = (end - start) as f64;
        tie_term += t * t * t - t;
        start = end;
    }
    let w2: u64 = diffs
        .iter()
        .zip(&ranks2)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();

    if n <= EXACT_MAX {
        let (mut le, mut ge) = (0u64, 0u64);
        for mask in 0u32..(1 << n) {
            let s: u64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks2[i]).sum();
            le += u64::from(s <= w2);
            ge += u64::from(s >= w2);
        }
        let total = (1u64 << n) as f64;
        return Ok((2.0 * le.min(ge) as f64 / total).min(1.0));
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return Ok(1.0);
    }
    let w = w2 as f64 / 2.0;
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::standard();
    Ok((2.0 * normal.sf(z)).min(1.0))
}
