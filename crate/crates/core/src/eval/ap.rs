use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{l2_distance, DescriptorMatrix};
use crate::{Error, Result};

/// Greedy global one-to-one assignment on an `n`×`n` row-major distance
/// table: all entries sorted ascending (ties by row, then column), a pair is
/// accepted when both ends are still free. Returns accepted `(i, j)` in rank order.
pub fn greedy_bijection(n: usize, dist: &[f64]) -> Result<Vec<(usize, usize)>> {
    if dist.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            got: dist.len(),
        });
    }
    if dist.iter().any(|d| d.is_nan()) {
        return Err(Error::NonFinite("distance"));
    }
    let mut order: Vec<u32> = (0..(n * n) as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        dist[a as usize]
            .total_cmp(&dist[b as usize])
            .then(a.cmp(&b))
    });
    let (mut row_used, mut col_used) = (vec![false; n], vec![false; n]);
    let mut out = Vec::with_capacity(n);
    for k in order {
        let (i, j) = (k as usize / n, k as usize % n);
        if !row_used[i] && !col_used[j] {
            row_used[i] = true;
            col_used[j] = true;
            out.push((i, j));
            if out.len() == n {
                break;
            }
        }
    }
    Ok(out)
}

fn check_bijection(gt: &[usize]) -> Result<()> {
    let mut seen = vec![false; gt.len()];
    for &g in gt {
        if g >= gt.len() || seen[g] {
            return Err(Error::InvalidArgument(
                "ground truth is not a bijection".into(),
            ));
        }
        seen[g] = true;
    }
    Ok(())
}

/// AP of a ranked list of correctness labels against `n_relevant` relevant
/// items: the mean over relevant items of precision at their rank.
pub fn ranked_ap(correct: impl IntoIterator<Item = bool>, n_relevant: usize) -> f64 {
    if n_relevant == 0 {
        return 0.0;
    }
    let (mut hits, mut sum) = (0usize, 0.0);
    for (k, c) in correct.into_iter().enumerate() {
        if c {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    sum / n_relevant as f64
}

/// Matching-task AP from a distance table and a ground-truth bijection
/// (`gt[i]` is the partner of row `i`).
pub fn match_task_ap_from_distances(n: usize, dist: &[f64], gt: &[usize]) -> Result<f64> {
    if gt.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: gt.len(),
        });
    }
    if n < 2 {
        return Err(Error::NotEnoughData {
            needed: 2,
            available: n,
        });
    }
    check_bijection(gt)?;
    let ranked = greedy_bijection(n, dist)?;
    Ok(ranked_ap(ranked.iter().map(|&(i, j)| gt[i] == j), n))
}

/// Matching-task AP between two equally sized descriptor sets.
pub fn match_task_ap(a: &DescriptorMatrix, b: &DescriptorMatrix, gt: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let n = a.len();
    let mut dist = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            dist.push(l2_distance(a.row(i), b.row(j)));
        }
    }
    match_task_ap_from_distances(n, &dist, gt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    /// One point per prefix of the score-sorted list.
    pub points: Vec<PrPoint>,
    pub ap: f64,
}

/// Precision/recall at every prefix of the pairs sorted by descending score
/// (stable, so ties keep input order).
///
/// AP integrates precision over recall with the trapezoid rule through the
/// points where a positive is retrieved, starting from recall 0 at the
/// precision of the first positive.
pub fn verification_pr(pairs: &[(f64, bool)]) -> Result<PrCurve> {
    let positives = pairs.iter().filter(|p| p.1).count();
    if positives == 0 || positives == pairs.len() {
        return Err(Error::InvalidArgument(format!(
            "need both classes, got {positives} positives of {}",
            pairs.len()
        )));
    }
    if pairs.iter().any(|p| p.0.is_nan()) {
        return Err(Error::NonFinite("score"));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[b].0.total_cmp(&pairs[a].0));
    let mut points = Vec::with_capacity(pairs.len());
    let mut tp = 0usize;
    let mut ap = 0.0;
    let mut prev: Option<PrPoint> = None;
    for (k, &i) in order.iter().enumerate() {
        let is_pos = pairs[i].1;
        tp += usize::from(is_pos);
        let pt = PrPoint {
            recall: tp as f64 / positives as f64,
            precision: tp as f64 / (k + 1) as f64,
        };
        if is_pos {
            let anchor = prev.unwrap_or(PrPoint {
                recall: 0.0,
                precision: pt.precision,
            });
            ap += (pt.recall - anchor.recall) * (pt.precision + anchor.precision) / 2.0;
            prev = Some(pt);
        }
        points.push(pt);
    }
    Ok(PrCurve { points, ap })
}
