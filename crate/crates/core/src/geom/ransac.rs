use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use rand::seq::index;

use crate::linalg::{mat3_mul, symmetric_eigen, Mat3};
use crate::seed::rng_from_seed;
use crate::{Error, Homography, Result};

/// A point pair related by `dst ≈ H(src)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub src: [f64; 2],
    pub dst: [f64; 2],
}

impl Correspondence {
    pub fn new(src: [f64; 2], dst: [f64; 2]) -> Self {
        Self { src, dst }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacParams {
    /// A correspondence is an inlier when its symmetric transfer error,
    /// `d(dst, H src)² + d(src, H⁻¹ dst)²`, is below `inlier_px²`.
    pub inlier_px: f64,
    pub max_iters: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            inlier_px: 2.0,
            max_iters: 2000,
            confidence: 0.999,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacEstimate {
    pub homography: Homography,
    pub inlier_count: usize,
    pub inliers: Vec<bool>,
    /// Minimal samples drawn, including degenerate ones.
    pub iterations: usize,
    /// Largest inlier count among the minimal-sample hypotheses.
    pub best_hypothesis_inliers: usize,
}

/// Similarity that moves the centroid to the origin and makes the mean
/// distance from it √2.
fn hartley_normalization(points: impl Iterator<Item = [f64; 2]> + Clone) -> Mat3 {
    let n = points.clone().count() as f64;
    let (mut cx, mut cy) = (0.0, 0.0);
    for p in points.clone() {
        cx += p[0];
        cy += p[1];
    }
    cx /= n;
    cy /= n;
    let mean_dist = points
        .map(|p| ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    let s = if mean_dist > 1e-12 {
        core::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    [[s, 0.0, -s * cx], [0.0, s, -s * cy], [0.0, 0.0, 1.0]]
}

fn transform(t: &Mat3, p: [f64; 2]) -> [f64; 2] {
    [
        t[0][0] * p[0] + t[0][1] * p[1] + t[0][2],
        t[1][0] * p[0] + t[1][1] * p[1] + t[1][2],
    ]
}

/// Normalized direct linear transform over all given correspondences
/// (least squares for more than four).
pub fn fit_homography_dlt(corr: &[Correspondence]) -> Result<Homography> {
    if corr.len() < 4 {
        return Err(Error::NotEnoughData {
            needed: 4,
            available: corr.len(),
        });
    }
    let ts = hartley_normalization(corr.iter().map(|c| c.src));
    let td = hartley_normalization(corr.iter().map(|c| c.dst));
    let mut ata = [[0.0f64; 9]; 9];
    for c in corr {
        let [x, y] = transform(&ts, c.src);
        let [u, v] = transform(&td, c.dst);
        let r1 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r2 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for i in 0..9 {
            for j in i..9 {
                ata[i][j] += r1[i] * r1[j] + r2[i] * r2[j];
            }
        }
    }
    for i in 0..9 {
        for j in 0..i {
            ata[i][j] = ata[j][i];
        }
    }
    let (_, vecs) = symmetric_eigen(ata);
    let h = vecs[0];
    let hn = [[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], h[8]]];
    let td_inv = crate::linalg::mat3_inverse(&td).ok_or(Error::SingularHomography)?;
    Homography::from_matrix(mat3_mul(&mat3_mul(&td_inv, &hn), &ts))
}

/// `d(dst, H src)² + d(src, H⁻¹ dst)²`.
pub fn symmetric_transfer_error(h: &Homography, h_inv: &Homography, c: &Correspondence) -> f64 {
    let (fx, fy) = h.apply(c.src[0], c.src[1]);
    let (bx, by) = h_inv.apply(c.dst[0], c.dst[1]);
    let e = (fx - c.dst[0]).powi(2)
        + (fy - c.dst[1]).powi(2)
        + (bx - c.src[0]).powi(2)
        + (by - c.src[1]).powi(2);
    if e.is_finite() {
        e
    } else {
        f64::INFINITY
    }
}

fn collinear(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
    let (ux, uy) = (b[0] - a[0], b[1] - a[1]);
    let (vx, vy) = (c[0] - a[0], c[1] - a[1]);
    let cross = (ux * vy - uy * vx).abs();
    let scale = (ux * ux + uy * uy).sqrt() * (vx * vx + vy * vy).sqrt();
    scale == 0.0 || cross <= 1e-3 * scale
}

fn degenerate(sample: &[Correspondence; 4]) -> bool {
    const TRIPLES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    TRIPLES.iter().any(|t| {
        collinear(sample[t[0]].src, sample[t[1]].src, sample[t[2]].src)
            || collinear(sample[t[0]].dst, sample[t[1]].dst, sample[t[2]].dst)
    })
}

fn score(h: &Homography, corr: &[Correspondence], thresh_sq: f64, mask: &mut [bool]) -> usize {
    let Ok(h_inv) = h.inverse() else {
        mask.iter_mut().for_each(|m| *m = false);
        return 0;
    };
    let mut count = 0;
    for (c, m) in corr.iter().zip(mask.iter_mut()) {
        *m = symmetric_transfer_error(h, &h_inv, c) < thresh_sq;
        count += usize::from(*m);
    }
    count
}

fn required_iterations(inlier_ratio: f64, confidence: f64) -> f64 {
    let p4 = inlier_ratio.powi(4);
    if p4 >= 1.0 {
        return 0.0;
    }
    if p4 <= 0.0 {
        return f64::INFINITY;
    }
    ((1.0 - confidence).ln() / (1.0 - p4).ln()).ceil()
}

/// RANSAC over 4-point samples with a normalized-DLT hypothesis per sample,
/// adaptive iteration count and a least-squares refit on the best inlier set.
///
/// The refit only replaces the minimal-sample model when it keeps at least
/// as many inliers, so the returned count is never below the best hypothesis.
pub fn estimate_homography_ransac(
    corr: &[Correspondence],
    params: &RansacParams,
) -> Result<RansacEstimate> {
    let n = corr.len();
    if n < 4 {
        return Err(Error::NotEnoughData {
            needed: 4,
            available: n,
        });
    }
    let thresh_sq = params.inlier_px * params.inlier_px;
    let mut rng = rng_from_seed(params.seed);
    let mut best: Option<(Homography, usize)> = None;
    let mut best_mask = vec![false; n];
    let mut mask = vec![false; n];
    let mut needed = params.max_iters as f64;
    let mut iterations = 0;
    while iterations < params.max_iters && (iterations as f64) < needed {
        iterations += 1;
        let idx = index::sample(&mut rng, n, 4);
        let sample = [
            corr[idx.index(0)],
            corr[idx.index(1)],
            corr[idx.index(2)],
            corr[idx.index(3)],
        ];
        if degenerate(&sample) {
            continue;
        }
        let Ok(h) = fit_homography_dlt(&sample) else {
            continue;
        };
        let count = score(&h, corr, thresh_sq, &mut mask);
        if count > best.map_or(0, |b| b.1) {
            best = Some((h, count));
            best_mask.copy_from_slice(&mask);
            needed = required_iterations(count as f64 / n as f64, params.confidence);
        }
    }
    let Some((mut model, hypothesis_count)) = best else {
        return Err(Error::EstimationFailed("no non-degenerate sample".into()));
    };
    if hypothesis_count < 4 {
        return Err(Error::EstimationFailed(format!(
            "best model has only {hypothesis_count} inliers"
        )));
    }
    let mut count = hypothesis_count;
    for _ in 0..5 {
        let inlier_set: Vec<Correspondence> = corr
            .iter()
            .zip(&best_mask)
            .filter(|(_, &m)| m)
            .map(|(c, _)| *c)
            .collect();
        let Ok(refit) = fit_homography_dlt(&inlier_set) else {
            break;
        };
        let refit_count = score(&refit, corr, thresh_sq, &mut mask);
        if refit_count < count {
            break;
        }
        let grew = refit_count > count;
        model = refit;
        count = refit_count;
        best_mask.copy_from_slice(&mask);
        if !grew {
            break;
        }
    }
    Ok(RansacEstimate {
        homography: model,
        inlier_count: count,
        inliers: best_mask,
        iterations,
        best_hypothesis_inliers: hypothesis_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_exact_identity_points() {
        let pts = [[0.0, 0.0], [100.0, 0.0], [0.0, 80.0], [90.0, 70.0]];
        let corr: Vec<_> = pts.iter().map(|&p| Correspondence::new(p, p)).collect();
        let est = estimate_homography_ransac(&corr, &RansacParams::default()).unwrap();
        assert_eq!(est.inlier_count, 4);
        assert!(est.homography.sad_to_identity() < 1e-9);
    }

    #[test]
    fn collinear_input_fails() {
        let corr: Vec<_> = (0..20)
            .map(|i| {
                let p = [i as f64 * 3.0, i as f64 * 2.0 + 1.0];
                Correspondence::new(p, p)
            })
            .collect();
        assert!(estimate_homography_ransac(&corr, &RansacParams::default()).is_err());
    }

    #[test]
    fn too_few_points() {
        let corr = vec![Correspondence::new([0.0, 0.0], [0.0, 0.0]); 3];
        assert!(matches!(
            estimate_homography_ransac(&corr, &RansacParams::default()),
            Err(Error::NotEnoughData { .. })
        ));
    }

    #[test]
    fn dlt_recovers_projective_map() {
        let truth =
            Homography::from_coefficients([1.02, 0.01, 3.0, -0.01, 0.98, -2.0, 1e-5, 0.0, 1.0])
                .unwrap();
        let corr: Vec<_> = (0..25)
            .map(|i| {
                let p = [(i % 5) as f64 * 150.0, (i / 5) as f64 * 110.0];
                let (x, y) = truth.apply(p[0], p[1]);
                Correspondence::new(p, [x, y])
            })
            .collect();
        let h = fit_homography_dlt(&corr).unwrap();
        assert!(h.max_corner_distance(&truth, 640, 480) < 1e-6);
    }
}
