use alloc::vec::Vec;

use super::{
    describe_keypoints, detect_keypoints, estimate_homography_ransac, match_ratio, Correspondence,
    DescriptorSet, Keypoint, PairGeometry, RansacParams,
};
use crate::image::pyramid;
use crate::{GrayImage, Result};

/// Settings of the two-view matcher used for viewpoint clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct MatcherConfig {
    pub max_keypoints: usize,
    pub ratio: f64,
    /// RANSAC inlier threshold in full-resolution pixels.
    pub inlier_px: f64,
    pub ransac_max_iters: usize,
    /// Number of 2x reductions applied before detection (0 = full resolution).
    pub downscale_levels: usize,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            max_keypoints: 2000,
            ratio: 0.8,
            inlier_px: 2.0,
            ransac_max_iters: 2000,
            downscale_levels: 0,
        }
    }
}

/// Keypoints (in full-resolution coordinates) and their descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatures {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: DescriptorSet,
}

pub fn extract_features(img: &GrayImage, cfg: &MatcherConfig) -> Result<ImageFeatures> {
    let levels = pyramid(img, cfg.downscale_levels + 1);
    let work = levels.last().expect("at least one level");
    let kps = detect_keypoints(work, cfg.max_keypoints)?;
    let (descriptors, index_map) = describe_keypoints(work, &kps);
    let f = (1usize << cfg.downscale_levels) as f64;
    let keypoints = index_map
        .into_iter()
        .map(|i| {
            let k = kps[i];
            // inverse of the 2x2 box reduction, applied once per level
            Keypoint {
                x: f * k.x + (f - 1.0) / 2.0,
                y: f * k.y + (f - 1.0) / 2.0,
                response: k.response,
                scale: k.scale * f,
            }
        })
        .collect();
    Ok(ImageFeatures {
        keypoints,
        descriptors,
    })
}

/// Matches `candidate` against `reference` and fits a candidate-to-reference
/// homography. `None` when there are too few matches or RANSAC fails.
pub fn match_pair(
    reference: &ImageFeatures,
    candidate: &ImageFeatures,
    cfg: &MatcherConfig,
    seed: u64,
) -> Option<PairGeometry> {
    if candidate.descriptors.is_empty() || reference.descriptors.len() < 2 {
        return None;
    }
    let matches = match_ratio(&candidate.descriptors, &reference.descriptors, cfg.ratio).ok()?;
    if matches.len() < 4 {
        return None;
    }
    let corr: Vec<Correspondence> = matches
        .iter()
        .map(|m| {
            let s = candidate.keypoints[m.a];
            let d = reference.keypoints[m.b];
            Correspondence::new([s.x, s.y], [d.x, d.y])
        })
        .collect();
    let params = RansacParams {
        inlier_px: cfg.inlier_px * (1usize << cfg.downscale_levels) as f64,
        max_iters: cfg.ransac_max_iters,
        seed,
        ..RansacParams::default()
    };
    let est = estimate_homography_ransac(&corr, &params).ok()?;
    Some(PairGeometry {
        homography: est.homography,
        inliers: est.inlier_count,
    })
}
