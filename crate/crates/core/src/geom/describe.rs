use alloc::vec::Vec;
use num_traits::Float;

use super::Keypoint;
use crate::image::gaussian_blur;
use crate::GrayImage;

/// Side of the sampled descriptor patch.
pub const PATCH_SIDE: usize = 16;
pub const DESCRIPTOR_DIM: usize = PATCH_SIDE * PATCH_SIDE;

/// Row-major set of equally sized descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    dim: usize,
    data: Vec<f32>,
}

impl DescriptorSet {
    /// Panics if `data.len()` is not a multiple of `dim`.
    pub fn new(dim: usize, data: Vec<f32>) -> Self {
        assert!(dim > 0 && data.len() % dim == 0, "ragged descriptor set");
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Mean/std normalization followed by L2 normalization.
///
/// A vector with no spread (a constant patch) becomes the all-equal unit
/// vector, so the output is always unit length.
pub fn normalize_descriptor(values: &mut [f32]) {
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = values
        .iter()
        .map(|&v| (f64::from(v) - mean).powi(2))
        .sum::<f64>()
        / n;
    let std = var.sqrt().max(1e-8);
    let mut norm = 0.0f64;
    let centered: Vec<f64> = values
        .iter()
        .map(|&v| {
            let c = (f64::from(v) - mean) / std;
            norm += c * c;
            c
        })
        .collect();
    let norm = norm.sqrt();
    if norm < 1e-12 {
        let u = (1.0 / n.sqrt()) as f32;
        values.iter_mut().for_each(|v| *v = u);
    } else {
        for (v, c) in values.iter_mut().zip(centered) {
            *v = (c / norm) as f32;
        }
    }
}

/// Descriptors for the keypoints that lie far enough from the border.
///
/// Returns the descriptor set and, for each row, the index of the keypoint
/// it describes.
pub fn describe_keypoints(img: &GrayImage, keypoints: &[Keypoint]) -> (DescriptorSet, Vec<usize>) {
    let smooth = gaussian_blur(img, 1.0);
    let half = (PATCH_SIDE as f64 - 1.0) / 2.0;
    let mut data = Vec::with_capacity(keypoints.len() * DESCRIPTOR_DIM);
    let mut index_map = Vec::with_capacity(keypoints.len());
    let mut patch = [0.0f32; DESCRIPTOR_DIM];
    for (k, kp) in keypoints.iter().enumerate() {
        if !(smooth.contains(kp.x - half, kp.y - half) && smooth.contains(kp.x + half, kp.y + half))
        {
            continue;
        }
        for r in 0..PATCH_SIDE {
            for c in 0..PATCH_SIDE {
                patch[r * PATCH_SIDE + c] =
                    smooth.sample_clamped(kp.x - half + c as f64, kp.y - half + r as f64) as f32;
            }
        }
        normalize_descriptor(&mut patch);
        data.extend_from_slice(&patch);
        index_map.push(k);
    }
    (DescriptorSet::new(DESCRIPTOR_DIM, data), index_map)
}
