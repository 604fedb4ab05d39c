use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;

use crate::image::downsample2;
use crate::{Error, GrayImage, Result};

/// Input side of the baseline descriptor.
pub const BASELINE_SIDE: usize = 32;
pub const BASELINE_DIM: usize = BASELINE_SIDE * BASELINE_SIDE;

/// Mean/variance-normalized pixels, flattened and L2-normalized.
/// A constant patch maps to the unit vector with all entries equal.
pub fn baseline_descriptor(patch: &GrayImage) -> Result<Vec<f64>> {
    if patch.width() != BASELINE_SIDE || patch.height() != BASELINE_SIDE {
        return Err(Error::DimensionMismatch {
            expected: BASELINE_SIDE,
            got: patch.width().max(patch.height()),
        });
    }
    let (mean, std) = patch.mean_std();
    let std = std.max(1e-8);
    let mut v: Vec<f64> = patch
        .data()
        .iter()
        .map(|&p| (f64::from(p) - mean) / std)
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1e-12 {
        v.iter_mut().for_each(|x| *x /= norm);
    } else {
        let u = 1.0 / (BASELINE_DIM as f64).sqrt();
        v.iter_mut().for_each(|x| *x = u);
    }
    Ok(v)
}

/// Evaluation view of a dataset patch: the central 64×64 window reduced to 32×32.
pub fn eval_patch(patch: &GrayImage) -> Result<GrayImage> {
    let side = 2 * BASELINE_SIDE;
    if patch.width() < side || patch.height() < side {
        return Err(Error::ImageTooSmall {
            width: patch.width(),
            height: patch.height(),
            min_width: side,
            min_height: side,
        });
    }
    let (ox, oy) = ((patch.width() - side) / 2, (patch.height() - side) / 2);
    let window = GrayImage::from_fn(side, side, |x, y| patch.get(ox + x, oy + y));
    Ok(downsample2(&window))
}

/// Row-major unit descriptors with ids.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
}

impl DescriptorMatrix {
    pub fn new(ids: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() != ids.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: ids.len() * dim,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("descriptor"));
        }
        for (row, id) in data.chunks(dim).zip(&ids) {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (n - 1.0).abs() > 1e-4 {
                return Err(Error::InvalidArgument(format!(
                    "descriptor {id} has norm {n}"
                )));
            }
        }
        Ok(Self { ids, dim, data })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

/// Euclidean distance between two rows.
#[inline]
pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    // four independent lanes let the compiler vectorize the reduction
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3]) + tail).sqrt()
}
