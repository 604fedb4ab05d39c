#![allow(dead_code)]

use patchfoundry_core::image::gaussian_blur;
use patchfoundry_core::seed::{rng_from_seed, SeededRng};
use patchfoundry_core::GrayImage;
use rand::Rng;

pub fn gaussian(rng: &mut SeededRng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn unit_rows(rng: &mut SeededRng, n: usize, dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let row: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        out.extend(row.iter().map(|v| v / norm));
    }
    out
}

/// Band-limited random texture in roughly [20, 235].
pub fn smooth_texture(w: usize, h: usize, seed: u64, sigma: f64) -> GrayImage {
    let mut rng = rng_from_seed(seed);
    let raw = GrayImage::from_fn(w, h, |_, _| rng.random::<f32>() * 255.0);
    let blurred = gaussian_blur(&raw, sigma);
    let (mean, std) = blurred.mean_std();
    blurred.map(|v| (128.0 + (f64::from(v) - mean) / std.max(1e-9) * 40.0).clamp(0.0, 255.0) as f32)
}
