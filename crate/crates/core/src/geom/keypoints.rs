use alloc::vec::Vec;

use crate::image::gaussian_blur;
use crate::{Error, GrayImage, Result};

/// Smallest image side accepted by the detector.
pub const MIN_DETECT_SIDE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub response: f64,
    /// Side of the support window in pixels.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarrisParams {
    /// Gradient pre-smoothing.
    pub sigma_derivative: f64,
    /// Structure-tensor integration window.
    pub sigma_integration: f64,
    pub k: f64,
    /// Responses below this fraction of the strongest one are discarded.
    pub relative_threshold: f64,
    /// Pixels this close to the border are never reported.
    pub border: usize,
}

impl Default for HarrisParams {
    fn default() -> Self {
        Self {
            sigma_derivative: 0.5,
            sigma_integration: 0.8,
            k: 0.04,
            relative_threshold: 0.01,
            border: 8,
        }
    }
}

/// Harris corners with 3x3 non-maximum suppression, strongest `max_kp`
/// first, refined to subpixel accuracy by a per-axis quadratic fit.
pub fn detect_keypoints(img: &GrayImage, max_kp: usize) -> Result<Vec<Keypoint>> {
    detect_keypoints_with(img, max_kp, &HarrisParams::default())
}

pub fn detect_keypoints_with(
    img: &GrayImage,
    max_kp: usize,
    params: &HarrisParams,
) -> Result<Vec<Keypoint>> {
    let (w, h) = (img.width(), img.height());
    if w < MIN_DETECT_SIDE || h < MIN_DETECT_SIDE {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min_width: MIN_DETECT_SIDE,
            min_height: MIN_DETECT_SIDE,
        });
    }
    if max_kp == 0 {
        return Ok(Vec::new());
    }
    let smooth = gaussian_blur(img, params.sigma_derivative);
    let s = smooth.data();
    let mut ixx = alloc::vec![0.0f32; w * h];
    let mut iyy = alloc::vec![0.0f32; w * h];
    let mut ixy = alloc::vec![0.0f32; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let gx = 0.5 * (s[i + 1] - s[i - 1]);
            let gy = 0.5 * (s[i + w] - s[i - w]);
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }
    let blur = |v: Vec<f32>| {
        gaussian_blur(
            &GrayImage::new(w, h, v).expect("finite products"),
            params.sigma_integration,
        )
        .into_data()
    };
    let (sxx, syy, sxy) = (blur(ixx), blur(iyy), blur(ixy));
    let mut response = alloc::vec![0.0f64; w * h];
    let mut max_r = 0.0f64;
    for i in 0..w * h {
        let (a, b, c) = (f64::from(sxx[i]), f64::from(syy[i]), f64::from(sxy[i]));
        let r = a * b - c * c - params.k * (a + b) * (a + b);
        response[i] = r;
        max_r = max_r.max(r);
    }
    if !(max_r > 1e-9) {
        return Ok(Vec::new());
    }
    let floor = params.relative_threshold * max_r;
    let border = params.border.max(1);
    let mut candidates = Vec::new();
    for y in border..h.saturating_sub(border) {
        for x in border..w.saturating_sub(border) {
            let i = y * w + x;
            let r = response[i];
            if r <= floor {
                continue;
            }
            let mut is_max = true;
            'nb: for dy in [-1isize, 0, 1] {
                for dx in [-1isize, 0, 1] {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let j = (i as isize + dy * w as isize + dx) as usize;
                    // strict against earlier neighbours, non-strict against later ones,
                    // so plateaus yield exactly one maximum
                    let later = dy > 0 || (dy == 0 && dx > 0);
                    if response[j] > r || (!later && response[j] == r) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                candidates.push((r, x, y));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));
    candidates.truncate(max_kp);
    Ok(candidates
        .into_iter()
        .map(|(r, x, y)| {
            let i = y * w + x;
            let ox = parabola_offset(response[i - 1], r, response[i + 1]);
            let oy = parabola_offset(response[i - w], r, response[i + w]);
            Keypoint {
                x: x as f64 + ox,
                y: y as f64 + oy,
                response: r,
                scale: 16.0,
            }
        })
        .collect())
}

fn parabola_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom.abs() < 1e-300 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}
