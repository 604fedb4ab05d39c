use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use crate::{Error, GrayImage, Result};

/// Output side of an augmented patch.
pub const AUGMENT_OUT: usize = 32;
/// Side of the central window the crop is taken from.
pub const AUGMENT_WINDOW: f64 = 64.0;

/// Sampling ranges of the augmentation (angles in radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub rotation: (f64, f64),
    pub scale: (f64, f64),
    /// Shear range applied independently to each axis.
    pub shear: (f64, f64),
    /// Side of the square cropped from the central window, before resampling.
    pub crop: (f64, f64),
}

impl Default for AugmentParams {
    fn default() -> Self {
        let r = 25f64.to_radians();
        Self {
            rotation: (-r, r),
            scale: (0.8, 1.4),
            shear: (-0.2, 0.2),
            crop: (32.0, 64.0),
        }
    }
}

/// One concrete draw of the augmentation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub rotation: f64,
    pub scale: f64,
    pub shear_x: f64,
    pub shear_y: f64,
    pub crop: f64,
}

impl AugmentDraw {
    pub const IDENTITY: AugmentDraw = AugmentDraw {
        rotation: 0.0,
        scale: 1.0,
        shear_x: 0.0,
        shear_y: 0.0,
        crop: 32.0,
    };

    pub fn sample<R: Rng + ?Sized>(rng: &mut R, p: &AugmentParams) -> Self {
        let mut u = |(lo, hi): (f64, f64)| lo + (hi - lo) * rng.random::<f64>();
        Self {
            rotation: u(p.rotation),
            scale: u(p.scale),
            shear_x: u(p.shear),
            shear_y: u(p.shear),
            crop: u(p.crop),
        }
    }

    /// Linear part `A = R·S·Sh` of the forward transform about the patch centre.
    fn forward(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.rotation.sin_cos();
        let sh = [[1.0, self.shear_x], [self.shear_y, 1.0]];
        let r = [
            [c * self.scale, -s * self.scale],
            [s * self.scale, c * self.scale],
        ];
        [
            [
                r[0][0] * sh[0][0] + r[0][1] * sh[1][0],
                r[0][0] * sh[0][1] + r[0][1] * sh[1][1],
            ],
            [
                r[1][0] * sh[0][0] + r[1][1] * sh[1][0],
                r[1][0] * sh[0][1] + r[1][1] * sh[1][1],
            ],
        ]
    }
}

/// Applies `draw`: the patch is transformed about its centre, then a
/// `crop`-sided square at the centre is resampled to 32×32. Samples that
/// fall outside the input (possible at the extremes of the ranges) are
/// clamped to the border.
pub fn augment_with(patch: &GrayImage, draw: &AugmentDraw) -> Result<GrayImage> {
    if patch.width() < AUGMENT_WINDOW as usize || patch.height() < AUGMENT_WINDOW as usize {
        return Err(Error::ImageTooSmall {
            width: patch.width(),
            height: patch.height(),
            min_width: AUGMENT_WINDOW as usize,
            min_height: AUGMENT_WINDOW as usize,
        });
    }
    let a = draw.forward();
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if !(det.abs() > 1e-12) {
        return Err(Error::InvalidArgument("degenerate augmentation".into()));
    }
    let inv = [
        [a[1][1] / det, -a[0][1] / det],
        [-a[1][0] / det, a[0][0] / det],
    ];
    let cx = (patch.width() as f64 - 1.0) / 2.0;
    let cy = (patch.height() as f64 - 1.0) / 2.0;
    let half = (AUGMENT_OUT as f64 - 1.0) / 2.0;
    let step = draw.crop / AUGMENT_OUT as f64;
    let mut data = Vec::with_capacity(AUGMENT_OUT * AUGMENT_OUT);
    for v in 0..AUGMENT_OUT {
        for u in 0..AUGMENT_OUT {
            let dx = (u as f64 - half) * step;
            let dy = (v as f64 - half) * step;
            let sx = cx + inv[0][0] * dx + inv[0][1] * dy;
            let sy = cy + inv[1][0] * dx + inv[1][1] * dy;
            data.push(patch.sample_clamped(sx, sy) as f32);
        }
    }
    GrayImage::new(AUGMENT_OUT, AUGMENT_OUT, data)
}

/// Draws parameters from `rng` and applies them.
pub fn augment_patch<R: Rng + ?Sized>(
    patch: &GrayImage,
    params: &AugmentParams,
    rng: &mut R,
) -> Result<GrayImage> {
    let draw = AugmentDraw::sample(rng, params);
    augment_with(patch, &draw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn patch() -> GrayImage {
        GrayImage::from_fn(96, 96, |x, y| ((x * 7 + y * 13) % 251) as f32)
    }

    #[test]
    fn identity_draw_is_central_crop() {
        let p = patch();
        let out = augment_with(&p, &AugmentDraw::IDENTITY).unwrap();
        for v in 0..32 {
            for u in 0..32 {
                assert_eq!(out.get(u, v), p.get(32 + u, 32 + v));
            }
        }
    }

    #[test]
    fn random_draws_are_finite_32() {
        let p = patch();
        let mut rng = rng_from_seed(2);
        for _ in 0..200 {
            let out = augment_patch(&p, &AugmentParams::default(), &mut rng).unwrap();
            assert_eq!((out.width(), out.height()), (32, 32));
            assert!(out.data().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn rejects_small_input() {
        assert!(augment_with(&GrayImage::filled(40, 40, 0.0), &AugmentDraw::IDENTITY).is_err());
    }
}
