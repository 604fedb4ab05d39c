use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use crate::image::gaussian_blur;
use crate::{Error, GrayImage, Result, ValidMask};

/// Smallest side accepted by [`hessian_response`].
pub const MIN_RESPONSE_SIDE: usize = 7;

/// `|Ixx·Iyy − Ixy²|` of the Gaussian-smoothed image, with second
/// derivatives from central differences. The one-pixel border is zero.
pub fn hessian_response(img: &GrayImage, sigma: f64) -> Result<GrayImage> {
    let (w, h) = (img.width(), img.height());
    if w < MIN_RESPONSE_SIDE || h < MIN_RESPONSE_SIDE {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min_width: MIN_RESPONSE_SIDE,
            min_height: MIN_RESPONSE_SIDE,
        });
    }
    let s = if sigma > 0.0 {
        gaussian_blur(img, sigma)
    } else {
        img.clone()
    };
    let p = s.data();
    let mut out = vec![0.0f32; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let c = f64::from(p[i]);
            let ixx = f64::from(p[i + 1]) - 2.0 * c + f64::from(p[i - 1]);
            let iyy = f64::from(p[i + w]) - 2.0 * c + f64::from(p[i - w]);
            let ixy = 0.25
                * (f64::from(p[i + w + 1]) - f64::from(p[i - w + 1]) - f64::from(p[i + w - 1])
                    + f64::from(p[i - w - 1]));
            out[i] = (ixx * iyy - ixy * ixy).abs() as f32;
        }
    }
    GrayImage::new(w, h, out)
}

/// How the images of a view are combined into one response map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskMode {
    /// Response of the pixelwise mean image.
    AverageThenResponse,
    /// Pixelwise mean of the per-image responses.
    ResponseThenAverage,
    /// Response of the reference image only.
    ReferenceOnly,
}

impl MaskMode {
    pub const ALL: [MaskMode; 3] = [
        MaskMode::AverageThenResponse,
        MaskMode::ResponseThenAverage,
        MaskMode::ReferenceOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MaskMode::AverageThenResponse => "average-then-response",
            MaskMode::ResponseThenAverage => "response-then-average",
            MaskMode::ReferenceOnly => "reference-only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

/// A probability distribution over the pixels of the reference frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMask {
    width: usize,
    height: usize,
    weights: Vec<f64>,
}

impl ResponseMask {
    /// Normalizes nonnegative finite `weights` to sum to one.
    pub fn from_weights(width: usize, height: usize, mut weights: Vec<f64>) -> Result<Self> {
        if weights.len() != width * height || weights.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("mask weights"));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidArgument("negative mask weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidArgument("mask has no mass".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self {
            width,
            height,
            weights,
        })
    }

    /// Uniform over the valid pixels of `valid`.
    pub fn uniform(valid: &ValidMask) -> Result<Self> {
        let weights = valid
            .as_slice()
            .iter()
            .map(|&v| if v { 1.0 } else { 0.0 })
            .collect();
        Self::from_weights(valid.width(), valid.height(), weights)
    }

    /// All mass on one pixel.
    pub fn point(width: usize, height: usize, x: usize, y: usize) -> Result<Self> {
        if x >= width || y >= height {
            return Err(Error::OutOfBounds(format!(
                "({x}, {y}) outside {width}x{height}"
            )));
        }
        let mut weights = vec![0.0; width * height];
        weights[y * width + x] = 1.0;
        Self::from_weights(width, height, weights)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, x: usize, y: usize) -> f64 {
        self.weights[y * self.width + x]
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn sampler(&self) -> MaskSampler {
        let mut cdf = Vec::with_capacity(self.weights.len());
        let mut acc = 0.0;
        for &w in &self.weights {
            acc += w;
            cdf.push(acc);
        }
        let last_positive = self.weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
        MaskSampler {
            width: self.width,
            cdf,
            last_positive,
        }
    }
}

/// Inverse-CDF sampler over the flattened mask.
#[derive(Debug, Clone)]
pub struct MaskSampler {
    width: usize,
    cdf: Vec<f64>,
    last_positive: usize,
}

impl MaskSampler {
    /// Draws a pixel `(x, y)` with probability equal to its weight.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let total = *self.cdf.last().expect("nonempty mask");
        let u = rng.random::<f64>() * total;
        let i = self
            .cdf
            .partition_point(|&c| c <= u)
            .min(self.last_positive);
        (i % self.width, i / self.width)
    }
}

/// Result of [`build_probability_mask`].
#[derive(Debug, Clone, PartialEq)]
pub struct MaskOutcome {
    pub mask: ResponseMask,
    /// Set when the response vanished on the valid region and a uniform
    /// mask was substituted.
    pub uniform_fallback: bool,
}

fn mean_image(images: &[&GrayImage]) -> Result<GrayImage> {
    let first = images[0];
    let n = images.len() as f64;
    // f64 accumulation keeps the mean of identical f32 inputs exact
    let data = (0..first.data().len())
        .map(|i| (images.iter().map(|im| f64::from(im.data()[i])).sum::<f64>() / n) as f32)
        .collect();
    GrayImage::new(first.width(), first.height(), data)
}

/// Builds the patch-centre distribution of a view from its images warped
/// into the reference frame (`images[0]` is the reference) and their
/// validity masks. Pixels invalid in any member get zero weight.
pub fn build_probability_mask(
    images: &[&GrayImage],
    valid: &[&ValidMask],
    mode: MaskMode,
    sigma: f64,
) -> Result<MaskOutcome> {
    let first = *images.first().ok_or(Error::NotEnoughData {
        needed: 1,
        available: 0,
    })?;
    if valid.len() != images.len() {
        return Err(Error::DimensionMismatch {
            expected: images.len(),
            got: valid.len(),
        });
    }
    let (w, h) = (first.width(), first.height());
    if images.iter().any(|im| im.width() != w || im.height() != h)
        || valid.iter().any(|m| m.width() != w || m.height() != h)
    {
        return Err(Error::InvalidArgument("view images differ in size".into()));
    }
    let response = match mode {
        MaskMode::ReferenceOnly => hessian_response(first, sigma)?,
        MaskMode::AverageThenResponse => hessian_response(&mean_image(images)?, sigma)?,
        MaskMode::ResponseThenAverage => {
            let responses = images
                .iter()
                .map(|im| hessian_response(im, sigma))
                .collect::<Result<Vec<_>>>()?;
            mean_image(&responses.iter().collect::<Vec<_>>())?
        }
    };
    let mut joint = ValidMask::all_valid(w, h);
    for m in valid {
        joint.intersect(m)?;
    }
    let weights: Vec<f64> = response
        .data()
        .iter()
        .zip(joint.as_slice())
        .map(|(&r, &ok)| if ok { f64::from(r) } else { 0.0 })
        .collect();
    if weights.iter().sum::<f64>() > 0.0 {
        Ok(MaskOutcome {
            mask: ResponseMask::from_weights(w, h, weights)?,
            uniform_fallback: false,
        })
    } else {
        if joint.count_valid() == 0 {
            return Err(Error::InvalidArgument(
                "view has no pixel valid in every member".into(),
            ));
        }
        Ok(MaskOutcome {
            mask: ResponseMask::uniform(&joint)?,
            uniform_fallback: true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn blob(w: usize, h: usize, cx: f64, cy: f64, s: f64) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            (200.0 * (-d2 / (2.0 * s * s)).exp()) as f32
        })
    }

    fn argmax(img: &GrayImage) -> (usize, usize) {
        let (i, _) = img
            .data()
            .iter()
            .enumerate()
            .fold((0, f32::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        (i % img.width(), i / img.width())
    }

    #[test]
    fn constant_and_ramp_give_zero() {
        let c = hessian_response(&GrayImage::filled(20, 20, 90.0), 1.0).unwrap();
        assert!(c.data().iter().all(|&v| v == 0.0));
        let ramp = GrayImage::from_fn(20, 20, |x, y| (3 * x + 2 * y) as f32);
        let r = hessian_response(&ramp, 0.0).unwrap();
        assert!(r.data().iter().all(|&v| v.abs() < 1e-3));
        assert!(hessian_response(&GrayImage::filled(6, 20, 0.0), 1.0).is_err());
    }

    #[test]
    fn blob_peak_at_centre() {
        let r = hessian_response(&blob(64, 64, 30.0, 33.0, 4.0), 1.0).unwrap();
        let (x, y) = argmax(&r);
        assert!((x as f64 - 30.0).abs() <= 1.0 && (y as f64 - 33.0).abs() <= 1.0);
    }

    #[test]
    fn modes_agree_on_single_member() {
        let img = blob(40, 40, 20.0, 20.0, 3.0);
        let v = ValidMask::all_valid(40, 40);
        let masks: Vec<_> = MaskMode::ALL
            .iter()
            .map(|&m| build_probability_mask(&[&img], &[&v], m, 1.0).unwrap().mask)
            .collect();
        assert_eq!(masks[0], masks[1]);
        assert_eq!(masks[1], masks[2]);
        assert!((masks[0].total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn disjoint_blobs_separate_modes() {
        let a = blob(60, 40, 15.0, 20.0, 3.0);
        let b = blob(60, 40, 45.0, 20.0, 3.0);
        let v = ValidMask::all_valid(60, 40);
        let rta = build_probability_mask(&[&a, &b], &[&v, &v], MaskMode::ResponseThenAverage, 1.0)
            .unwrap()
            .mask;
        let atr = build_probability_mask(&[&a, &b], &[&v, &v], MaskMode::AverageThenResponse, 1.0)
            .unwrap()
            .mask;
        assert!((rta.total() - 1.0).abs() < 1e-9 && (atr.total() - 1.0).abs() < 1e-9);
        assert!(rta.weight(15, 20) > 0.0 && rta.weight(45, 20) > 0.0);
        assert!((rta.weight(15, 20) - rta.weight(45, 20)).abs() < 1e-3 * rta.weight(15, 20));
        assert_ne!(rta, atr);
    }

    #[test]
    fn constant_view_falls_back_to_uniform_on_valid() {
        let img = GrayImage::filled(10, 10, 50.0);
        let mut valid = vec![true; 100];
        valid[0] = false;
        let m = ValidMask::from_vec(10, 10, valid).unwrap();
        let out = build_probability_mask(&[&img], &[&m], MaskMode::ReferenceOnly, 1.0).unwrap();
        assert!(out.uniform_fallback);
        assert_eq!(out.mask.weight(0, 0), 0.0);
        assert!((out.mask.weight(5, 5) - 1.0 / 99.0).abs() < 1e-12);
    }

    #[test]
    fn point_mass_sampling() {
        let m = ResponseMask::point(200, 150, 100, 100).unwrap();
        let s = m.sampler();
        let mut rng = rng_from_seed(3);
        for _ in 0..1000 {
            assert_eq!(s.draw(&mut rng), (100, 100));
        }
    }
}
