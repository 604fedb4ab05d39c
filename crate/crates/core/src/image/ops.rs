use alloc::vec::Vec;

use super::{GrayImage, ValidMask};
use crate::{Error, Homography, Result};

/// ITU-R BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Decoded multi-channel raster, interleaved row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

/// Collapses a 1- or 3-channel raster to intensity.
pub fn to_gray(raster: &Raster, weights: [f64; 3]) -> Result<GrayImage> {
    match raster.channels {
        1 => GrayImage::new(raster.width, raster.height, raster.data.clone()),
        3 => {
            if raster.data.len() != raster.width * raster.height * 3 {
                return Err(Error::InvalidImage("raster length mismatch".into()));
            }
            let data = raster
                .data
                .chunks_exact(3)
                .map(|px| {
                    (weights[0] * f64::from(px[0])
                        + weights[1] * f64::from(px[1])
                        + weights[2] * f64::from(px[2])) as f32
                })
                .collect();
            GrayImage::new(raster.width, raster.height, data)
        }
        c => Err(Error::UnsupportedChannels(c)),
    }
}

/// Population variance of the 4-neighbour Laplacian over interior pixels.
///
/// The 180 sharpness threshold used by camera selection is tied to this
/// kernel; other discretizations need their own threshold.
pub fn laplacian_variance(img: &GrayImage) -> Result<f64> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min_width: 3,
            min_height: 3,
        });
    }
    let d = img.data();
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let r = f64::from(d[i - w])
                + f64::from(d[i + w])
                + f64::from(d[i - 1])
                + f64::from(d[i + 1])
                - 4.0 * f64::from(d[i]);
            sum += r;
            sum_sq += r * r;
        }
    }
    let n = ((w - 2) * (h - 2)) as f64;
    let mean = sum / n;
    Ok((sum_sq / n - mean * mean).max(0.0))
}

pub fn mean_intensity(img: &GrayImage) -> f64 {
    img.data().iter().map(|&v| f64::from(v)).sum::<f64>() / img.data().len() as f64
}

/// Inverse-mapping warp.
///
/// `h` maps *output* coordinates to *input* coordinates: output pixel `q`
/// takes the bilinear sample of `img` at `h(q)`. Pixels whose source point
/// falls outside the input are set to 0 and flagged invalid.
pub fn warp_image(
    img: &GrayImage,
    h: &Homography,
    out_w: usize,
    out_h: usize,
) -> Result<(GrayImage, ValidMask)> {
    if !(h.determinant().abs() > crate::homography::MIN_ABS_DET) {
        return Err(Error::SingularHomography);
    }
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidArgument("empty output size".into()));
    }
    let mut data = Vec::with_capacity(out_w * out_h);
    let mut valid = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        for x in 0..out_w {
            let (sx, sy) = h.apply(x as f64, y as f64);
            match img.sample_bilinear(sx, sy) {
                Some(v) => {
                    data.push(v as f32);
                    valid.push(true);
                }
                None => {
                    data.push(0.0);
                    valid.push(false);
                }
            }
        }
    }
    Ok((
        GrayImage::new(out_w, out_h, data)?,
        ValidMask::from_vec(out_w, out_h, valid)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn checkerboard(n: usize) -> GrayImage {
        GrayImage::from_fn(n, n, |x, y| if (x + y) % 2 == 0 { 0.0 } else { 255.0 })
    }

    /// Independent convolution: explicit 3x3 kernel loop, two-pass variance.
    fn oracle_laplacian_variance(img: &GrayImage) -> f64 {
        let k = [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]];
        let mut responses = vec![];
        for y in 1..img.height() - 1 {
            for x in 1..img.width() - 1 {
                let mut acc = 0.0;
                for (dy, row) in k.iter().enumerate() {
                    for (dx, kv) in row.iter().enumerate() {
                        acc += kv * f64::from(img.get(x + dx - 1, y + dy - 1));
                    }
                }
                responses.push(acc);
            }
        }
        let mean = responses.iter().sum::<f64>() / responses.len() as f64;
        responses
            .iter()
            .map(|r| (r - mean) * (r - mean))
            .sum::<f64>()
            / responses.len() as f64
    }

    #[test]
    fn to_gray_cases() {
        let single = Raster {
            width: 2,
            height: 1,
            channels: 1,
            data: vec![3.0, 4.0],
        };
        assert_eq!(to_gray(&single, LUMA_WEIGHTS).unwrap().data(), &[3.0, 4.0]);

        let grey = Raster {
            width: 2,
            height: 2,
            channels: 3,
            data: vec![100.0; 12],
        };
        for &v in to_gray(&grey, LUMA_WEIGHTS).unwrap().data() {
            assert!((v - 100.0).abs() < 1e-4);
        }

        let red = Raster {
            width: 1,
            height: 1,
            channels: 3,
            data: vec![255.0, 0.0, 0.0],
        };
        let g = to_gray(&red, LUMA_WEIGHTS).unwrap();
        assert!((f64::from(g.data()[0]) - 76.245).abs() < 1e-4);

        let bad = Raster {
            width: 1,
            height: 1,
            channels: 4,
            data: vec![0.0; 4],
        };
        assert_eq!(
            to_gray(&bad, LUMA_WEIGHTS),
            Err(Error::UnsupportedChannels(4))
        );
    }

    #[test]
    fn laplacian_examples() {
        assert_eq!(
            laplacian_variance(&GrayImage::filled(10, 10, 77.0)).unwrap(),
            0.0
        );
        let board = checkerboard(8);
        let v = laplacian_variance(&board).unwrap();
        assert_eq!(oracle_laplacian_variance(&board), 1_040_400.0);
        assert!((v - 1_040_400.0).abs() < 1e-6);
        assert!(laplacian_variance(&GrayImage::filled(2, 5, 1.0)).is_err());
    }

    #[test]
    fn laplacian_matches_oracle_on_textured_image() {
        let img = GrayImage::from_fn(64, 48, |x, y| {
            let (x, y) = (x as f32, y as f32);
            128.0 + 40.0 * (x * 0.7).sin() * (y * 0.45).cos() + ((x * 7.0 + y * 13.0) % 11.0)
        });
        let v = laplacian_variance(&img).unwrap();
        let o = oracle_laplacian_variance(&img);
        assert!((v - o).abs() <= 1e-9 * o.max(1.0));
        assert_eq!(v >= 180.0, o >= 180.0);
    }

    #[test]
    fn mean_boundary() {
        assert_eq!(mean_intensity(&GrayImage::filled(5, 5, 42.0)), 42.0);
        let half = GrayImage::from_fn(10, 10, |x, _| if x < 5 { 0.0 } else { 60.0 });
        let m = mean_intensity(&half);
        assert_eq!(m, 30.0);
        assert!(!(m > 30.0));
    }

    #[test]
    fn warp_identity_and_translation() {
        let img = GrayImage::from_fn(20, 15, |x, y| (x * 3 + y * 7) as f32);
        let (out, mask) = warp_image(&img, &Homography::identity(), 20, 15).unwrap();
        assert_eq!(out, img);
        assert_eq!(mask.count_valid(), 300);

        let (out, mask) = warp_image(&img, &Homography::translation(5.0, 0.0), 20, 15).unwrap();
        for y in 0..15 {
            for x in 0..20 {
                if x + 5 < 20 {
                    assert!(mask.is_valid(x, y));
                    assert_eq!(out.get(x, y), img.get(x + 5, y));
                } else {
                    assert!(!mask.is_valid(x, y));
                    assert_eq!(out.get(x, y), 0.0);
                }
            }
        }
    }
}
