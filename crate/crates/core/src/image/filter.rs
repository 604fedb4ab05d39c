use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use super::GrayImage;

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    k
}

/// Separable Gaussian blur with replicated borders. `sigma <= 0` copies.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if !(sigma > 0.0) {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (img.width(), img.height());
    let src = img.data();
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0f64;
            for (i, kv) in k.iter().enumerate() {
                let xx = (x as isize + i as isize - r).clamp(0, w as isize - 1) as usize;
                acc += kv * f64::from(row[xx]);
            }
            tmp[y * w + x] = acc as f32;
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for (i, kv) in k.iter().enumerate() {
            let yy = (y as isize + i as isize - r).clamp(0, h as isize - 1) as usize;
            let src_row = &tmp[yy * w..(yy + 1) * w];
            let dst_row = &mut out[y * w..(y + 1) * w];
            for (d, &s) in dst_row.iter_mut().zip(src_row) {
                *d += (*kv as f32) * s;
            }
        }
    }
    GrayImage::new(w, h, out).expect("blur preserves shape and finiteness")
}

/// 2x2 box downsampling. Output pixel `(x, y)` covers input pixels
/// `2x..2x+1`, so output coordinates map back as `x_in = 2 x_out + 0.5`.
pub fn downsample2(img: &GrayImage) -> GrayImage {
    let w = (img.width() / 2).max(1);
    let h = (img.height() / 2).max(1);
    GrayImage::from_fn(w, h, |x, y| {
        let x0 = (2 * x).min(img.width() - 1);
        let y0 = (2 * y).min(img.height() - 1);
        let x1 = (x0 + 1).min(img.width() - 1);
        let y1 = (y0 + 1).min(img.height() - 1);
        0.25 * (img.get(x0, y0) + img.get(x1, y0) + img.get(x0, y1) + img.get(x1, y1))
    })
}

/// Finest level first; `levels >= 1`.
pub fn pyramid(img: &GrayImage, levels: usize) -> Vec<GrayImage> {
    let mut out = vec![img.clone()];
    for _ in 1..levels.max(1) {
        let next = downsample2(out.last().expect("non-empty"));
        out.push(next);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_preserves_constant_and_mass() {
        let c = GrayImage::filled(9, 7, 50.0);
        let b = gaussian_blur(&c, 1.5);
        for &v in b.data() {
            assert!((v - 50.0).abs() < 1e-4);
        }
        let mut spike = GrayImage::filled(31, 31, 0.0);
        spike.set(15, 15, 100.0);
        let b = gaussian_blur(&spike, 2.0);
        let total: f32 = b.data().iter().sum();
        assert!((total - 100.0).abs() < 1e-3);
        assert!(b.get(15, 15) > b.get(16, 15));
    }

    #[test]
    fn downsample_shapes() {
        let img = GrayImage::from_fn(9, 6, |x, y| (x + 10 * y) as f32);
        let d = downsample2(&img);
        assert_eq!((d.width(), d.height()), (4, 3));
        assert_eq!(d.get(0, 0), (0.0 + 1.0 + 10.0 + 11.0) / 4.0);
        assert_eq!(pyramid(&img, 3).len(), 3);
    }
}
