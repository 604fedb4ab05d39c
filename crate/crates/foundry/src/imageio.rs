//! PNG decoding and encoding for grayscale frames.

use std::path::Path;

use anyhow::{Context, Result};
use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{DynamicImage, ImageEncoder};
use patchfoundry_core::image::{to_gray, Raster, LUMA_WEIGHTS};
use patchfoundry_core::GrayImage;

pub const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

pub fn is_image_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn from_dynamic(img: DynamicImage) -> Result<GrayImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => Ok(GrayImage::from_u8(w, h, buf.as_raw())?),
        other => {
            let rgb = other.to_rgb8();
            let raster = Raster {
                width: w,
                height: h,
                channels: 3,
                data: rgb.into_raw().into_iter().map(f32::from).collect(),
            };
            Ok(to_gray(&raster, LUMA_WEIGHTS)?)
        }
    }
}

pub fn load_gray(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).with_context(|| format!("decoding {}", path.display()))?;
    from_dynamic(img)
}

pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage> {
    from_dynamic(image::load_from_memory(bytes)?)
}

/// Lossless 8-bit PNG of the image, rounded and clamped to [0, 255].
pub fn encode_png(img: &GrayImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    PngEncoder::new_with_quality(&mut out, CompressionType::Fast, FilterType::Adaptive).write_image(
        &img.to_u8(),
        u32::try_from(img.width())?,
        u32::try_from(img.height())?,
        image::ExtendedColorType::L8,
    )?;
    Ok(out)
}

pub fn save_png(path: &Path, img: &GrayImage) -> Result<()> {
    std::fs::write(path, encode_png(img)?).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::ImageFormat;
    use std::io::Cursor;

    #[test]
    fn png_round_trip_is_lossless_on_integers() {
        let img = GrayImage::from_fn(13, 7, |x, y| ((x * 19 + y * 7) % 256) as f32);
        let back = decode_gray(&encode_png(&img).unwrap()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn rgb_is_converted_with_luma_weights() {
        let rgb = image::RgbImage::from_pixel(2, 2, image::Rgb([200, 100, 50]));
        let mut bytes = Cursor::new(Vec::new());
        DynamicImage::ImageRgb8(rgb).write_to(&mut bytes, ImageFormat::Png).unwrap();
        let g = decode_gray(bytes.get_ref()).unwrap();
        let expected = 0.299 * 200.0 + 0.587 * 100.0 + 0.114 * 50.0;
        assert!((f64::from(g.get(1, 1)) - expected).abs() < 1e-3);
    }

    #[test]
    fn extension_filter() {
        assert!(is_image_path(Path::new("a/b.PNG")));
        assert!(!is_image_path(Path::new("a/b.det")));
    }
}
