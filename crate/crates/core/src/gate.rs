//! Camera selection: per-image quality filters and the per-camera keep rule.
//!
//! Five filters are evaluated on a random sample of each camera's images:
//! sky area, car/boat detections, sharpness, brightness and size. A camera
//! survives when enough of its sampled images pass all five.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::index;

use crate::image::{laplacian_variance, mean_intensity};
use crate::seed::derived_rng;
use crate::{Error, GrayImage, Result};

/// What to do with f1/f2 when an image has no detection sidecar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SidecarPolicy {
    /// Missing sidecar fails f1 and f2.
    #[default]
    Strict,
    /// Missing sidecar passes f1 and f2.
    Lenient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterThresholds {
    /// f1 passes when the sky fraction is strictly below this.
    pub sky_max: f64,
    /// f3 passes when the Laplacian variance is at least this.
    pub lap_var_min: f64,
    /// f4 passes when the mean intensity is strictly above this.
    pub mean_min: f64,
    /// f5 passes when width and height are strictly above these.
    pub min_width: usize,
    pub min_height: usize,
    pub sample_size: usize,
    pub pass_min: usize,
    /// Car/boat detections below this confidence are ignored by f2.
    pub confidence_floor: f64,
    pub missing_sidecar: SidecarPolicy,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        Self {
            sky_max: 0.5,
            lap_var_min: 180.0,
            mean_min: 30.0,
            min_width: 700,
            min_height: 700,
            sample_size: 20,
            pass_min: 14,
            confidence_floor: 0.5,
            missing_sidecar: SidecarPolicy::Strict,
        }
    }
}

impl FilterThresholds {
    pub fn validate(&self) -> Result<()> {
        let positive = self.sky_max > 0.0
            && self.lap_var_min > 0.0
            && self.mean_min > 0.0
            && self.min_width > 0
            && self.min_height > 0
            && self.sample_size > 0
            && self.pass_min > 0
            && self.confidence_floor >= 0.0;
        if !positive {
            return Err(Error::InvalidArgument(
                "filter thresholds must be positive".into(),
            ));
        }
        if self.pass_min > self.sample_size {
            return Err(Error::InvalidArgument(alloc::format!(
                "pass_min {} exceeds sample_size {}",
                self.pass_min,
                self.sample_size
            )));
        }
        Ok(())
    }
}

/// One object detection: class label, confidence, box `(x0, y0, x1, y1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub class: String,
    pub confidence: f64,
    pub bbox: [f64; 4],
}

impl Detection {
    pub fn is_vehicle(&self) -> bool {
        self.class.eq_ignore_ascii_case("car") || self.class.eq_ignore_ascii_case("boat")
    }
}

/// Externally computed sky fraction and object detections for one image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionSidecar {
    pub image_id: String,
    pub sky_fraction: f64,
    pub detections: Vec<Detection>,
}

impl DetectionSidecar {
    /// Clips boxes to `[0, width] x [0, height]`, orders their corners and
    /// clamps the sky fraction and confidences to [0, 1].
    pub fn clip_to(&mut self, width: usize, height: usize) {
        self.sky_fraction = self.sky_fraction.clamp(0.0, 1.0);
        for d in &mut self.detections {
            d.confidence = d.confidence.clamp(0.0, 1.0);
            let [x0, y0, x1, y1] = d.bbox;
            let (w, h) = (width as f64, height as f64);
            d.bbox = [
                x0.min(x1).clamp(0.0, w),
                y0.min(y1).clamp(0.0, h),
                x0.max(x1).clamp(0.0, w),
                y0.max(y1).clamp(0.0, h),
            ];
        }
    }
}

/// Image statistics the filters consume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageStats {
    pub width: usize,
    pub height: usize,
    pub laplacian_variance: f64,
    pub mean_intensity: f64,
}

impl ImageStats {
    pub fn measure(img: &GrayImage) -> Result<Self> {
        Ok(Self {
            width: img.width(),
            height: img.height(),
            laplacian_variance: laplacian_variance(img)?,
            mean_intensity: mean_intensity(img),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    pub image_id: String,
    /// not empty: sky area below `sky_max`
    pub f1: bool,
    /// not dynamic: no confident car or boat
    pub f2: bool,
    /// sharp
    pub f3: bool,
    /// not black
    pub f4: bool,
    /// large
    pub f5: bool,
    pub pass: bool,
    pub sidecar_missing: bool,
    pub corrupted: bool,
}

impl FilterReport {
    /// Report for an image that could not be decoded: fails everything.
    pub fn corrupted(image_id: &str) -> Self {
        Self {
            image_id: image_id.to_string(),
            f1: false,
            f2: false,
            f3: false,
            f4: false,
            f5: false,
            pass: false,
            sidecar_missing: false,
            corrupted: true,
        }
    }

    pub fn from_stats(
        image_id: &str,
        stats: &ImageStats,
        sidecar: Option<&DetectionSidecar>,
        th: &FilterThresholds,
    ) -> Self {
        let (f1, f2) = match sidecar {
            Some(sc) => (
                sc.sky_fraction < th.sky_max,
                !sc.detections
                    .iter()
                    .any(|d| d.is_vehicle() && d.confidence >= th.confidence_floor),
            ),
            None => {
                let ok = th.missing_sidecar == SidecarPolicy::Lenient;
                (ok, ok)
            }
        };
        let f3 = stats.laplacian_variance >= th.lap_var_min;
        let f4 = stats.mean_intensity > th.mean_min;
        let f5 = stats.width > th.min_width && stats.height > th.min_height;
        Self {
            image_id: image_id.to_string(),
            f1,
            f2,
            f3,
            f4,
            f5,
            pass: f1 && f2 && f3 && f4 && f5,
            sidecar_missing: sidecar.is_none(),
            corrupted: false,
        }
    }

    pub fn flags(&self) -> [bool; 5] {
        [self.f1, self.f2, self.f3, self.f4, self.f5]
    }
}

/// Evaluates the five filters on one image.
pub fn check_image(
    image_id: &str,
    img: &GrayImage,
    sidecar: Option<&DetectionSidecar>,
    th: &FilterThresholds,
) -> Result<FilterReport> {
    let stats = ImageStats::measure(img)?;
    Ok(FilterReport::from_stats(image_id, &stats, sidecar, th))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraDecision {
    pub camera_id: String,
    pub sampled_image_ids: Vec<String>,
    pub reports: Vec<FilterReport>,
    pub kept: bool,
    /// Number of sampled images failing f1..f5 respectively.
    pub failure_counts: [usize; 5],
}

impl CameraDecision {
    pub fn from_reports(
        camera_id: &str,
        reports: Vec<FilterReport>,
        th: &FilterThresholds,
    ) -> Self {
        let mut failure_counts = [0usize; 5];
        for r in &reports {
            for (count, ok) in failure_counts.iter_mut().zip(r.flags()) {
                if !ok {
                    *count += 1;
                }
            }
        }
        let passing = reports.iter().filter(|r| r.pass).count();
        Self {
            camera_id: camera_id.to_string(),
            sampled_image_ids: reports.iter().map(|r| r.image_id.clone()).collect(),
            kept: passing >= th.pass_min,
            reports,
            failure_counts,
        }
    }

    pub fn passing(&self) -> usize {
        self.reports.iter().filter(|r| r.pass).count()
    }
}

/// Draws up to `sample_size` distinct ids, uniformly without replacement.
///
/// The stream depends only on `(seed, camera_id)`; the result is returned
/// in the order of `image_ids`.
pub fn sample_images(
    camera_id: &str,
    image_ids: &[String],
    sample_size: usize,
    seed: u64,
) -> Vec<String> {
    if image_ids.len() <= sample_size {
        return image_ids.to_vec();
    }
    let mut rng = derived_rng(seed, &[b"gate".as_slice(), camera_id.as_bytes()]);
    let mut picked = index::sample(&mut rng, image_ids.len(), sample_size).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| image_ids[i].clone()).collect()
}

/// Loaded image with its optional sidecar, or a decode error message.
pub type LoadedImage = core::result::Result<(GrayImage, Option<DetectionSidecar>), String>;

/// Samples, loads and checks one camera. Images that fail to load count as
/// failing every filter.
pub fn select_camera(
    camera_id: &str,
    image_ids: &[String],
    th: &FilterThresholds,
    seed: u64,
    mut load: impl FnMut(&str) -> LoadedImage,
) -> Result<CameraDecision> {
    th.validate()?;
    if image_ids.is_empty() {
        return Err(Error::NotEnoughData {
            needed: 1,
            available: 0,
        });
    }
    let sampled = sample_images(camera_id, image_ids, th.sample_size, seed);
    let reports = sampled
        .iter()
        .map(|id| match load(id) {
            Ok((img, sidecar)) => check_image(id, &img, sidecar.as_ref(), th)
                .unwrap_or_else(|_| FilterReport::corrupted(id)),
            Err(_) => FilterReport::corrupted(id),
        })
        .collect();
    Ok(CameraDecision::from_reports(camera_id, reports, th))
}
