//! Flat `key = value` pipeline configuration.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use patchfoundry_core::cluster::KMeansParams;
use patchfoundry_core::gate::{FilterThresholds, SidecarPolicy};
use patchfoundry_core::geom::{MatcherConfig, RefineParams, ViewClusterRule};
use patchfoundry_core::sampler::{AugmentParams, MaskMode, SpecRanges};
use sha2::{Digest, Sha256};

use crate::stage::Stage;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub input_root: PathBuf,
    pub output_root: PathBuf,
    pub seed: u64,
    pub jobs: usize,

    pub sky_max: f64,
    pub lap_var_min: f64,
    pub mean_min: f64,
    pub min_width: usize,
    pub min_height: usize,
    pub sample_size: usize,
    pub pass_min: usize,
    pub confidence_floor: f64,
    pub missing_sidecar: SidecarPolicy,

    pub k: usize,
    pub kmeans_max_iters: usize,
    pub kmeans_tol: f64,
    pub l2_normalize_embeddings: bool,

    pub max_keypoints: usize,
    pub ratio: f64,
    pub inlier_px: f64,
    pub ransac_max_iters: usize,
    pub matcher_downscale: usize,
    pub min_inliers: usize,
    pub max_sad: f64,
    pub view_min: usize,
    pub view_cap: usize,

    pub refine_levels: usize,
    pub refine_max_iters: usize,
    pub ncc_floor: f64,
    pub refine_min_valid: f64,

    pub mask_mode: MaskMode,
    pub hessian_sigma: f64,
    pub n_patch_sets: usize,
    pub scale_min: f64,
    pub scale_max: f64,
    pub angle_min_deg: f64,
    pub angle_max_deg: f64,
    pub test_fraction: f64,

    pub batch_size: usize,
    pub views_per_batch: usize,
    pub batch_trials: usize,
    pub margin: f64,
    pub rotation_deg: f64,
    pub aug_scale_min: f64,
    pub aug_scale_max: f64,
    pub shear: f64,

    pub dereg_shifts: Vec<f64>,
    /// Optional `AMEM` file of descriptors keyed `<set_id>:<member>`; empty
    /// means the built-in baseline descriptor.
    pub external_descriptors: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let th = FilterThresholds::default();
        let km = KMeansParams::default();
        let mc = MatcherConfig::default();
        let rule = ViewClusterRule::default();
        let rp = RefineParams::default();
        let sr = SpecRanges::default();
        let aug = AugmentParams::default();
        Self {
            input_root: PathBuf::from("input"),
            output_root: PathBuf::from("out"),
            seed: 0,
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
            sky_max: th.sky_max,
            lap_var_min: th.lap_var_min,
            mean_min: th.mean_min,
            min_width: th.min_width,
            min_height: th.min_height,
            sample_size: th.sample_size,
            pass_min: th.pass_min,
            confidence_floor: th.confidence_floor,
            missing_sidecar: th.missing_sidecar,
            k: km.k,
            kmeans_max_iters: km.max_iters,
            kmeans_tol: km.tol,
            l2_normalize_embeddings: false,
            max_keypoints: mc.max_keypoints,
            ratio: mc.ratio,
            inlier_px: mc.inlier_px,
            ransac_max_iters: mc.ransac_max_iters,
            matcher_downscale: mc.downscale_levels,
            min_inliers: rule.min_inliers,
            max_sad: rule.max_sad,
            view_min: 50,
            view_cap: 50,
            refine_levels: rp.levels,
            refine_max_iters: rp.max_iters,
            ncc_floor: rp.ncc_floor,
            refine_min_valid: rp.min_valid_fraction,
            mask_mode: MaskMode::ReferenceOnly,
            hessian_sigma: 2.0,
            n_patch_sets: 30_000,
            scale_min: sr.scale.0,
            scale_max: sr.scale.1,
            angle_min_deg: sr.angle.0.to_degrees(),
            angle_max_deg: sr.angle.1.to_degrees(),
            test_fraction: 0.2,
            batch_size: 1024,
            views_per_batch: 6,
            batch_trials: 20,
            margin: 1.0,
            rotation_deg: aug.rotation.1.to_degrees(),
            aug_scale_min: aug.scale.0,
            aug_scale_max: aug.scale.1,
            shear: aug.shear.1,
            dereg_shifts: vec![0.0, 1.0, 2.0, 4.0, 8.0, 16.0],
            external_descriptors: PathBuf::new(),
        }
    }
}

/// Keys that describe where and how fast a run happens, not what it computes.
/// They stay out of stage hashes and out of the embedded config copy.
pub const RUN_KEYS: [&str; 2] = ["output_root", "jobs"];

fn policy_str(p: SidecarPolicy) -> &'static str {
    match p {
        SidecarPolicy::Strict => "strict",
        SidecarPolicy::Lenient => "lenient",
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse::<T>()
        .map_err(|e| anyhow::anyhow!("bad value {value:?} for {key}: {e}"))
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    /// Every key with its canonical text value, in declaration order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("input_root", self.input_root.display().to_string()),
            ("output_root", self.output_root.display().to_string()),
            ("seed", self.seed.to_string()),
            ("jobs", self.jobs.to_string()),
            ("sky_max", self.sky_max.to_string()),
            ("lap_var_min", self.lap_var_min.to_string()),
            ("mean_min", self.mean_min.to_string()),
            ("min_width", self.min_width.to_string()),
            ("min_height", self.min_height.to_string()),
            ("sample_size", self.sample_size.to_string()),
            ("pass_min", self.pass_min.to_string()),
            ("confidence_floor", self.confidence_floor.to_string()),
            ("missing_sidecar", policy_str(self.missing_sidecar).to_string()),
            ("k", self.k.to_string()),
            ("kmeans_max_iters", self.kmeans_max_iters.to_string()),
            ("kmeans_tol", self.kmeans_tol.to_string()),
            ("l2_normalize_embeddings", self.l2_normalize_embeddings.to_string()),
            ("max_keypoints", self.max_keypoints.to_string()),
            ("ratio", self.ratio.to_string()),
            ("inlier_px", self.inlier_px.to_string()),
            ("ransac_max_iters", self.ransac_max_iters.to_string()),
            ("matcher_downscale", self.matcher_downscale.to_string()),
            ("min_inliers", self.min_inliers.to_string()),
            ("max_sad", self.max_sad.to_string()),
            ("view_min", self.view_min.to_string()),
            ("view_cap", self.view_cap.to_string()),
            ("refine_levels", self.refine_levels.to_string()),
            ("refine_max_iters", self.refine_max_iters.to_string()),
            ("ncc_floor", self.ncc_floor.to_string()),
            ("refine_min_valid", self.refine_min_valid.to_string()),
            ("mask_mode", self.mask_mode.as_str().to_string()),
            ("hessian_sigma", self.hessian_sigma.to_string()),
            ("n_patch_sets", self.n_patch_sets.to_string()),
            ("scale_min", self.scale_min.to_string()),
            ("scale_max", self.scale_max.to_string()),
            ("angle_min_deg", self.angle_min_deg.to_string()),
            ("angle_max_deg", self.angle_max_deg.to_string()),
            ("test_fraction", self.test_fraction.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("views_per_batch", self.views_per_batch.to_string()),
            ("batch_trials", self.batch_trials.to_string()),
            ("margin", self.margin.to_string()),
            ("rotation_deg", self.rotation_deg.to_string()),
            ("aug_scale_min", self.aug_scale_min.to_string()),
            ("aug_scale_max", self.aug_scale_max.to_string()),
            ("shear", self.shear.to_string()),
            ("dereg_shifts", join_floats(&self.dereg_shifts)),
            ("external_descriptors", self.external_descriptors.display().to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "input_root" => self.input_root = PathBuf::from(v),
            "output_root" => self.output_root = PathBuf::from(v),
            "seed" => self.seed = parse_value(key, v)?,
            "jobs" => self.jobs = parse_value(key, v)?,
            "sky_max" => self.sky_max = parse_value(key, v)?,
            "lap_var_min" => self.lap_var_min = parse_value(key, v)?,
            "mean_min" => self.mean_min = parse_value(key, v)?,
            "min_width" => self.min_width = parse_value(key, v)?,
            "min_height" => self.min_height = parse_value(key, v)?,
            "sample_size" => self.sample_size = parse_value(key, v)?,
            "pass_min" => self.pass_min = parse_value(key, v)?,
            "confidence_floor" => self.confidence_floor = parse_value(key, v)?,
            "missing_sidecar" => {
                self.missing_sidecar = match v {
                    "strict" => SidecarPolicy::Strict,
                    "lenient" => SidecarPolicy::Lenient,
                    _ => bail!("missing_sidecar must be strict or lenient, got {v:?}"),
                }
            }
            "k" => self.k = parse_value(key, v)?,
            "kmeans_max_iters" => self.kmeans_max_iters = parse_value(key, v)?,
            "kmeans_tol" => self.kmeans_tol = parse_value(key, v)?,
            "l2_normalize_embeddings" => self.l2_normalize_embeddings = parse_value(key, v)?,
            "max_keypoints" => self.max_keypoints = parse_value(key, v)?,
            "ratio" => self.ratio = parse_value(key, v)?,
            "inlier_px" => self.inlier_px = parse_value(key, v)?,
            "ransac_max_iters" => self.ransac_max_iters = parse_value(key, v)?,
            "matcher_downscale" => self.matcher_downscale = parse_value(key, v)?,
            "min_inliers" => self.min_inliers = parse_value(key, v)?,
            "max_sad" => self.max_sad = parse_value(key, v)?,
            "view_min" => self.view_min = parse_value(key, v)?,
            "view_cap" => self.view_cap = parse_value(key, v)?,
            "refine_levels" => self.refine_levels = parse_value(key, v)?,
            "refine_max_iters" => self.refine_max_iters = parse_value(key, v)?,
            "ncc_floor" => self.ncc_floor = parse_value(key, v)?,
            "refine_min_valid" => self.refine_min_valid = parse_value(key, v)?,
            "mask_mode" => {
                self.mask_mode = MaskMode::parse(v)
                    .with_context(|| format!("unknown mask_mode {v:?}"))?
            }
            "hessian_sigma" => self.hessian_sigma = parse_value(key, v)?,
            "n_patch_sets" => self.n_patch_sets = parse_value(key, v)?,
            "scale_min" => self.scale_min = parse_value(key, v)?,
            "scale_max" => self.scale_max = parse_value(key, v)?,
            "angle_min_deg" => self.angle_min_deg = parse_value(key, v)?,
            "angle_max_deg" => self.angle_max_deg = parse_value(key, v)?,
            "test_fraction" => self.test_fraction = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "views_per_batch" => self.views_per_batch = parse_value(key, v)?,
            "batch_trials" => self.batch_trials = parse_value(key, v)?,
            "margin" => self.margin = parse_value(key, v)?,
            "rotation_deg" => self.rotation_deg = parse_value(key, v)?,
            "aug_scale_min" => self.aug_scale_min = parse_value(key, v)?,
            "aug_scale_max" => self.aug_scale_max = parse_value(key, v)?,
            "shear" => self.shear = parse_value(key, v)?,
            "dereg_shifts" => {
                self.dereg_shifts = v
                    .split(',')
                    .map(|s| parse_value(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "external_descriptors" => self.external_descriptors = PathBuf::from(v),
            _ => bail!("unknown config key {key:?}"),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key = value", n + 1))?;
            cfg.set(k.trim(), v).with_context(|| format!("line {}", n + 1))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.thresholds().validate()?;
        self.spec_ranges().validate()?;
        if self.jobs == 0 {
            bail!("jobs must be at least 1");
        }
        if self.k == 0 || self.view_cap == 0 || self.refine_levels == 0 {
            bail!("k, view_cap and refine_levels must be positive");
        }
        if !(0.0..=1.0).contains(&self.test_fraction) {
            bail!("test_fraction must lie in [0, 1]");
        }
        if self.batch_size < 2 || self.views_per_batch == 0 || self.batch_trials == 0 {
            bail!("batch_size must be at least 2; views_per_batch and batch_trials positive");
        }
        if !self.dereg_shifts.contains(&0.0) {
            bail!("dereg_shifts must include 0");
        }
        if self.dereg_shifts.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            bail!("dereg_shifts must be non-negative");
        }
        Ok(())
    }

    /// The config without run-only keys, as embedded in manifest records.
    pub fn embedded(&self) -> serde_json::Map<String, serde_json::Value> {
        self.entries()
            .into_iter()
            .filter(|(k, _)| !RUN_KEYS.contains(k))
            .map(|(k, v)| (k.to_string(), serde_json::Value::String(v)))
            .collect()
    }

    /// Hash of the keys a stage depends on.
    pub fn stage_hash(&self, stage: Stage) -> String {
        let keys = stage.config_keys();
        let mut hasher = Sha256::new();
        hasher.update(stage.name().as_bytes());
        hasher.update(b"\n");
        for (k, v) in self.entries() {
            if keys.contains(&k) {
                hasher.update(format!("{k}={v}\n").as_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }

    pub fn thresholds(&self) -> FilterThresholds {
        FilterThresholds {
            sky_max: self.sky_max,
            lap_var_min: self.lap_var_min,
            mean_min: self.mean_min,
            min_width: self.min_width,
            min_height: self.min_height,
            sample_size: self.sample_size,
            pass_min: self.pass_min,
            confidence_floor: self.confidence_floor,
            missing_sidecar: self.missing_sidecar,
        }
    }

    pub fn kmeans(&self, seed: u64) -> KMeansParams {
        KMeansParams {
            k: self.k,
            max_iters: self.kmeans_max_iters,
            tol: self.kmeans_tol,
            seed,
        }
    }

    pub fn matcher(&self) -> MatcherConfig {
        MatcherConfig {
            max_keypoints: self.max_keypoints,
            ratio: self.ratio,
            inlier_px: self.inlier_px,
            ransac_max_iters: self.ransac_max_iters,
            downscale_levels: self.matcher_downscale,
        }
    }

    pub fn view_rule(&self) -> ViewClusterRule {
        ViewClusterRule {
            min_inliers: self.min_inliers,
            max_sad: self.max_sad,
        }
    }

    pub fn refine(&self) -> RefineParams {
        RefineParams {
            levels: self.refine_levels,
            max_iters: self.refine_max_iters,
            ncc_floor: self.ncc_floor,
            min_valid_fraction: self.refine_min_valid,
            ..RefineParams::default()
        }
    }

    pub fn spec_ranges(&self) -> SpecRanges {
        SpecRanges {
            scale: (self.scale_min, self.scale_max),
            angle: (self.angle_min_deg.to_radians(), self.angle_max_deg.to_radians()),
        }
    }

    pub fn augment(&self) -> AugmentParams {
        AugmentParams {
            rotation: (-self.rotation_deg.to_radians(), self.rotation_deg.to_radians()),
            scale: (self.aug_scale_min, self.aug_scale_max),
            shear: (-self.shear, self.shear),
            ..AugmentParams::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = PipelineConfig::default();
        cfg.seed = 42;
        cfg.dereg_shifts = vec![0.0, 3.5];
        cfg.mask_mode = MaskMode::ResponseThenAverage;
        let back = PipelineConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn defaults_follow_the_module_defaults() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.thresholds(), FilterThresholds::default());
        assert_eq!(cfg.k, 120);
        assert_eq!(cfg.n_patch_sets, 30_000);
        assert_eq!((cfg.view_min, cfg.view_cap), (50, 50));
        assert!((cfg.spec_ranges().angle.1 - SpecRanges::default().angle.1).abs() < 1e-12);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(PipelineConfig::parse("bogus = 1").is_err());
        assert!(PipelineConfig::parse("seed = -3").is_err());
        assert!(PipelineConfig::parse("pass_min = 30").is_err());
        assert!(PipelineConfig::parse("dereg_shifts = 1,2").is_err());
        assert!(PipelineConfig::parse("# comment\n\nseed = 9\n").is_ok());
    }

    #[test]
    fn run_keys_do_not_change_stage_hashes() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.jobs = a.jobs + 7;
        b.output_root = PathBuf::from("elsewhere");
        for s in Stage::ALL {
            assert_eq!(a.stage_hash(s), b.stage_hash(s));
        }
        b.sky_max = 0.4;
        assert_ne!(a.stage_hash(Stage::Gate), b.stage_hash(Stage::Gate));
        assert_eq!(a.stage_hash(Stage::Export), b.stage_hash(Stage::Export));
    }
}
