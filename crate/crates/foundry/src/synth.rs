//! Synthetic webcam archives with known geometry.
//!
//! Each camera looks at a procedurally generated scene canvas (smooth noise,
//! random shapes, fine texture and a sky band). Frame `i` samples the canvas
//! through `to_canvas = T(view origin) · J_i`, where `J_i` is a sub-pixel
//! similarity jitter about the frame centre, then applies a day-night
//! photometric ramp, optional moving vehicles and sensor noise.

use std::f64::consts::PI;
use std::path::Path;

use anyhow::{bail, Context, Result};
use patchfoundry_core::gate::{Detection, DetectionSidecar};
use patchfoundry_core::image::gaussian_blur;
use patchfoundry_core::seed::derived_rng;
use patchfoundry_core::{GrayImage, Homography};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::formats::{format_sidecar, write_amem, EmbeddingFile};
use crate::imageio::save_png;
use crate::layout::{CAMERAS_DIR, EMBEDDINGS_FILE, SIDECAR_EXT};

pub const TRUTH_FILE: &str = "truth.json";
pub const EMBEDDING_DIM: usize = 32;
/// Offset between the two viewpoints of a switching camera.
pub const SWITCH_SHIFT_PX: f64 = 120.0;
const MARGIN: usize = 160;
const SKY_ROWS_FRACTION: f64 = 0.12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum CameraKind {
    Static,
    /// Alternates between two viewpoints `SWITCH_SHIFT_PX` apart; the second
    /// viewpoint gets `second_view_frames` frames, spread evenly.
    Switch { second_view_frames: usize },
    /// Same scene as camera 0, seen from another position.
    SharedScene,
    /// Moving vehicles that the sidecars report.
    Dynamic,
    /// Moving vehicles the sidecars miss.
    HiddenDynamic,
    /// Every frame is zero.
    Black,
}

impl CameraKind {
    /// Parses `static`, `switch`, `switch:N`, `shared`, `dynamic`,
    /// `hidden-dynamic` or `black`; plain `switch` uses `default_switch`.
    pub fn parse(s: &str, default_switch: usize) -> Result<Self> {
        Ok(match s.trim() {
            "static" => CameraKind::Static,
            "switch" => CameraKind::Switch {
                second_view_frames: default_switch,
            },
            "shared" => CameraKind::SharedScene,
            "dynamic" => CameraKind::Dynamic,
            "hidden-dynamic" => CameraKind::HiddenDynamic,
            "black" => CameraKind::Black,
            other => match other.strip_prefix("switch:") {
                Some(n) => CameraKind::Switch {
                    second_view_frames: n.parse().context("switch:N needs a count")?,
                },
                None => bail!("unknown camera kind {other:?}"),
            },
        })
    }

    fn has_cars(self) -> bool {
        matches!(self, CameraKind::Dynamic | CameraKind::HiddenDynamic)
    }
}

/// Camera kinds used by [`make_synthetic_cameras`]: static, switching,
/// shared-scene, then dynamic, black and hidden-dynamic, repeating.
pub fn default_kinds(n_cameras: usize, frames: usize) -> Vec<CameraKind> {
    let switch = CameraKind::Switch {
        second_view_frames: (frames * 2 / 15).max(1),
    };
    let cycle = [
        CameraKind::Static,
        switch,
        CameraKind::SharedScene,
        CameraKind::Dynamic,
        CameraKind::Black,
        CameraKind::HiddenDynamic,
    ];
    (0..n_cameras).map(|i| cycle[i % cycle.len()]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
    pub kinds: Vec<CameraKind>,
    /// Standard deviation of the additive sensor noise.
    pub noise_sigma: f64,
    /// Amplitude of the per-frame translation jitter, pixels.
    pub jitter_px: f64,
}

impl SynthOptions {
    pub fn new(n_cameras: usize, frames: usize, seed: u64) -> Self {
        Self {
            width: 720,
            height: 720,
            frames,
            seed,
            kinds: default_kinds(n_cameras, frames),
            noise_sigma: 2.0,
            jitter_px: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub image_id: String,
    /// 0 for the first viewpoint, 1 for the second of a switching camera.
    pub viewpoint: usize,
    /// Frame-to-canvas homography, row-major.
    pub to_canvas: [f64; 9],
    pub gain: f64,
    pub gamma: f64,
    pub bias: f64,
    /// Vehicle boxes `(x0, y0, x1, y1)` visible in the frame.
    pub vehicles: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraTruth {
    pub camera_id: String,
    pub kind: CameraKind,
    pub scene: usize,
    pub frames: Vec<FrameTruth>,
}

impl CameraTruth {
    pub fn frame(&self, image_id: &str) -> Option<&FrameTruth> {
        self.frames.iter().find(|f| f.image_id == image_id)
    }

    /// True homography mapping frame `member` into frame `reference`.
    pub fn member_to_reference(&self, member: &str, reference: &str) -> Result<Homography> {
        let m = self.frame(member).context("unknown member frame")?;
        let r = self.frame(reference).context("unknown reference frame")?;
        let cm = Homography::from_coefficients(m.to_canvas)?;
        let cr = Homography::from_coefficients(r.to_canvas)?;
        Ok(cr.inverse()?.compose(&cm)?)
    }

    /// Frame ids per viewpoint, in frame order.
    pub fn viewpoint_members(&self) -> Vec<Vec<String>> {
        let n = self.frames.iter().map(|f| f.viewpoint + 1).max().unwrap_or(0);
        let mut out = vec![Vec::new(); n];
        for f in &self.frames {
            out[f.viewpoint].push(f.image_id.clone());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub cameras: Vec<CameraTruth>,
}

impl Truth {
    pub fn load(input_root: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(input_root.join(TRUTH_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn camera(&self, camera_id: &str) -> Option<&CameraTruth> {
        self.cameras.iter().find(|c| c.camera_id == camera_id)
    }
}

/// One generated camera, held in memory.
#[derive(Debug, Clone)]
pub struct SynthCamera {
    pub truth: CameraTruth,
    pub frames: Vec<GrayImage>,
    pub sidecars: Vec<DetectionSidecar>,
    pub embeddings: EmbeddingFile,
}

pub fn camera_id(index: usize) -> String {
    format!("cam{index:02}")
}

pub fn frame_id(index: usize) -> String {
    format!("f{index:03}")
}

fn scene_label(scene: usize) -> [u8; 8] {
    (scene as u64).to_le_bytes()
}

/// Smooth lattice noise with smoothstep interpolation.
fn value_noise(w: usize, h: usize, cell: usize, amp: f64, rng: &mut impl Rng) -> Vec<f64> {
    let gw = w / cell + 2;
    let gh = h / cell + 2;
    let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let gy = y / cell;
        let ty = smooth((y % cell) as f64 / cell as f64);
        for x in 0..w {
            let gx = x / cell;
            let tx = smooth((x % cell) as f64 / cell as f64);
            let l = |i: usize, j: usize| lattice[j * gw + i];
            let top = l(gx, gy) * (1.0 - tx) + l(gx + 1, gy) * tx;
            let bot = l(gx, gy + 1) * (1.0 - tx) + l(gx + 1, gy + 1) * tx;
            out[y * w + x] = amp * (top * (1.0 - ty) + bot * ty);
        }
    }
    out
}

/// Base canvas of a scene, large enough for every viewpoint and jitter.
pub fn scene_canvas(seed: u64, scene: usize, width: usize, height: usize) -> GrayImage {
    let (w, h) = (width + 2 * MARGIN, height + 2 * MARGIN);
    let mut rng = derived_rng(seed, &[b"scene".as_slice(), &scene_label(scene)]);
    let coarse = value_noise(w, h, 96, 45.0, &mut rng);
    let medium = value_noise(w, h, 24, 20.0, &mut rng);
    let mut px: Vec<f64> = coarse
        .iter()
        .zip(&medium)
        .map(|(a, b)| 120.0 + a + b)
        .collect();

    let n_shapes = w * h / 4500;
    for _ in 0..n_shapes {
        let cx = rng.random::<f64>() * w as f64;
        let cy = rng.random::<f64>() * h as f64;
        let rx = 8.0 + rng.random::<f64>() * 34.0;
        let ry = 8.0 + rng.random::<f64>() * 34.0;
        let value = 20.0 + rng.random::<f64>() * 215.0;
        let ellipse = rng.random::<bool>();
        let x0 = (cx - rx).floor().max(0.0) as usize;
        let x1 = ((cx + rx).ceil() as usize).min(w - 1);
        let y0 = (cy - ry).floor().max(0.0) as usize;
        let y1 = ((cy + ry).ceil() as usize).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = (x as f64 - cx) / rx;
                let dy = (y as f64 - cy) / ry;
                if !ellipse || dx * dx + dy * dy <= 1.0 {
                    px[y * w + x] = value;
                }
            }
        }
    }
    for v in &mut px {
        *v += (rng.random::<f64>() - 0.5) * 60.0;
    }
    let sky_line = MARGIN as f64 + SKY_ROWS_FRACTION * height as f64;
    for y in 0..h {
        if (y as f64) < sky_line {
            let t = y as f64 / sky_line;
            for x in 0..w {
                px[y * w + x] = 225.0 - 20.0 * t + 3.0 * (x as f64 * 0.01).sin();
            }
        }
    }
    let img = GrayImage::new(w, h, px.into_iter().map(|v| v.clamp(0.0, 255.0) as f32).collect())
        .expect("canvas size");
    gaussian_blur(&img, 0.6)
}

fn viewpoint_origin(kind: CameraKind, viewpoint: usize) -> (f64, f64) {
    let m = MARGIN as f64;
    let base = match kind {
        CameraKind::SharedScene => (m - 60.0, m + 40.0),
        _ => (m, m),
    };
    (base.0 + viewpoint as f64 * SWITCH_SHIFT_PX, base.1)
}

/// Which frames show the second viewpoint: every `frames / n`-th frame,
/// never frame 0.
fn switch_schedule(frames: usize, second: usize) -> Vec<usize> {
    let second = second.min(frames.saturating_sub(1));
    if second == 0 {
        return vec![0; frames];
    }
    let period = (frames / second).max(2);
    let mut out = vec![0; frames];
    let mut placed = 0;
    for (i, slot) in out.iter_mut().enumerate() {
        if placed < second && i % period == period - 1 {
            *slot = 1;
            placed += 1;
        }
    }
    out
}

fn jitter(rng: &mut impl Rng, amp: f64, width: usize, height: usize) -> Homography {
    let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    let angle = (rng.random::<f64>() - 0.5) * 2.0 * 0.0008;
    let scale = 1.0 + (rng.random::<f64>() - 0.5) * 2.0 * 0.0004;
    let tx = (rng.random::<f64>() - 0.5) * 2.0 * amp;
    let ty = (rng.random::<f64>() - 0.5) * 2.0 * amp;
    let about_centre = Homography::translation(cx + tx, cy + ty)
        .compose(&Homography::similarity(scale, angle, 0.0, 0.0))
        .and_then(|h| h.compose(&Homography::translation(-cx, -cy)))
        .expect("jitter is invertible");
    about_centre
}

fn vehicle_boxes(frame: usize, width: usize, height: usize, start: &[f64; 3]) -> Vec<[f64; 4]> {
    let (bw, bh) = (70.0, 35.0);
    let span = width as f64 + bw;
    (0..3)
        .filter_map(|k| {
            let speed = 29.0 + 7.0 * k as f64;
            let x0 = (start[k] + speed * frame as f64).rem_euclid(span) - bw;
            let y0 = height as f64 * 0.55 + 80.0 * k as f64;
            let b = [x0.max(0.0), y0, (x0 + bw).min(width as f64), (y0 + bh).min(height as f64)];
            (b[2] > b[0] && b[3] > b[1]).then_some(b)
        })
        .collect()
}

/// Renders one camera.
pub fn synthesize_camera(opts: &SynthOptions, index: usize) -> Result<SynthCamera> {
    let kind = *opts.kinds.get(index).context("camera index out of range")?;
    let cam = camera_id(index);
    let scene = if kind == CameraKind::SharedScene { 0 } else { index };
    let (w, h) = (opts.width, opts.height);
    let canvas = (kind != CameraKind::Black).then(|| scene_canvas(opts.seed, scene, w, h));
    let schedule = match kind {
        CameraKind::Switch { second_view_frames } => switch_schedule(opts.frames, second_view_frames),
        _ => vec![0; opts.frames],
    };
    let mut cam_rng = derived_rng(opts.seed, &[b"vehicles".as_slice(), cam.as_bytes()]);
    let starts = [0, 1, 2].map(|_| cam_rng.random::<f64>() * w as f64);

    let rendered: Vec<(FrameTruth, GrayImage, DetectionSidecar)> = (0..opts.frames)
        .into_par_iter()
        .map(|i| {
            let id = frame_id(i);
            let mut rng = derived_rng(opts.seed, &[b"frame".as_slice(), cam.as_bytes(), id.as_bytes()]);
            let viewpoint = schedule[i];
            let (ox, oy) = viewpoint_origin(kind, viewpoint);
            let to_canvas = Homography::translation(ox, oy)
                .compose(&jitter(&mut rng, opts.jitter_px, w, h))
                .expect("invertible");
            let t = i as f64 / opts.frames.max(1) as f64;
            let gain = 1.0 + 0.1 * (2.0 * PI * t).sin();
            let gamma = 1.0 + 0.08 * (2.0 * PI * t).cos();
            let bias = 6.0 * (4.0 * PI * t).sin();
            let vehicles = if kind.has_cars() {
                vehicle_boxes(i, w, h, &starts)
            } else {
                Vec::new()
            };
            let lut: Vec<f64> = (0..=256)
                .map(|v| 255.0 * gain * (f64::from(v.min(255)) / 255.0).powf(gamma) + bias)
                .collect();
            let noise_scale = opts.noise_sigma * 6f64.sqrt();
            let mut data = Vec::with_capacity(w * h);
            for y in 0..h {
                for x in 0..w {
                    let value = match &canvas {
                        None => {
                            data.push(0u8);
                            continue;
                        }
                        Some(c) => {
                            let (u, v) = to_canvas.apply(x as f64, y as f64);
                            let s = c.sample_clamped(u, v).clamp(0.0, 255.0);
                            let k = s.floor() as usize;
                            let f = s - k as f64;
                            lut[k] * (1.0 - f) + lut[k + 1] * f
                        }
                    };
                    let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
                    let value = match vehicles
                        .iter()
                        .position(|b| xf >= b[0] && xf < b[2] && yf >= b[1] && yf < b[3])
                    {
                        Some(k) => if k % 2 == 0 { 35.0 } else { 215.0 },
                        None => value,
                    };
                    // triangular noise with the requested standard deviation
                    let n = (rng.random::<f64>() + rng.random::<f64>() - 1.0) * noise_scale;
                    data.push((value + n).round().clamp(0.0, 255.0) as u8);
                }
            }
            let img = GrayImage::from_u8(w, h, &data).expect("frame size");
            let sky_line = MARGIN as f64 + SKY_ROWS_FRACTION * h as f64;
            let sky_fraction = match kind {
                CameraKind::Black => 0.0,
                _ => ((sky_line - oy) / h as f64).clamp(0.0, 1.0),
            };
            let detections = if kind == CameraKind::Dynamic {
                vehicles
                    .iter()
                    .map(|b| Detection {
                        class: "car".into(),
                        confidence: 0.92,
                        bbox: *b,
                    })
                    .collect()
            } else {
                Vec::new()
            };
            let sidecar = DetectionSidecar {
                image_id: id.clone(),
                sky_fraction,
                detections,
            };
            let truth = FrameTruth {
                image_id: id,
                viewpoint,
                to_canvas: to_canvas.coefficients(),
                gain,
                gamma,
                bias,
                vehicles,
            };
            (truth, img, sidecar)
        })
        .collect();

    let embeddings = camera_embeddings(opts.seed, &cam, scene, kind, &rendered);
    let mut frames = Vec::with_capacity(rendered.len());
    let mut sidecars = Vec::with_capacity(rendered.len());
    let mut truths = Vec::with_capacity(rendered.len());
    for (t, img, sc) in rendered {
        truths.push(t);
        frames.push(img);
        sidecars.push(sc);
    }
    Ok(SynthCamera {
        truth: CameraTruth {
            camera_id: cam,
            kind,
            scene,
            frames: truths,
        },
        frames,
        sidecars,
        embeddings,
    })
}

fn gaussian_vec(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            let v: f64 = rng.random();
            (-2.0 * u.ln()).sqrt() * (2.0 * PI * v).cos()
        })
        .collect()
}

/// Scene signature plus a smaller viewpoint signature plus per-frame noise,
/// so cameras sharing a scene have near-parallel mean embeddings.
fn camera_embeddings(
    seed: u64,
    cam: &str,
    scene: usize,
    kind: CameraKind,
    frames: &[(FrameTruth, GrayImage, DetectionSidecar)],
) -> EmbeddingFile {
    let scene_key = if kind == CameraKind::Black { usize::MAX } else { scene };
    let scene_sig = gaussian_vec(
        &mut derived_rng(seed, &[b"embed-scene".as_slice(), &scene_label(scene_key)]),
        EMBEDDING_DIM,
    );
    let mut data = Vec::with_capacity(frames.len() * EMBEDDING_DIM);
    let mut ids = Vec::with_capacity(frames.len());
    for (t, _, _) in frames {
        let view_sig = gaussian_vec(
            &mut derived_rng(seed, &[b"embed-view".as_slice(), cam.as_bytes(), &[t.viewpoint as u8]]),
            EMBEDDING_DIM,
        );
        let mut rng = derived_rng(seed, &[b"embed-frame".as_slice(), cam.as_bytes(), t.image_id.as_bytes()]);
        let noise = gaussian_vec(&mut rng, EMBEDDING_DIM);
        for d in 0..EMBEDDING_DIM {
            let v = scene_sig[d] + 0.15 * view_sig[d] + 0.03 * noise[d] + 0.2 * (t.gain - 1.0);
            data.push(v as f32);
        }
        ids.push(t.image_id.clone());
    }
    EmbeddingFile {
        ids,
        dim: EMBEDDING_DIM,
        data,
    }
}

/// Writes one camera directory.
pub fn write_camera(root: &Path, cam: &SynthCamera) -> Result<()> {
    let dir = root.join(CAMERAS_DIR).join(&cam.truth.camera_id);
    std::fs::create_dir_all(&dir)?;
    cam.frames
        .par_iter()
        .zip(&cam.truth.frames)
        .try_for_each(|(img, t)| save_png(&dir.join(format!("{}.png", t.image_id)), img))?;
    for sc in &cam.sidecars {
        std::fs::write(
            dir.join(format!("{}.{SIDECAR_EXT}", sc.image_id)),
            format_sidecar(sc),
        )?;
    }
    let mut buf = Vec::new();
    write_amem(&mut buf, &cam.embeddings)?;
    std::fs::write(dir.join(EMBEDDINGS_FILE), buf)?;
    Ok(())
}

/// Generates every camera of `opts` under `out` and writes `truth.json`.
pub fn generate(out: &Path, opts: &SynthOptions) -> Result<Truth> {
    if opts.width < 64 || opts.height < 64 || opts.frames == 0 {
        bail!("synthetic frames must be at least 64x64 and there must be at least one frame");
    }
    let mut cameras = Vec::with_capacity(opts.kinds.len());
    for i in 0..opts.kinds.len() {
        let cam = synthesize_camera(opts, i)?;
        write_camera(out, &cam)?;
        cameras.push(cam.truth);
    }
    let truth = Truth {
        seed: opts.seed,
        width: opts.width,
        height: opts.height,
        cameras,
    };
    std::fs::write(out.join(TRUTH_FILE), serde_json::to_string_pretty(&truth)?)?;
    Ok(truth)
}

pub fn make_synthetic_cameras(out: &Path, n_cameras: usize, frames: usize, seed: u64) -> Result<Truth> {
    generate(out, &SynthOptions::new(n_cameras, frames, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use patchfoundry_core::gate::{check_image, FilterThresholds};

    fn small(kinds: Vec<CameraKind>, frames: usize) -> SynthOptions {
        SynthOptions {
            width: 720,
            height: 720,
            frames,
            seed: 5,
            kinds,
            noise_sigma: 2.0,
            jitter_px: 0.5,
        }
    }

    #[test]
    fn schedule_counts() {
        let s = switch_schedule(60, 8);
        assert_eq!(s.iter().filter(|&&v| v == 1).count(), 8);
        assert_eq!(s[0], 0);
        let s = switch_schedule(50, 25);
        assert_eq!(s.iter().filter(|&&v| v == 1).count(), 25);
        assert!(s.iter().enumerate().all(|(i, &v)| v == i % 2));
    }

    #[test]
    fn parses_kinds() {
        assert_eq!(CameraKind::parse("switch:5", 8).unwrap(), CameraKind::Switch { second_view_frames: 5 });
        assert_eq!(CameraKind::parse("switch", 8).unwrap(), CameraKind::Switch { second_view_frames: 8 });
        assert!(CameraKind::parse("nope", 8).is_err());
    }

    #[test]
    fn static_frames_pass_the_gate_and_black_fails() {
        let opts = small(vec![CameraKind::Static, CameraKind::Black, CameraKind::Dynamic], 2);
        let th = FilterThresholds::default();
        let cam = synthesize_camera(&opts, 0).unwrap();
        for (img, sc) in cam.frames.iter().zip(&cam.sidecars) {
            let r = check_image("x", img, Some(sc), &th).unwrap();
            assert!(r.pass, "{r:?}");
        }
        let black = synthesize_camera(&opts, 1).unwrap();
        let r = check_image("x", &black.frames[0], Some(&black.sidecars[0]), &th).unwrap();
        assert!(!r.pass);
        let dynamic = synthesize_camera(&opts, 2).unwrap();
        let r = check_image("x", &dynamic.frames[0], Some(&dynamic.sidecars[0]), &th).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn truth_warps_align_frames() {
        let opts = small(vec![CameraKind::Static], 2);
        let cam = synthesize_camera(&opts, 0).unwrap();
        let h = cam.truth.member_to_reference("f001", "f000").unwrap();
        assert!(h.sad_to_identity() < 2.0);
        // an interior point of frame 1 and its mapped location in frame 0
        // see the same canvas point up to noise and photometry
        let c1 = Homography::from_coefficients(cam.truth.frames[1].to_canvas).unwrap();
        let c0 = Homography::from_coefficients(cam.truth.frames[0].to_canvas).unwrap();
        let (u, v) = h.apply(300.0, 400.0);
        let a = c1.apply(300.0, 400.0);
        let b = c0.apply(u, v);
        assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
    }

    #[test]
    fn generation_is_deterministic() {
        let opts = SynthOptions {
            width: 96,
            height: 80,
            ..small(vec![CameraKind::HiddenDynamic], 3)
        };
        let a = synthesize_camera(&opts, 0).unwrap();
        let b = synthesize_camera(&opts, 0).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.embeddings, b.embeddings);
        assert!(a.sidecars.iter().all(|s| s.detections.is_empty()));
        assert!(a.truth.frames.iter().any(|f| !f.vehicles.is_empty()));
    }
}
