//! Advisory flags for the review step. Flags never change a view's status;
//! they only point a reviewer at views worth a closer look.

use std::path::Path;

use anyhow::{Context, Result};
use patchfoundry_core::geom::ViewStatus;
use patchfoundry_core::{GrayImage, ValidMask};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::layout::find_camera;
use crate::manifest::{Manifest, Verdict};
use crate::records::{read_jsonl, write_jsonl, ViewRecord};
use crate::stage::{artifact, warp_member, Stage};

pub const FLAGS: &str = "review/flags.jsonl";

/// Thresholds of the automatic flags, on the 0–255 intensity scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlagParams {
    /// Side of the square cells frames are averaged over.
    pub cell: usize,
    /// A cell is changing when one frame departs this far from the cell's
    /// temporal median.
    pub cell_deviation: f64,
    /// Fraction of changing cells above which a view is flagged dynamic.
    pub dynamic_fraction: f64,
    /// Spread of frame means above which a view is flagged for exposure.
    pub exposure_spread: f64,
    /// Cosine of mean embeddings above which a view duplicates an earlier one.
    pub duplicate_cosine: f64,
}

impl Default for FlagParams {
    fn default() -> Self {
        Self {
            cell: 4,
            cell_deviation: 40.0,
            dynamic_fraction: 0.005,
            exposure_spread: 80.0,
            duplicate_cosine: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewFlags {
    pub view_id: String,
    pub camera_id: String,
    pub flags: Vec<String>,
    pub changing_fraction: f64,
    pub mean_spread: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duplicate_of: Option<String>,
}

/// Least-squares gain and offset taking `img` onto `reference` over `valid`,
/// refitted once without the pixels the first fit misses by more than
/// `outlier` so that moving objects do not drag the fit.
fn fit_linear(img: &GrayImage, reference: &GrayImage, valid: &ValidMask, outlier: f64) -> (f64, f64) {
    let first = fit_pass(img, reference, valid, None);
    fit_pass(img, reference, valid, Some((first, outlier)))
}

fn fit_pass(
    img: &GrayImage,
    reference: &GrayImage,
    valid: &ValidMask,
    prior: Option<((f64, f64), f64)>,
) -> (f64, f64) {
    let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&x, &y), &v) in img.data().iter().zip(reference.data()).zip(valid.as_slice()) {
        let keep = prior.is_none_or(|((g, b), t)| (g * f64::from(x) + b - f64::from(y)).abs() <= t);
        if v && keep {
            let (x, y) = (f64::from(x), f64::from(y));
            n += 1.0;
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
    }
    let var = n * sxx - sx * sx;
    if n < 2.0 || var.abs() < 1e-9 {
        return (1.0, 0.0);
    }
    let gain = (n * sxy - sx * sy) / var;
    (gain, (sy - gain * sx) / n)
}

/// Per-cell means, `None` where a cell has an invalid pixel.
fn cell_means(img: &GrayImage, valid: &ValidMask, cell: usize, gain: f64, bias: f64) -> Vec<Option<f64>> {
    let (cw, ch) = (img.width() / cell, img.height() / cell);
    let mut out = Vec::with_capacity(cw * ch);
    for cy in 0..ch {
        for cx in 0..cw {
            let mut sum = 0.0;
            let mut ok = true;
            for y in cy * cell..(cy + 1) * cell {
                for x in cx * cell..(cx + 1) * cell {
                    ok &= valid.is_valid(x, y);
                    sum += f64::from(img.get(x, y));
                }
            }
            out.push(ok.then(|| gain * sum / (cell * cell) as f64 + bias));
        }
    }
    out
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fraction of cells in which some frame departs from the temporal median.
/// `frames[0]` is the reference; all frames are already in its coordinates.
pub fn changing_fraction(frames: &[(GrayImage, ValidMask)], p: &FlagParams) -> f64 {
    let Some((reference, _)) = frames.first() else {
        return 0.0;
    };
    let cells: Vec<Vec<Option<f64>>> = frames
        .par_iter()
        .map(|(img, valid)| {
            let (g, b) = fit_linear(img, reference, valid, p.cell_deviation);
            cell_means(img, valid, p.cell, g, b)
        })
        .collect();
    let n_cells = cells[0].len();
    if n_cells == 0 {
        return 0.0;
    }
    let changing = (0..n_cells)
        .into_par_iter()
        .filter(|&c| {
            let mut vals: Vec<f64> = cells.iter().filter_map(|f| f[c]).collect();
            if vals.len() < 3 {
                return false;
            }
            let med = median(&mut vals);
            vals.iter().any(|v| (v - med).abs() > p.cell_deviation)
        })
        .count();
    changing as f64 / n_cells as f64
}

/// Max minus min of the frame means, each over its own valid pixels.
pub fn mean_spread(frames: &[(GrayImage, ValidMask)]) -> f64 {
    let means: Vec<f64> = frames
        .iter()
        .map(|(img, valid)| {
            let (s, n) = img
                .data()
                .iter()
                .zip(valid.as_slice())
                .filter(|(_, &v)| v)
                .fold((0.0, 0usize), |(s, n), (&p, _)| (s + f64::from(p), n + 1));
            s / n.max(1) as f64
        })
        .collect();
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if means.is_empty() { 0.0 } else { hi - lo }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < 1e-12 || nb < 1e-12 { 0.0 } else { dot / (na * nb) }
}

fn mean_embedding(cfg: &PipelineConfig, rec: &ViewRecord) -> Result<Vec<f64>> {
    let cam = find_camera(&cfg.input_root, &rec.camera_id)?;
    let emb = cam.embeddings()?;
    let mut acc = vec![0.0; emb.dim];
    let mut n = 0usize;
    for m in &rec.members {
        if let Some(i) = emb.position(&m.image_id) {
            acc.iter_mut().zip(emb.row(i)).for_each(|(a, &v)| *a += f64::from(v));
            n += 1;
        }
    }
    acc.iter_mut().for_each(|a| *a /= n.max(1) as f64);
    Ok(acc)
}

/// Flags every registered view of the register stage and writes them to
/// `review/flags.jsonl` under the output root.
pub fn autoflag(cfg: &PipelineConfig, p: &FlagParams) -> Result<Vec<ViewFlags>> {
    let out = cfg.output_root.as_path();
    let manifest = Manifest::open(out)?;
    manifest
        .latest_stage(Stage::Register.name())
        .context("the register stage has not run")?;
    let records: Vec<ViewRecord> = read_jsonl(&out.join(artifact(Stage::Register, "views.jsonl")))?;
    let mut registered: Vec<&ViewRecord> = records
        .iter()
        .filter(|r| r.status == ViewStatus::Registered.as_str())
        .collect();
    registered.sort_by(|a, b| a.view_id.cmp(&b.view_id));

    let mut flags = Vec::with_capacity(registered.len());
    let mut earlier: Vec<(String, Vec<f64>)> = Vec::new();
    for rec in registered {
        let view = rec.to_view()?;
        let cam = find_camera(&cfg.input_root, &rec.camera_id)?;
        let reference = cam.load_image(&view.reference)?;
        let (w, h) = (reference.width(), reference.height());
        let frames = view
            .members
            .par_iter()
            .map(|m| warp_member(&cam.load_image(&m.image_id)?, &m.homography, w, h))
            .collect::<Result<Vec<_>>>()?;
        let changing = changing_fraction(&frames, p);
        let spread = mean_spread(&frames);
        let emb = mean_embedding(cfg, rec)?;
        let duplicate_of = earlier
            .iter()
            .find(|(_, e)| cosine(e, &emb) > p.duplicate_cosine)
            .map(|(id, _)| id.clone());

        let mut f = Vec::new();
        if changing > p.dynamic_fraction {
            f.push("dynamic".to_string());
        }
        if spread > p.exposure_spread {
            f.push("exposure".to_string());
        }
        if duplicate_of.is_some() {
            f.push("duplicate".to_string());
        }
        let rejected = manifest
            .live_decision(&rec.view_id)
            .is_some_and(|d| d.verdict == Verdict::Rejected);
        if !rejected {
            earlier.push((rec.view_id.clone(), emb));
        }
        log::info!("{}: flags {:?}", rec.view_id, f);
        flags.push(ViewFlags {
            view_id: rec.view_id.clone(),
            camera_id: rec.camera_id.clone(),
            flags: f,
            changing_fraction: changing,
            mean_spread: spread,
            duplicate_of,
        });
    }
    let path = out.join(FLAGS);
    std::fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))?;
    write_jsonl(&path, &flags)?;
    Ok(flags)
}

/// Reads the flags written by [`autoflag`], empty when it has not run.
pub fn read_flags(out: &Path) -> Result<Vec<ViewFlags>> {
    let path = out.join(FLAGS);
    if path.exists() { read_jsonl(&path) } else { Ok(Vec::new()) }
}
