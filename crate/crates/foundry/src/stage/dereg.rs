use anyhow::{ensure, Context, Result};
use patchfoundry_core::eval::displacement_direction;
use patchfoundry_core::geom::View;
use patchfoundry_core::sampler::{extract_patch_set, PackedPatchSet, PatchSpec, ValidRegion, PATCH_OUT};
use patchfoundry_core::GrayImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::{descriptors_for_sets, evaluate, ViewDescriptors};
use super::export::{load_view_images, SampledDataset};
use super::{artifact, Stage, StageCtx, StageOutput};
use crate::layout::find_camera;
use crate::manifest::ItemRecord;
use crate::records::{write_jsonl, Split};
use patchfoundry_core::eval::BASELINE_DIM;

pub const REPORT: &str = "report.txt";
pub const SWEEP: &str = "sweep.jsonl";

/// One registered view with its frames (member order) and patch specs.
pub struct DeregInput<'a> {
    pub view: &'a View,
    pub images: &'a [GrayImage],
    /// `(set_id, spec)` pairs.
    pub specs: &'a [(u64, PatchSpec)],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeregRow {
    pub shift: f64,
    pub map: f64,
    pub n_sets: usize,
    /// Sets whose displaced square left the common region.
    pub dropped: usize,
}

fn pack(view: &View, images: &[&GrayImage], set_id: u64, spec: &PatchSpec) -> Result<PackedPatchSet> {
    let set = extract_patch_set(view, images, spec, PATCH_OUT)
        .with_context(|| format!("patch set {set_id}"))?;
    Ok(PackedPatchSet::from_patch_set(set_id, 0, &set)?)
}

/// Matching mAP when the B side of every pair is cut at a spec displaced by
/// each shift, in a direction fixed per set. Both sides are quantized to 8
/// bits, so shift 0 reproduces the plain evaluation.
pub fn dereg_sweep(inputs: &[DeregInput<'_>], shifts: &[f64], seed: u64) -> Result<Vec<DeregRow>> {
    ensure!(!inputs.is_empty(), "no views to sweep");
    let prepared = inputs
        .iter()
        .map(|inp| {
            let refs: Vec<&GrayImage> = inp.images.iter().collect();
            let region = ValidRegion::of_view(inp.view, inp.images[0].width(), inp.images[0].height())?;
            let a_sets = inp
                .specs
                .par_iter()
                .map(|(id, spec)| pack(inp.view, &refs, *id, spec))
                .collect::<Result<Vec<_>>>()?;
            let a_refs: Vec<&PackedPatchSet> = a_sets.iter().collect();
            let a = descriptors_for_sets(&a_refs)?;
            Ok((region, a, refs))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(shifts.len());
    for &shift in shifts {
        let mut views = Vec::new();
        let mut dropped = 0;
        let mut n_sets = 0;
        for (inp, (region, a, refs)) in inputs.iter().zip(&prepared) {
            let kept: Vec<(usize, PatchSpec)> = inp
                .specs
                .iter()
                .enumerate()
                .map(|(k, (id, spec))| (k, spec.displaced(shift, displacement_direction(seed, *id))))
                .filter(|(_, s)| region.contains_spec(s))
                .collect();
            dropped += inp.specs.len() - kept.len();
            if kept.len() < 2 {
                dropped += kept.len();
                continue;
            }
            let b_sets = kept
                .par_iter()
                .map(|(k, s)| pack(inp.view, refs, inp.specs[*k].0, s))
                .collect::<Result<Vec<_>>>()?;
            let b_refs: Vec<&PackedPatchSet> = b_sets.iter().collect();
            let b = descriptors_for_sets(&b_refs)?;
            let m = inp.view.len();
            let a_kept: Vec<f64> = kept
                .iter()
                .flat_map(|(k, _)| a[k * m * BASELINE_DIM..(k + 1) * m * BASELINE_DIM].iter().copied())
                .collect();
            n_sets += kept.len();
            views.push((
                ViewDescriptors {
                    view_id: inp.view.view_id.clone(),
                    n_sets: kept.len(),
                    n_members: m,
                    dim: BASELINE_DIM,
                    data: a_kept,
                },
                b,
            ));
        }
        ensure!(!views.is_empty(), "every view lost its patch sets at shift {shift}");
        let report = evaluate(&views)?;
        rows.push(DeregRow {
            shift,
            map: report.map,
            n_sets,
            dropped,
        });
    }
    Ok(rows)
}

pub fn format_report(rows: &[DeregRow]) -> String {
    let mut s = String::from("shift\tmAP\tn_sets\tdropped\n");
    for r in rows {
        s.push_str(&format!("{}\t{:.6}\t{}\t{}\n", r.shift, r.map, r.n_sets, r.dropped));
    }
    s
}

pub(super) fn run(ctx: &StageCtx<'_>) -> Result<StageOutput> {
    let cfg = ctx.cfg;
    let data = SampledDataset::load(ctx)?;
    let mut loaded = Vec::new();
    for (s, rec) in data.views.iter().filter(|(s, _)| s.split == Split::Test) {
        let view = rec.to_view()?;
        let cam = find_camera(&cfg.input_root, &rec.camera_id)?;
        let images = load_view_images(&cam, &view)?;
        let specs: Vec<(u64, PatchSpec)> = data
            .specs_of(s.view_ordinal)
            .into_iter()
            .map(|r| (r.set_id, r.spec()))
            .collect();
        loaded.push((view, images, specs));
    }
    ensure!(!loaded.is_empty(), "the test split is empty");
    let inputs: Vec<DeregInput<'_>> = loaded
        .iter()
        .map(|(view, images, specs)| DeregInput { view, images, specs })
        .collect();
    let rows = dereg_sweep(&inputs, &cfg.dereg_shifts, cfg.seed)?;
    std::fs::write(ctx.path(Stage::Dereg, REPORT), format_report(&rows))?;
    write_jsonl(&ctx.path(Stage::Dereg, SWEEP), &rows)?;
    let items = rows
        .iter()
        .map(|r| {
            ItemRecord::new(
                format!("shift:{}", r.shift),
                "evaluated",
                vec![format!("mAP {:.4} over {} sets, {} dropped", r.map, r.n_sets, r.dropped)],
            )
        })
        .collect();
    Ok(StageOutput {
        outputs: vec![artifact(Stage::Dereg, REPORT), artifact(Stage::Dereg, SWEEP)],
        items,
    })
}
