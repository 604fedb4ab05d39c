use anyhow::{bail, Context, Result};
use patchfoundry_core::geom::{View, ViewStatus};
use patchfoundry_core::sampler::{
    build_probability_mask, sample_patch_specs, split_views, MaskMode, ValidRegion,
};
use patchfoundry_core::seed::derive_seed;
use patchfoundry_core::{GrayImage, ValidMask};
use rayon::prelude::*;

use super::{artifact, register, warp_member, Stage, StageCtx, StageOutput};
use crate::config::PipelineConfig;
use crate::layout::CameraDir;
use crate::layout::find_camera;
use crate::manifest::ItemRecord;
use crate::records::{read_jsonl, write_jsonl, SampledViewRecord, SpecRecord, Split, ViewRecord};

pub const SAMPLED_VIEWS: &str = "views.jsonl";
pub const SPECS: &str = "specs.jsonl";

/// Validity of every reference-frame pixel in one member, without resampling.
fn member_valid_mask(view: &View, member: usize, width: usize, height: usize) -> Result<ValidMask> {
    let to_member = view.members[member].homography.inverse()?;
    let valid = (0..height)
        .flat_map(|y| (0..width).map(move |x| (x, y)))
        .map(|(x, y)| {
            let (u, v) = to_member.apply(x as f64, y as f64);
            u >= 0.0 && v >= 0.0 && u <= (width - 1) as f64 && v <= (height - 1) as f64
        })
        .collect();
    Ok(ValidMask::from_vec(width, height, valid)?)
}

/// Builds the view's centre distribution and draws `n` specs.
pub fn sample_view_specs(
    cfg: &PipelineConfig,
    cam: &CameraDir,
    view: &View,
    n: usize,
) -> Result<(Vec<patchfoundry_core::sampler::PatchSpec>, bool)> {
    let reference = cam.load_image(&view.reference)?;
    let (w, h) = (reference.width(), reference.height());
    let (images, masks): (Vec<GrayImage>, Vec<ValidMask>) = match cfg.mask_mode {
        MaskMode::ReferenceOnly => {
            let masks = (0..view.len())
                .into_par_iter()
                .map(|i| member_valid_mask(view, i, w, h))
                .collect::<Result<Vec<_>>>()?;
            (vec![reference.clone()], masks)
        }
        _ => view
            .members
            .par_iter()
            .map(|m| warp_member(&cam.load_image(&m.image_id)?, &m.homography, w, h))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip(),
    };
    // reference-only mode reads pixels of the first image alone
    let image_refs: Vec<&GrayImage> = (0..masks.len()).map(|i| &images[i.min(images.len() - 1)]).collect();
    let mask_refs: Vec<&ValidMask> = masks.iter().collect();
    let outcome = build_probability_mask(&image_refs, &mask_refs, cfg.mask_mode, cfg.hessian_sigma)?;
    let region = ValidRegion::of_view(view, w, h)?;
    let seed = derive_seed(cfg.seed, &[b"specs".as_slice(), view.view_id.as_bytes()]);
    let specs = sample_patch_specs(&outcome.mask, &region, n, &cfg.spec_ranges(), seed)
        .with_context(|| format!("sampling specs in {}", view.view_id))?;
    Ok((specs, outcome.uniform_fallback))
}

pub(super) fn run(ctx: &StageCtx<'_>) -> Result<StageOutput> {
    let cfg = ctx.cfg;
    let registered: Vec<ViewRecord> = read_jsonl(&ctx.path(Stage::Register, register::REGISTERED))?;
    let accepted = ctx.accepted_views();
    let mut chosen: Vec<&ViewRecord> = registered
        .iter()
        .filter(|r| r.status == ViewStatus::Registered.as_str() && accepted.contains(&r.view_id))
        .collect();
    if chosen.is_empty() {
        bail!("no accepted views: review the registered views before sampling");
    }
    chosen.sort_by(|a, b| a.view_id.cmp(&b.view_id));

    let split = split_views(chosen.len(), cfg.test_fraction, derive_seed(cfg.seed, &[b"split"]))?;
    let n_views = chosen.len();
    let base = cfg.n_patch_sets / n_views;
    let extra = cfg.n_patch_sets % n_views;

    let mut view_rows = Vec::with_capacity(n_views);
    let mut spec_rows = Vec::new();
    let mut items = Vec::new();
    let mut next_id = 0u64;
    for (ordinal, rec) in chosen.iter().enumerate() {
        let view = rec.to_view()?;
        let cam = find_camera(&cfg.input_root, &rec.camera_id)?;
        let n = base + usize::from(ordinal < extra);
        let (specs, fallback) = sample_view_specs(cfg, &cam, &view, n)?;
        let split = if split.test.contains(&ordinal) { Split::Test } else { Split::Train };
        let ordinal = u32::try_from(ordinal)?;
        for s in &specs {
            spec_rows.push(SpecRecord {
                set_id: next_id,
                view_ordinal: ordinal,
                view_id: rec.view_id.clone(),
                split,
                x: s.x,
                y: s.y,
                scale: s.scale,
                angle: s.angle,
            });
            next_id += 1;
        }
        let mut reasons = vec![format!("{} specs, {} split", specs.len(), split.as_str())];
        if fallback {
            reasons.push("flat response, uniform mask".into());
        }
        items.push(ItemRecord::new(&rec.view_id, "sampled", reasons));
        view_rows.push(SampledViewRecord {
            view_ordinal: ordinal,
            camera_id: rec.camera_id.clone(),
            view_id: rec.view_id.clone(),
            split,
            n_specs: specs.len(),
            uniform_fallback: fallback,
        });
    }
    write_jsonl(&ctx.path(Stage::Sample, SAMPLED_VIEWS), &view_rows)?;
    write_jsonl(&ctx.path(Stage::Sample, SPECS), &spec_rows)?;
    Ok(StageOutput {
        outputs: vec![artifact(Stage::Sample, SAMPLED_VIEWS), artifact(Stage::Sample, SPECS)],
        items,
    })
}
