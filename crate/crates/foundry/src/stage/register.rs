use anyhow::Result;
use patchfoundry_core::geom::{apply_registrations, refine_registration, ViewStatus};
use patchfoundry_core::image::warp_image;
use patchfoundry_core::{GrayImage, Homography, ValidMask};
use rayon::prelude::*;

use super::{artifact, views, Stage, StageCtx, StageOutput};
use crate::layout::find_camera;
use crate::manifest::ItemRecord;
use crate::records::{read_jsonl, write_jsonl, ViewRecord};

pub const REGISTERED: &str = "views.jsonl";

/// Resamples a member into the reference frame given its member-to-reference
/// homography.
pub fn warp_member(
    img: &GrayImage,
    member_to_ref: &Homography,
    width: usize,
    height: usize,
) -> Result<(GrayImage, ValidMask)> {
    if *member_to_ref == Homography::identity() && img.width() == width && img.height() == height {
        return Ok((img.clone(), ValidMask::all_valid(width, height)));
    }
    Ok(warp_image(img, &member_to_ref.inverse()?, width, height)?)
}

pub(super) fn run(ctx: &StageCtx<'_>) -> Result<StageOutput> {
    let cfg = ctx.cfg;
    let all: Vec<ViewRecord> = read_jsonl(&ctx.path(Stage::Views, views::VIEWS))?;
    let params = cfg.refine();
    let mut records = Vec::new();
    let mut items = Vec::new();
    for rec in all.iter().filter(|r| r.status == ViewStatus::Raw.as_str()) {
        let view = rec.to_view()?;
        let cam = find_camera(&cfg.input_root, &rec.camera_id)?;
        let reference = cam.load_image(&view.reference)?;
        let results = view.members[1..]
            .par_iter()
            .map(|m| {
                let moving = cam.load_image(&m.image_id)?;
                Ok(refine_registration(&reference, &moving, &m.homography, &params))
            })
            .collect::<Result<Vec<_>>>()?;
        let verified = apply_registrations(&view, results);
        let mut out = ViewRecord::from_view(&rec.camera_id, &verified.view);
        for m in &mut out.members {
            m.ncc = verified
                .member_ncc
                .iter()
                .find(|(id, _)| *id == m.image_id)
                .map(|(_, c)| *c);
        }
        items.push(ItemRecord::new(
            &out.view_id,
            out.status.clone(),
            out.reasons.clone(),
        ));
        records.push(out);
    }
    write_jsonl(&ctx.path(Stage::Register, REGISTERED), &records)?;
    Ok(StageOutput {
        outputs: vec![artifact(Stage::Register, REGISTERED)],
        items,
    })
}
