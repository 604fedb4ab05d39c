use std::collections::HashMap;

use anyhow::Result;
use patchfoundry_core::gate::{sample_images, select_camera};
use rayon::prelude::*;

use super::{artifact, Stage, StageCtx, StageOutput};
use crate::layout::{input_files, list_cameras};
use crate::manifest::{hash_files, ItemRecord};
use crate::records::{write_jsonl, CameraRecord};

pub const CAMERAS: &str = "cameras.jsonl";
pub const INPUTS: &str = "inputs.tsv";

pub(super) fn run(ctx: &StageCtx<'_>) -> Result<StageOutput> {
    let cfg = ctx.cfg;
    let th = cfg.thresholds();
    let cameras = list_cameras(&cfg.input_root)?;
    let mut records = Vec::with_capacity(cameras.len());
    let mut items = Vec::with_capacity(cameras.len());
    for cam in &cameras {
        let ids = cam.image_ids();
        if ids.is_empty() {
            items.push(ItemRecord::new(&cam.camera_id, "dropped", vec!["no images".into()]));
            records.push(CameraRecord {
                camera_id: cam.camera_id.clone(),
                kept: false,
                n_images: 0,
                passing: 0,
                failure_counts: [0; 5],
                reports: Vec::new(),
            });
            continue;
        }
        // decode the sampled images in parallel, then run the sequential rule
        let sampled = sample_images(&cam.camera_id, &ids, th.sample_size, cfg.seed);
        let loaded: HashMap<&str, _> = sampled
            .par_iter()
            .map(|id| (id.as_str(), cam.load_for_gate(id)))
            .collect();
        let decision = select_camera(&cam.camera_id, &ids, &th, cfg.seed, |id| {
            loaded
                .get(id)
                .cloned()
                .unwrap_or_else(|| Err(format!("{id} was not preloaded")))
        })?;
        let rec = CameraRecord::from_decision(&decision, ids.len());
        items.push(ItemRecord::new(
            &cam.camera_id,
            if rec.kept { "kept" } else { "dropped" },
            rec.reasons(),
        ));
        records.push(rec);
    }
    write_jsonl(&ctx.path(Stage::Gate, CAMERAS), &records)?;

    // the content hashes of every input file, so downstream stages rerun
    // when frames change even if the camera decisions do not
    let files = input_files(&cfg.input_root)?;
    let hashes = hash_files(&cfg.input_root, &files)?;
    let table: String = hashes
        .iter()
        .map(|h| format!("{}\t{}\n", h.path, h.sha256))
        .collect();
    std::fs::write(ctx.path(Stage::Gate, INPUTS), table)?;

    Ok(StageOutput {
        outputs: vec![artifact(Stage::Gate, CAMERAS), artifact(Stage::Gate, INPUTS)],
        items,
    })
}
