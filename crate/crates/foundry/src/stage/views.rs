use anyhow::Result;
use patchfoundry_core::geom::{
    cluster_views, extract_features, keep_dominant_view, label_non_dominant, match_pair,
    ImageFeatures, View,
};
use patchfoundry_core::seed::derive_seed;
use rayon::prelude::*;

use super::{artifact, cluster, Stage, StageCtx, StageOutput};
use crate::config::PipelineConfig;
use crate::layout::find_camera;
use crate::manifest::ItemRecord;
use crate::records::{read_jsonl, write_jsonl, RepresentativesRecord, ViewRecord};

pub const VIEWS: &str = "views.jsonl";

/// Clusters one camera's frames into views and marks the dominant one.
/// Returns every view; the dominant view (subsampled to the cap) keeps
/// status `raw`, all others are `rejected`.
pub fn camera_views(
    cfg: &PipelineConfig,
    camera_id: &str,
    ids: &[String],
    features: &[ImageFeatures],
) -> Vec<View> {
    let mcfg = cfg.matcher();
    let rule = cfg.view_rule();
    let mut views = cluster_views(ids, &rule, camera_id, |r, cands| {
        cands
            .par_iter()
            .map(|&c| {
                let seed = derive_seed(
                    cfg.seed,
                    &[b"match".as_slice(), camera_id.as_bytes(), ids[r].as_bytes(), ids[c].as_bytes()],
                );
                match_pair(&features[r], &features[c], &mcfg, seed)
            })
            .collect()
    });
    let dominant = keep_dominant_view(&views, cfg.view_min, cfg.view_cap, cfg.seed);
    label_non_dominant(&mut views, dominant.as_ref(), cfg.view_min);
    if let Some(d) = dominant {
        if let Some(slot) = views.iter_mut().find(|v| v.view_id == d.view_id) {
            *slot = d;
        }
    }
    views
}

pub(super) fn run(ctx: &StageCtx<'_>) -> Result<StageOutput> {
    let cfg = ctx.cfg;
    let reps: Vec<RepresentativesRecord> =
        read_jsonl(&ctx.path(Stage::Cluster, cluster::REPRESENTATIVES))?;
    let mut records = Vec::new();
    let mut items = Vec::new();
    for r in &reps {
        let cam = find_camera(&cfg.input_root, &r.camera_id)?;
        let mcfg = cfg.matcher();
        let features: Vec<ImageFeatures> = r
            .representatives
            .par_iter()
            .map(|id| Ok(extract_features(&cam.load_image(id)?, &mcfg)?))
            .collect::<Result<_>>()?;
        let views = camera_views(cfg, &r.camera_id, &r.representatives, &features);
        for v in &views {
            items.push(ItemRecord::new(
                &v.view_id,
                if v.status.as_str() == "raw" { "dominant" } else { "rejected" },
                {
                    let mut reasons = vec![format!("{} members", v.len())];
                    reasons.extend(v.reasons.iter().cloned());
                    reasons
                },
            ));
            records.push(ViewRecord::from_view(&r.camera_id, v));
        }
    }
    write_jsonl(&ctx.path(Stage::Views, VIEWS), &records)?;
    Ok(StageOutput {
        outputs: vec![artifact(Stage::Views, VIEWS)],
        items,
    })
}
