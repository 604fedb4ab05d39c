use anyhow::{ensure, Result};
use patchfoundry_core::cluster::{reduce_to_representatives, EmbeddingSet};
use patchfoundry_core::seed::derive_seed;
use rayon::prelude::*;

use super::{artifact, gate, Stage, StageCtx, StageOutput};
use crate::layout::find_camera;
use crate::manifest::ItemRecord;
use crate::records::{read_jsonl, write_jsonl, CameraRecord, RepresentativesRecord};

pub const REPRESENTATIVES: &str = "representatives.jsonl";

pub(super) fn run(ctx: &StageCtx<'_>) -> Result<StageOutput> {
    let cameras: Vec<CameraRecord> = read_jsonl(&ctx.path(Stage::Gate, gate::CAMERAS))?;
    let kept: Vec<&CameraRecord> = cameras.iter().filter(|c| c.kept).collect();
    let records: Vec<RepresentativesRecord> = kept
        .par_iter()
        .map(|c| reduce_camera(ctx, &c.camera_id))
        .collect::<Result<_>>()?;
    let items = records
        .iter()
        .map(|r| {
            ItemRecord::new(
                &r.camera_id,
                "reduced",
                vec![format!("{} of {} images", r.representatives.len(), r.n_images)],
            )
        })
        .collect();
    write_jsonl(&ctx.path(Stage::Cluster, REPRESENTATIVES), &records)?;
    Ok(StageOutput {
        outputs: vec![artifact(Stage::Cluster, REPRESENTATIVES)],
        items,
    })
}

fn reduce_camera(ctx: &StageCtx<'_>, camera_id: &str) -> Result<RepresentativesRecord> {
    let cfg = ctx.cfg;
    let cam = find_camera(&cfg.input_root, camera_id)?;
    let emb = cam.embeddings()?;
    let archive = cam.image_ids();
    // only frames that exist on disk and have an embedding take part
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (i, id) in emb.ids.iter().enumerate() {
        if cam.images.contains_key(id) {
            ids.push(id.clone());
            data.extend(emb.row(i).iter().map(|&v| f64::from(v)));
        } else {
            log::warn!("{camera_id}: embedding for unknown image {id}");
        }
    }
    ensure!(!ids.is_empty(), "camera {camera_id} has no embedded images");
    let mut set = EmbeddingSet::new(ids, emb.dim, data)?;
    if cfg.l2_normalize_embeddings {
        set = set.l2_normalized();
    }
    let params = cfg.kmeans(derive_seed(cfg.seed, &[b"kmeans".as_slice(), camera_id.as_bytes()]));
    let mut reps = reduce_to_representatives(&set, &params)?;
    reps.sort_by_key(|id| archive.binary_search(id).unwrap_or(usize::MAX));
    Ok(RepresentativesRecord {
        camera_id: camera_id.to_string(),
        n_images: archive.len(),
        representatives: reps,
    })
}
