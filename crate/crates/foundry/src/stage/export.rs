use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;

use anyhow::{bail, ensure, Context, Result};
use patchfoundry_core::geom::View;
use patchfoundry_core::sampler::{extract_patch_set, PackedPatchSet, PATCH_OUT};
use patchfoundry_core::GrayImage;
use rayon::prelude::*;

use super::{artifact, register, sample, Stage, StageCtx, StageOutput};
use crate::formats::AmpsWriter;
use crate::layout::{find_camera, CameraDir};
use crate::manifest::ItemRecord;
use crate::records::{read_jsonl, SampledViewRecord, SpecRecord, Split, ViewRecord};

pub const TRAIN: &str = "train.amps";
pub const TEST: &str = "test.amps";
pub const INDEX: &str = "index.tsv";

pub fn split_file(split: Split) -> &'static str {
    match split {
        Split::Train => TRAIN,
        Split::Test => TEST,
    }
}

/// Loads a view's member frames in member order.
pub fn load_view_images(cam: &CameraDir, view: &View) -> Result<Vec<GrayImage>> {
    view.members
        .par_iter()
        .map(|m| cam.load_image(&m.image_id))
        .collect()
}

/// Extracts and quantizes the patch sets of `specs`, in order.
pub fn pack_sets(
    view: &View,
    images: &[GrayImage],
    specs: &[&SpecRecord],
) -> Result<Vec<PackedPatchSet>> {
    let refs: Vec<&GrayImage> = images.iter().collect();
    specs
        .par_iter()
        .map(|s| {
            let set = extract_patch_set(view, &refs, &s.spec(), PATCH_OUT)
                .with_context(|| format!("patch set {}", s.set_id))?;
            Ok(PackedPatchSet::from_patch_set(s.set_id, s.view_ordinal, &set)?)
        })
        .collect()
}

/// The views and specs chosen by the sample stage, joined with their
/// registered geometry.
pub struct SampledDataset {
    pub views: Vec<(SampledViewRecord, ViewRecord)>,
    pub specs: Vec<SpecRecord>,
}

impl SampledDataset {
    pub fn load(ctx: &StageCtx<'_>) -> Result<Self> {
        let sampled: Vec<SampledViewRecord> =
            read_jsonl(&ctx.path(Stage::Sample, sample::SAMPLED_VIEWS))?;
        let specs: Vec<SpecRecord> = read_jsonl(&ctx.path(Stage::Sample, sample::SPECS))?;
        let registered: Vec<ViewRecord> =
            read_jsonl(&ctx.path(Stage::Register, register::REGISTERED))?;
        let views = sampled
            .into_iter()
            .map(|s| {
                let v = registered
                    .iter()
                    .find(|r| r.view_id == s.view_id)
                    .with_context(|| format!("sampled view {} is not registered", s.view_id))?
                    .clone();
                Ok((s, v))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { views, specs })
    }

    pub fn specs_of(&self, ordinal: u32) -> Vec<&SpecRecord> {
        self.specs.iter().filter(|s| s.view_ordinal == ordinal).collect()
    }
}

pub(super) fn run(ctx: &StageCtx<'_>) -> Result<StageOutput> {
    let cfg = ctx.cfg;
    let data = SampledDataset::load(ctx)?;
    if data.views.is_empty() {
        bail!("no accepted views to export");
    }
    let mut split_of: BTreeMap<&str, Split> = BTreeMap::new();
    for (s, _) in &data.views {
        if let Some(prev) = split_of.insert(&s.view_id, s.split) {
            ensure!(prev == s.split, "view {} appears in both splits", s.view_id);
        }
    }

    let mut index = String::from("set_id\tsplit\tcamera_id\tview_id\tview_ordinal\tmembers\n");
    let mut items = Vec::new();
    let mut outputs = Vec::new();
    for split in [Split::Train, Split::Test] {
        let views: Vec<&(SampledViewRecord, ViewRecord)> =
            data.views.iter().filter(|(s, _)| s.split == split).collect();
        let n_sets: usize = views.iter().map(|(s, _)| data.specs_of(s.view_ordinal).len()).sum();
        let set_size = views.first().map_or(0, |(_, v)| v.members.len());
        for (_, v) in &views {
            ensure!(
                v.members.len() == set_size,
                "views of the {} split differ in size ({} vs {set_size}); one dataset file needs equal set sizes",
                split.as_str(),
                v.members.len()
            );
        }
        let name = split_file(split);
        let file = File::create(ctx.path(Stage::Export, name))?;
        let mut writer = AmpsWriter::new(BufWriter::new(file), n_sets, set_size)?;
        for (s, rec) in views {
            let view = rec.to_view()?;
            let cam = find_camera(&cfg.input_root, &rec.camera_id)?;
            let images = load_view_images(&cam, &view)?;
            let specs = data.specs_of(s.view_ordinal);
            let packed = pack_sets(&view, &images, &specs)?;
            let members = rec.member_ids().join(",");
            for p in &packed {
                writer.write_set(p)?;
                index.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{members}\n",
                    p.set_id,
                    split.as_str(),
                    rec.camera_id,
                    rec.view_id,
                    p.view_ordinal
                ));
            }
            items.push(ItemRecord::new(
                &rec.view_id,
                split.as_str(),
                vec![format!("{} patch sets of {} patches", packed.len(), set_size)],
            ));
        }
        writer.finish()?;
        outputs.push(artifact(Stage::Export, name));
    }
    std::fs::write(ctx.path(Stage::Export, INDEX), index)?;
    outputs.push(artifact(Stage::Export, INDEX));
    Ok(StageOutput { outputs, items })
}
