use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{ensure, Context, Result};
use patchfoundry_core::eval::{
    baseline_descriptor, eval_patch, EvalReport, EvalView, PairResult, BASELINE_DIM,
};
use patchfoundry_core::sampler::{
    assemble_batch, hard_in_batch_triplet_loss, same_view_negative_fraction, AugmentParams,
    PackedPatchSet,
};
use patchfoundry_core::seed::derive_seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{artifact, export, sample, Stage, StageCtx, StageOutput};
use crate::config::PipelineConfig;
use crate::formats::{read_amem, read_amps, EmbeddingFile};
use crate::manifest::ItemRecord;
use crate::records::{read_jsonl, write_jsonl, SampledViewRecord};

pub const REPORT: &str = "report.txt";
pub const PAIRS: &str = "pairs.jsonl";
pub const PR: &str = "pr.txt";
pub const BATCH_COMPOSITION: &str = "batch_composition.txt";

/// Row id of an externally computed descriptor: `"<set_id>:<member>"`.
pub const EXTERNAL_DESCRIPTOR_KEY: &str = "<set_id>:<member>";

pub fn external_key(set_id: u64, member: usize) -> String {
    format!("{set_id}:{member}")
}

pub fn read_amps_file(path: &Path) -> Result<Vec<PackedPatchSet>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (_, sets) = read_amps(&mut BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(sets)
}

/// Baseline descriptors of every member of every set, set-major.
pub fn descriptors_for_sets(sets: &[&PackedPatchSet]) -> Result<Vec<f64>> {
    let rows: Vec<Vec<f64>> = sets
        .par_iter()
        .map(|s| {
            let mut out = Vec::with_capacity(s.len() * BASELINE_DIM);
            for m in 0..s.len() {
                out.extend(baseline_descriptor(&eval_patch(&s.patch(m))?)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(rows.concat())
}

/// Descriptors looked up in an external embedding file, set-major.
fn external_for_sets(ext: &EmbeddingFile, sets: &[&PackedPatchSet]) -> Result<Vec<f64>> {
    let index: BTreeMap<&str, usize> =
        ext.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut out = Vec::new();
    for s in sets {
        for m in 0..s.len() {
            let key = external_key(s.set_id, m);
            let row = index
                .get(key.as_str())
                .with_context(|| format!("external descriptors lack row {key}"))?;
            out.extend(ext.row(*row).iter().map(|&v| f64::from(v)));
        }
    }
    ensure!(out.iter().all(|v| v.is_finite()), "external descriptors are not finite");
    Ok(out)
}

/// Sets grouped by view ordinal, each group ordered by set id.
pub fn group_by_view(sets: &[PackedPatchSet]) -> BTreeMap<u32, Vec<&PackedPatchSet>> {
    let mut groups: BTreeMap<u32, Vec<&PackedPatchSet>> = BTreeMap::new();
    for s in sets {
        groups.entry(s.view_ordinal).or_default().push(s);
    }
    for g in groups.values_mut() {
        g.sort_by_key(|s| s.set_id);
    }
    groups
}

/// Descriptors of one view's sets, ready for [`EvalView`].
pub struct ViewDescriptors {
    pub view_id: String,
    pub n_sets: usize,
    pub n_members: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

/// Runs the matching evaluation on every ordered member pair of every view.
/// Each view carries its own B-side descriptors, a copy of the A side for
/// the plain evaluation.
pub fn evaluate(views: &[(ViewDescriptors, Vec<f64>)]) -> Result<EvalReport> {
    let eval_views = views
        .iter()
        .map(|(v, b)| EvalView::new(&v.view_id, v.n_sets, v.n_members, v.dim, &v.data, b))
        .collect::<patchfoundry_core::Result<Vec<_>>>()?;
    let tasks: Vec<(usize, usize, usize)> = eval_views
        .iter()
        .enumerate()
        .flat_map(|(k, v)| v.member_pairs().into_iter().map(move |(i, j)| (k, i, j)))
        .collect();
    let results = tasks
        .par_iter()
        .map(|&(k, i, j)| eval_views[k].evaluate_pair(i, j))
        .collect::<patchfoundry_core::Result<Vec<PairResult>>>()?;
    Ok(EvalReport::from_results(results)?)
}

/// Test views with their descriptors, keyed by the view ids of the sample stage.
pub fn test_view_descriptors(
    ctx: &StageCtx<'_>,
    sets: &[PackedPatchSet],
) -> Result<Vec<ViewDescriptors>> {
    let sampled: Vec<SampledViewRecord> =
        read_jsonl(&ctx.path(Stage::Sample, sample::SAMPLED_VIEWS))?;
    let external = if ctx.cfg.external_descriptors.as_os_str().is_empty() {
        None
    } else {
        let path = &ctx.cfg.external_descriptors;
        let mut r = BufReader::new(
            File::open(path).with_context(|| format!("opening {}", path.display()))?,
        );
        Some(read_amem(&mut r)?)
    };
    let mut out = Vec::new();
    for (ordinal, group) in group_by_view(sets) {
        let view_id = sampled
            .iter()
            .find(|s| s.view_ordinal == ordinal)
            .map(|s| s.view_id.clone())
            .with_context(|| format!("view ordinal {ordinal} is not in the sample stage"))?;
        let n_members = group[0].len();
        ensure!(group.iter().all(|s| s.len() == n_members), "sets of {view_id} differ in size");
        let (dim, data) = match &external {
            Some(ext) => (ext.dim, external_for_sets(ext, &group)?),
            None => (BASELINE_DIM, descriptors_for_sets(&group)?),
        };
        out.push(ViewDescriptors {
            view_id,
            n_sets: group.len(),
            n_members,
            dim,
            data,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchCompositionRow {
    pub label: String,
    pub views_per_batch: usize,
    pub batch_size: usize,
    pub trials: usize,
    /// Mean fraction of hardest negatives drawn from the anchor's own view.
    pub same_view_fraction: f64,
    pub mean_loss: f64,
}

/// Measures how the number of views per batch changes where hardest
/// negatives come from, using baseline descriptors of augmented patches.
/// Rows are ordered 1 view, `views_per_batch` views, all views. Trial seeds
/// depend on the view count only, so rows with equal counts are identical.
pub fn batch_composition(
    sets: &[PackedPatchSet],
    batch_size: usize,
    views_per_batch: usize,
    trials: usize,
    margin: f64,
    augment: &AugmentParams,
    seed: u64,
) -> Result<Vec<BatchCompositionRow>> {
    let groups = group_by_view(sets);
    let n_views = groups.len();
    ensure!(n_views > 0, "no patch sets");
    let smallest = groups.values().map(Vec::len).min().unwrap_or(0);
    let batch = batch_size.min(smallest);
    ensure!(batch >= 2, "views need at least 2 patch sets each for a batch, smallest has {smallest}");
    ensure!(trials > 0, "batch_trials must be positive");

    let configs = [
        ("1".to_string(), 1),
        (views_per_batch.min(n_views).to_string(), views_per_batch.min(n_views)),
        ("all".to_string(), n_views),
    ];
    configs
        .iter()
        .map(|(label, vpb)| {
            let per_trial = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let s = derive_seed(
                        seed,
                        &[b"batch".as_slice(), &(*vpb as u64).to_le_bytes(), &(t as u64).to_le_bytes()],
                    );
                    let b = assemble_batch(sets, batch, *vpb, augment, s)?;
                    let mut anchors = Vec::with_capacity(b.len() * BASELINE_DIM);
                    let mut positives = Vec::with_capacity(b.len() * BASELINE_DIM);
                    for (a, p) in b.anchors.iter().zip(&b.positives) {
                        anchors.extend(baseline_descriptor(a)?);
                        positives.extend(baseline_descriptor(p)?);
                    }
                    let loss = hard_in_batch_triplet_loss(&anchors, &positives, BASELINE_DIM, margin)?;
                    Ok((same_view_negative_fraction(&b, &loss), loss.loss))
                })
                .collect::<Result<Vec<(f64, f64)>>>()?;
            let n = per_trial.len() as f64;
            Ok(BatchCompositionRow {
                label: label.clone(),
                views_per_batch: *vpb,
                batch_size: batch,
                trials,
                same_view_fraction: per_trial.iter().map(|r| r.0).sum::<f64>() / n,
                mean_loss: per_trial.iter().map(|r| r.1).sum::<f64>() / n,
            })
        })
        .collect()
}

/// True when the same-view fraction does not increase with more views.
pub fn is_monotone(rows: &[BatchCompositionRow]) -> bool {
    rows.windows(2)
        .all(|w| w[1].same_view_fraction <= w[0].same_view_fraction + 1e-12)
}

pub fn format_batch_composition(rows: &[BatchCompositionRow]) -> String {
    let mut s = String::from("views\tviews_per_batch\tbatch_size\ttrials\tsame_view_fraction\tmean_loss\n");
    for r in rows {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\n",
            r.label, r.views_per_batch, r.batch_size, r.trials, r.same_view_fraction, r.mean_loss
        ));
    }
    s.push_str(&format!("monotone\t{}\n", if is_monotone(rows) { "yes" } else { "no" }));
    s
}

#[derive(Serialize)]
struct PairRow<'a> {
    pair_id: String,
    view_id: &'a str,
    i: usize,
    j: usize,
    ap: f64,
}

pub fn format_report(report: &EvalReport) -> String {
    let mut s = String::new();
    for p in &report.pairs {
        s.push_str(&format!("{}\t{:.6}\n", p.pair_id(), p.ap));
    }
    s.push_str(&format!("mAP {:.6}\n", report.map));
    s
}

fn batch_run(cfg: &PipelineConfig, ctx: &StageCtx<'_>) -> Result<Vec<BatchCompositionRow>> {
    let mut all = read_amps_file(&ctx.path(Stage::Export, export::TRAIN))?;
    all.extend(read_amps_file(&ctx.path(Stage::Export, export::TEST))?);
    batch_composition(
        &all,
        cfg.batch_size,
        cfg.views_per_batch,
        cfg.batch_trials,
        cfg.margin,
        &cfg.augment(),
        derive_seed(cfg.seed, &[b"batch-composition"]),
    )
}

pub(super) fn run(ctx: &StageCtx<'_>) -> Result<StageOutput> {
    let cfg = ctx.cfg;
    let test = read_amps_file(&ctx.path(Stage::Export, export::TEST))?;
    ensure!(!test.is_empty(), "the test split is empty");
    let views = test_view_descriptors(ctx, &test)?;
    let paired: Vec<(ViewDescriptors, Vec<f64>)> = views
        .into_iter()
        .map(|v| {
            let b = v.data.clone();
            (v, b)
        })
        .collect();
    let report = evaluate(&paired)?;

    std::fs::write(ctx.path(Stage::Eval, REPORT), format_report(&report))?;
    let rows: Vec<PairRow<'_>> = report
        .pairs
        .iter()
        .map(|p| PairRow {
            pair_id: p.pair_id(),
            view_id: &p.view_id,
            i: p.i,
            j: p.j,
            ap: p.ap,
        })
        .collect();
    write_jsonl(&ctx.path(Stage::Eval, PAIRS), &rows)?;
    let mut pr = String::from("recall precision\n");
    for pt in &report.pr.points {
        pr.push_str(&format!("{:.6} {:.6}\n", pt.recall, pt.precision));
    }
    std::fs::write(ctx.path(Stage::Eval, PR), pr)?;

    let comp = batch_run(cfg, ctx)?;
    std::fs::write(ctx.path(Stage::Eval, BATCH_COMPOSITION), format_batch_composition(&comp))?;

    let items = paired
        .iter()
        .map(|(v, _)| {
            let aps: Vec<f64> = report
                .pairs
                .iter()
                .filter(|p| p.view_id == v.view_id)
                .map(|p| p.ap)
                .collect();
            let mean = aps.iter().sum::<f64>() / aps.len().max(1) as f64;
            ItemRecord::new(
                &v.view_id,
                "evaluated",
                vec![format!("{} sets, {} pairs, mAP {mean:.4}", v.n_sets, aps.len())],
            )
        })
        .collect();
    Ok(StageOutput {
        outputs: [REPORT, PAIRS, PR, BATCH_COMPOSITION]
            .iter()
            .map(|f| artifact(Stage::Eval, f))
            .collect(),
        items,
    })
}
