//! Stage DAG and the content-hash idempotent runner.

mod cluster;
mod dereg;
mod eval;
mod export;
mod gate;
mod register;
mod sample;
mod views;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::layout::input_files;
use crate::manifest::{
    hash_files, now_ms, sha256_file, FileHash, ItemRecord, Manifest, Record, RunInfo, StageRecord,
    Verdict,
};

pub use dereg::{dereg_sweep, DeregInput, DeregRow};
pub use eval::{
    batch_composition, descriptors_for_sets, BatchCompositionRow, EXTERNAL_DESCRIPTOR_KEY,
};
pub use register::warp_member;
pub use views::camera_views;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Gate,
    Cluster,
    Views,
    Register,
    Sample,
    Export,
    Eval,
    Dereg,
}

const GATE_KEYS: &[&str] = &[
    "input_root",
    "seed",
    "sky_max",
    "lap_var_min",
    "mean_min",
    "min_width",
    "min_height",
    "sample_size",
    "pass_min",
    "confidence_floor",
    "missing_sidecar",
];
const CLUSTER_KEYS: &[&str] = &["input_root", "seed", "k", "kmeans_max_iters", "kmeans_tol", "l2_normalize_embeddings"];
const VIEWS_KEYS: &[&str] = &[
    "input_root",
    "seed",
    "max_keypoints",
    "ratio",
    "inlier_px",
    "ransac_max_iters",
    "matcher_downscale",
    "min_inliers",
    "max_sad",
    "view_min",
    "view_cap",
];
const REGISTER_KEYS: &[&str] = &["input_root", "refine_levels", "refine_max_iters", "ncc_floor", "refine_min_valid"];
const SAMPLE_KEYS: &[&str] = &[
    "input_root",
    "seed",
    "mask_mode",
    "hessian_sigma",
    "n_patch_sets",
    "scale_min",
    "scale_max",
    "angle_min_deg",
    "angle_max_deg",
    "test_fraction",
];
const EXPORT_KEYS: &[&str] = &["input_root"];
const EVAL_KEYS: &[&str] = &[
    "seed",
    "batch_size",
    "views_per_batch",
    "batch_trials",
    "margin",
    "rotation_deg",
    "aug_scale_min",
    "aug_scale_max",
    "shear",
    "external_descriptors",
];
const DEREG_KEYS: &[&str] = &["input_root", "seed", "dereg_shifts"];

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Gate,
        Stage::Cluster,
        Stage::Views,
        Stage::Register,
        Stage::Sample,
        Stage::Export,
        Stage::Eval,
        Stage::Dereg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Gate => "gate",
            Stage::Cluster => "cluster",
            Stage::Views => "views",
            Stage::Register => "register",
            Stage::Sample => "sample",
            Stage::Export => "export",
            Stage::Eval => "eval",
            Stage::Dereg => "dereg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.name() == s)
    }

    /// Every stage that must have run before this one.
    pub fn upstream(self) -> &'static [Stage] {
        let i = Self::ALL.iter().position(|&s| s == self).expect("listed");
        &Self::ALL[..i]
    }

    /// Config keys whose values feed this stage's hash.
    pub fn config_keys(self) -> &'static [&'static str] {
        match self {
            Stage::Gate => GATE_KEYS,
            Stage::Cluster => CLUSTER_KEYS,
            Stage::Views => VIEWS_KEYS,
            Stage::Register => REGISTER_KEYS,
            Stage::Sample => SAMPLE_KEYS,
            Stage::Export => EXPORT_KEYS,
            Stage::Eval => EVAL_KEYS,
            Stage::Dereg => DEREG_KEYS,
        }
    }

    fn reads_decisions(self) -> bool {
        self >= Stage::Sample
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Relative path of a stage artifact, e.g. `views/views.jsonl`.
pub fn artifact(stage: Stage, file: &str) -> String {
    format!("{}/{file}", stage.name())
}

/// What a stage body hands back to the runner.
#[derive(Debug, Default)]
pub struct StageOutput {
    /// Artifact paths relative to the output root.
    pub outputs: Vec<String>,
    pub items: Vec<ItemRecord>,
}

/// Read-only context of a stage body.
pub struct StageCtx<'a> {
    pub cfg: &'a PipelineConfig,
    pub out: &'a Path,
    pub manifest: &'a Manifest,
}

impl StageCtx<'_> {
    pub fn path(&self, stage: Stage, file: &str) -> PathBuf {
        self.out.join(artifact(stage, file))
    }

    /// View ids whose live decision is `accepted`.
    pub fn accepted_views(&self) -> Vec<String> {
        self.manifest
            .live_decisions()
            .into_iter()
            .filter(|d| d.verdict == Verdict::Accepted)
            .map(|d| d.view_id.clone())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    UpToDate,
}

#[derive(Debug, Clone)]
pub struct StageRun {
    pub status: StageStatus,
    pub record: StageRecord,
}

fn decisions_digest(manifest: &Manifest) -> FileHash {
    let mut h = Sha256::new();
    for d in manifest.live_decisions() {
        h.update(format!("{}\t{}\n", d.view_id, d.verdict.as_str()).as_bytes());
    }
    FileHash {
        path: "decisions".into(),
        sha256: hex::encode(h.finalize()),
    }
}

fn stage_inputs(cfg: &PipelineConfig, stage: Stage, manifest: &Manifest) -> Result<Vec<FileHash>> {
    let mut inputs = Vec::new();
    if stage == Stage::Gate {
        let files = input_files(&cfg.input_root)?;
        for h in hash_files(&cfg.input_root, &files)? {
            inputs.push(FileHash {
                path: format!("input:{}", h.path),
                sha256: h.sha256,
            });
        }
        return Ok(inputs);
    }
    for up in stage.upstream() {
        let rec = manifest
            .latest_stage(up.name())
            .with_context(|| format!("missing predecessor stage {up}: run `{up}` first"))?;
        inputs.extend(rec.outputs.iter().cloned());
    }
    if stage.reads_decisions() {
        inputs.push(decisions_digest(manifest));
    }
    if stage == Stage::Eval && !cfg.external_descriptors.as_os_str().is_empty() {
        inputs.push(FileHash {
            path: format!("external:{}", cfg.external_descriptors.display()),
            sha256: sha256_file(&cfg.external_descriptors)?,
        });
    }
    Ok(inputs)
}

fn outputs_intact(out: &Path, rec: &StageRecord) -> bool {
    rec.outputs.iter().all(|f| {
        let p = out.join(&f.path);
        p.exists() && sha256_file(&p).is_ok_and(|h| h == f.sha256)
    })
}

fn check_upstream_outputs(out: &Path, stage: Stage, manifest: &Manifest) -> Result<()> {
    for up in stage.upstream() {
        if let Some(rec) = manifest.latest_stage(up.name()) {
            for f in &rec.outputs {
                let p = out.join(&f.path);
                if !p.exists() || sha256_file(&p)? != f.sha256 {
                    bail!("artifact {} of stage {up} is missing or modified; rerun {up}", f.path);
                }
            }
        }
    }
    Ok(())
}

fn execute(stage: Stage, ctx: &StageCtx<'_>) -> Result<StageOutput> {
    match stage {
        Stage::Gate => gate::run(ctx),
        Stage::Cluster => cluster::run(ctx),
        Stage::Views => views::run(ctx),
        Stage::Register => register::run(ctx),
        Stage::Sample => sample::run(ctx),
        Stage::Export => export::run(ctx),
        Stage::Eval => eval::run(ctx),
        Stage::Dereg => dereg::run(ctx),
    }
}

/// Runs one stage on a worker pool of `cfg.jobs` threads.
///
/// The stage is skipped when its latest record has the same config hash
/// and inputs and its outputs are intact. A changed config hash is an
/// error unless `force` is set; `force` also reruns an up-to-date stage.
pub fn run_stage(cfg: &PipelineConfig, stage: Stage, force: bool) -> Result<StageRun> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .context("building worker pool")?;
    pool.install(|| run_stage_in_pool(cfg, stage, force))
}

fn run_stage_in_pool(cfg: &PipelineConfig, stage: Stage, force: bool) -> Result<StageRun> {
    let out = cfg.output_root.as_path();
    std::fs::create_dir_all(out)?;
    let mut manifest = Manifest::open(out)?;
    let inputs = stage_inputs(cfg, stage, &manifest)?;
    check_upstream_outputs(out, stage, &manifest)?;
    let config_hash = cfg.stage_hash(stage);

    if let Some(prev) = manifest.latest_stage(stage.name()) {
        if prev.config_hash != config_hash && !force {
            bail!(
                "config for stage {stage} changed since its last run; pass --force to rerun"
            );
        }
        if !force && prev.config_hash == config_hash && prev.inputs == inputs && outputs_intact(out, prev) {
            log::info!("{stage}: up to date");
            return Ok(StageRun {
                status: StageStatus::UpToDate,
                record: prev.clone(),
            });
        }
    }

    let started = now_ms();
    let dir = out.join(stage.name());
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    std::fs::create_dir_all(&dir)?;
    let result = {
        let ctx = StageCtx {
            cfg,
            out,
            manifest: &manifest,
        };
        execute(stage, &ctx).with_context(|| format!("stage {stage}"))?
    };
    let outputs = hash_files(out, &result.outputs)?;
    let record = StageRecord {
        stage: stage.name().to_string(),
        config_hash,
        config: cfg.embedded(),
        inputs,
        outputs,
        items: result.items,
        run: RunInfo {
            started_ms: Some(started),
            finished_ms: Some(now_ms()),
            jobs: Some(cfg.jobs),
            output_root: Some(out.display().to_string()),
            timestamp_ms: None,
        },
    };
    manifest.append(Record::Stage(record.clone()))?;
    log::info!("{stage}: done, {} outputs", record.outputs.len());
    Ok(StageRun {
        status: StageStatus::Ran,
        record,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip_and_dag_is_a_chain() {
        for (i, s) in Stage::ALL.into_iter().enumerate() {
            assert_eq!(Stage::parse(s.name()), Some(s));
            assert_eq!(s.upstream().len(), i);
        }
        assert!(Stage::parse("review").is_none());
    }

    #[test]
    fn stage_keys_exist_in_config() {
        let cfg = PipelineConfig::default();
        let keys: Vec<&str> = cfg.entries().iter().map(|(k, _)| *k).collect();
        for s in Stage::ALL {
            for k in s.config_keys() {
                assert!(keys.contains(k), "{k} of {s} missing");
            }
        }
    }

    #[test]
    fn missing_predecessor_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig {
            output_root: dir.path().join("out"),
            input_root: dir.path().join("in"),
            ..PipelineConfig::default()
        };
        let err = run_stage(&cfg, Stage::Views, false).unwrap_err();
        assert!(format!("{err:#}").contains("missing predecessor stage gate"), "{err:#}");
    }
}
