#![allow(dead_code)]

use std::path::Path;

use patchfoundry::manifest::{Manifest, PruneDecision, Record, Verdict};
use patchfoundry::records::{read_jsonl, ViewRecord};
use patchfoundry::synth::{generate, CameraKind, SynthOptions};
use patchfoundry::{run_stage, PipelineConfig, Stage, StageStatus};
use tempfile::TempDir;

/// A synthetic input tree plus a config pointing at it.
pub struct Fixture {
    pub dir: TempDir,
    pub cfg: PipelineConfig,
}

impl Fixture {
    pub fn new(kinds: Vec<CameraKind>, frames: usize, seed: u64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in");
        let mut opts = SynthOptions::new(kinds.len(), frames, seed);
        opts.kinds = kinds;
        generate(&input, &opts).unwrap();
        let cfg = PipelineConfig {
            input_root: input,
            output_root: dir.path().join("out"),
            seed,
            jobs: 1,
            ..PipelineConfig::default()
        };
        Self { dir, cfg }
    }

    /// Frames per view small enough for quick runs.
    pub fn small_views(mut self, view_min: usize, view_cap: usize, n_patch_sets: usize) -> Self {
        self.cfg.view_min = view_min;
        self.cfg.view_cap = view_cap;
        self.cfg.n_patch_sets = n_patch_sets;
        self.cfg.batch_trials = 3;
        self
    }

    pub fn with_out(&self, name: &str) -> PipelineConfig {
        PipelineConfig {
            output_root: self.dir.path().join(name),
            ..self.cfg.clone()
        }
    }
}

pub fn run_all(cfg: &PipelineConfig, stages: &[Stage]) -> Vec<StageStatus> {
    stages
        .iter()
        .map(|&s| run_stage(cfg, s, false).unwrap_or_else(|e| panic!("{s}: {e:#}")).status)
        .collect()
}

pub fn registered_views(out: &Path) -> Vec<ViewRecord> {
    read_jsonl::<ViewRecord>(&out.join("register/views.jsonl"))
        .unwrap()
        .into_iter()
        .filter(|v| v.status == "registered")
        .collect()
}

/// Scripted review: accepts every registered view through the manifest.
pub fn accept_all(cfg: &PipelineConfig) -> usize {
    let views = registered_views(&cfg.output_root);
    let mut m = Manifest::open(&cfg.output_root).unwrap();
    for v in &views {
        m.append(Record::Decision(PruneDecision::new(&v.view_id, Verdict::Accepted, "scripted", "test")))
            .unwrap();
    }
    views.len()
}

pub const PREPARE: [Stage; 4] = [Stage::Gate, Stage::Cluster, Stage::Views, Stage::Register];
pub const FINISH: [Stage; 3] = [Stage::Sample, Stage::Export, Stage::Eval];
