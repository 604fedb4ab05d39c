use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use patchfoundry::manifest::{verify_outputs, Manifest, PruneDecision, Record, Verdict};
use patchfoundry::records::{read_jsonl, ViewRecord};
use patchfoundry::review::{autoflag, FlagParams};
use patchfoundry::stage::artifact;
use patchfoundry::synth::{generate, CameraKind, SynthOptions};
use patchfoundry::{run_stage, PipelineConfig, Stage, StageStatus};
use patchfoundry_core::geom::ViewStatus;

#[derive(Parser)]
#[command(name = "patchfoundry", version, about = "Build patch-correspondence datasets from webcam archives")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output root.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Input root holding `cameras/`.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Rerun stages even when up to date or when their config changed.
    #[arg(long, global = true)]
    force: bool,
    /// Extra config overrides, `key=value`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Drop cameras whose sampled frames fail the quality filters.
    Gate,
    /// Reduce each kept camera to k-means representatives.
    Cluster,
    /// Group representatives into fixed-viewpoint views.
    Views,
    /// Refine and verify member homographies against each reference.
    Register,
    /// Draw patch specs in the accepted views.
    Sample,
    /// Cut patch sets and write the AMPS train/test files.
    Export,
    /// Matching mAP, verification PR and the batch-composition harness.
    Eval,
    /// Matching mAP as the B side is displaced by growing shifts.
    Dereg,
    /// Run every stage from gate through register.
    Prepare,
    /// Run every stage from sample through dereg.
    Finish,
    /// Serve the review API.
    ReviewServe {
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Write advisory flags for the registered views.
    Autoflag,
    /// Record a review decision without the UI.
    Decide {
        /// Decide every registered view.
        #[arg(long, conflicts_with = "view")]
        all: bool,
        #[arg(long)]
        view: Option<String>,
        /// accept or reject.
        #[arg(long)]
        verdict: String,
        #[arg(long, default_value = "")]
        reason: String,
        #[arg(long, default_value = "cli")]
        reviewer: String,
    },
    /// Write synthetic webcam cameras to the input root.
    Synth {
        #[arg(long, default_value_t = 3)]
        cameras: usize,
        #[arg(long, default_value_t = 60)]
        frames: usize,
        /// Comma-separated kinds: static, switch, shared-scene, dynamic,
        /// hidden-dynamic, black.
        #[arg(long)]
        kinds: Option<String>,
    },
    /// Check every recorded artifact against its manifest hash.
    Verify,
    /// Print the effective configuration.
    Config,
}

fn load_config(g: &Global) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(j) = g.jobs {
        cfg.jobs = j;
    }
    if let Some(o) = &g.out {
        cfg.output_root = o.clone();
    }
    if let Some(i) = &g.input {
        cfg.input_root = i.clone();
    }
    for kv in &g.overrides {
        let (k, v) = kv.split_once('=').with_context(|| format!("override {kv:?} is not key=value"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cfg: &PipelineConfig, stages: &[Stage], force: bool) -> Result<()> {
    for &s in stages {
        let r = run_stage(cfg, s, force)?;
        let state = match r.status {
            StageStatus::Ran => "ran",
            StageStatus::UpToDate => "up to date",
        };
        println!("{s}: {state} ({} outputs)", r.record.outputs.len());
    }
    Ok(())
}

fn decide(cfg: &PipelineConfig, all: bool, view: Option<String>, verdict: &str, reason: &str, reviewer: &str) -> Result<()> {
    let verdict = Verdict::parse(verdict).with_context(|| format!("verdict must be accept or reject, got {verdict:?}"))?;
    let out = cfg.output_root.as_path();
    let mut manifest = Manifest::open(out)?;
    let views: Vec<ViewRecord> = read_jsonl(&out.join(artifact(Stage::Register, "views.jsonl")))?;
    let registered: Vec<&ViewRecord> = views
        .iter()
        .filter(|v| v.status == ViewStatus::Registered.as_str())
        .collect();
    let targets: Vec<&str> = match (all, view) {
        (true, _) => registered.iter().map(|v| v.view_id.as_str()).collect(),
        (false, Some(id)) => {
            let v = views.iter().find(|v| v.view_id == id).with_context(|| format!("unknown view {id}"))?;
            if v.status != ViewStatus::Registered.as_str() {
                bail!("view {id} is {}, only registered views can be decided", v.status);
            }
            vec![v.view_id.as_str()]
        }
        (false, None) => bail!("pass --all or --view"),
    };
    for id in &targets {
        manifest.append(Record::Decision(PruneDecision::new(id, verdict, reason, reviewer)))?;
        println!("{id}: {}", verdict.as_str());
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = load_config(&cli.global)?;
    let force = cli.global.force;
    match cli.command {
        Command::Gate => run(&cfg, &[Stage::Gate], force),
        Command::Cluster => run(&cfg, &[Stage::Cluster], force),
        Command::Views => run(&cfg, &[Stage::Views], force),
        Command::Register => run(&cfg, &[Stage::Register], force),
        Command::Sample => run(&cfg, &[Stage::Sample], force),
        Command::Export => run(&cfg, &[Stage::Export], force),
        Command::Eval => run(&cfg, &[Stage::Eval], force),
        Command::Dereg => run(&cfg, &[Stage::Dereg], force),
        Command::Prepare => run(&cfg, &Stage::ALL[..4], force),
        Command::Finish => run(&cfg, &Stage::ALL[4..], force),
        Command::ReviewServe { host, port } => {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(patchfoundry::server::serve(&cfg, SocketAddr::new(host, port)))
        }
        Command::Autoflag => {
            for f in autoflag(&cfg, &FlagParams::default())? {
                println!("{}\t{}", f.view_id, if f.flags.is_empty() { "-".to_string() } else { f.flags.join(",") });
            }
            Ok(())
        }
        Command::Decide { all, view, verdict, reason, reviewer } => {
            decide(&cfg, all, view, &verdict, &reason, &reviewer)
        }
        Command::Synth { cameras, frames, kinds } => {
            let mut opts = SynthOptions::new(cameras, frames, cfg.seed);
            if let Some(k) = kinds {
                opts.kinds = k
                    .split(',')
                    .map(|s| CameraKind::parse(s.trim(), frames * 2 / 15))
                    .collect::<Result<_>>()?;
            }
            generate(&cfg.input_root, &opts)?;
            println!("wrote {} cameras of {frames} frames to {}", opts.kinds.len(), cfg.input_root.display());
            Ok(())
        }
        Command::Verify => {
            let bad = verify_outputs(&cfg.output_root, &Manifest::open(&cfg.output_root)?)?;
            if bad.is_empty() {
                println!("all recorded artifacts match");
                Ok(())
            } else {
                bad.iter().for_each(|b| println!("mismatch: {b}"));
                bail!("{} artifacts do not match the manifest", bad.len())
            }
        }
        Command::Config => {
            print!("{}", cfg.to_text());
            Ok(())
        }
    }
}
