//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs under `cargo test` as a harness-less test target.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::io::{Read, Write};
use std::net::TcpStream;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::{registered_views, run_all, Fixture, PREPARE};
use patchfoundry::formats::read_amps;
use patchfoundry::layout::find_camera;
use patchfoundry::manifest::{normalized_lines, verify_outputs, Manifest, Record};
use patchfoundry::server::spawn;
use patchfoundry::stage::{camera_views, dereg_sweep, DeregInput};
use patchfoundry::synth::{generate, CameraKind, SynthOptions, Truth};
use patchfoundry::{PipelineConfig, Stage, StageStatus};
use patchfoundry_core::cluster::{kmeans, EmbeddingSet, KMeansParams};
use patchfoundry_core::eval::{match_task_ap, DescriptorMatrix};
use patchfoundry_core::geom::{
    cluster_views, estimate_homography_ransac, extract_features, verify_view_registration,
    Correspondence, ImageFeatures, PairGeometry, RansacParams, View, ViewClusterRule, ViewMember,
};
use patchfoundry_core::sampler::{
    build_probability_mask, hard_in_batch_triplet_loss, sample_patch_specs, MaskMode, ResponseMask,
    ValidRegion,
};
use patchfoundry_core::seed::rng_from_seed;
use patchfoundry_core::{GrayImage, Homography, ValidMask};
use rand::Rng;

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random::<f64>().max(1e-300);
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

fn unit_rows(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let row: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
        let s = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        out.extend(row.iter().map(|v| v / s));
    }
    out
}

fn ransac_recovery() -> Outcome {
    let truth = Homography::from_coefficients([1.03, 0.02, 12.0, -0.015, 0.97, -8.0, 2e-5, -1e-5, 1.0]).unwrap();
    let (w, h) = (640.0, 480.0);
    let start = Instant::now();
    let mut good = 0;
    for seed in 0..100u64 {
        let mut rng = rng_from_seed(9000 + seed);
        let corr: Vec<Correspondence> = (0..100)
            .map(|i| {
                let src = [rng.random_range(0.0..w), rng.random_range(0.0..h)];
                let dst = if i % 10 < 7 {
                    let (x, y) = truth.apply(src[0], src[1]);
                    [x + 0.3 * gaussian(&mut rng), y + 0.3 * gaussian(&mut rng)]
                } else {
                    [rng.random_range(0.0..w), rng.random_range(0.0..h)]
                };
                Correspondence::new(src, dst)
            })
            .collect();
        let params = RansacParams {
            inlier_px: 2.0,
            seed,
            ..RansacParams::default()
        };
        if let Ok(est) = estimate_homography_ransac(&corr, &params) {
            if est.homography.max_corner_distance(&truth, 640, 480) < 0.5 {
                good += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check!(good >= 95, "{good}/100 within 0.5 px");
    check!(secs < 30.0, "took {secs:.1} s");
    Ok(format!("{good}/100 within 0.5 px in {secs:.2} s"))
}

fn load_frames(cfg: &PipelineConfig, camera: &str, ids: &[String]) -> Vec<GrayImage> {
    let cam = find_camera(&cfg.input_root, camera).unwrap();
    ids.iter().map(|id| cam.load_image(id).unwrap()).collect()
}

fn view_clustering() -> Outcome {
    let fx = Fixture::new(vec![CameraKind::Switch { second_view_frames: 25 }], 50, 21);
    let truth = Truth::load(&fx.cfg.input_root).unwrap();
    let cam = truth.camera("cam00").unwrap();
    let ids: Vec<String> = (0..50).map(patchfoundry::synth::frame_id).collect();
    let frames = load_frames(&fx.cfg, "cam00", &ids);
    let mcfg = fx.cfg.matcher();
    let features: Vec<ImageFeatures> = frames.iter().map(|f| extract_features(f, &mcfg).unwrap()).collect();
    let views = camera_views(&fx.cfg, "cam00", &ids, &features);
    let got: BTreeSet<BTreeSet<String>> = views
        .iter()
        .map(|v| v.members.iter().map(|m| m.image_id.clone()).collect())
        .collect();
    let want: BTreeSet<BTreeSet<String>> = cam
        .viewpoint_members()
        .into_iter()
        .map(|m| m.into_iter().collect())
        .collect();
    check!(views.len() == 2, "{} views", views.len());
    check!(got == want, "membership differs from the switch schedule");
    check!(want.iter().all(|m| m.len() == 25), "fixture is not 25+25");

    // strictness at the thresholds, against the configured rule
    let rule = ViewClusterRule {
        min_inliers: 50,
        max_sad: 50.0,
    };
    let names: Vec<String> = ["r", "a", "b", "c"].map(String::from).to_vec();
    let geoms = [
        PairGeometry { homography: Homography::identity(), inliers: 50 },
        PairGeometry { homography: Homography::translation(50.0, 0.0), inliers: 400 },
        PairGeometry { homography: Homography::translation(49.5, 0.0), inliers: 51 },
    ];
    let v = cluster_views(&names, &rule, "t", |r, cands| {
        if r == 0 {
            cands.iter().map(|&c| Some(geoms[c - 1])).collect()
        } else {
            vec![None; cands.len()]
        }
    });
    let first: Vec<&str> = v[0].members.iter().map(|m| m.image_id.as_str()).collect();
    check!(first == ["r", "c"], "boundary membership {first:?}");
    Ok("2 views, 25+25 exact; inliers=50 and SAD=50 both excluded".into())
}

fn registration_pruning() -> Outcome {
    let fx = Fixture::new(vec![CameraKind::Static, CameraKind::Static], 50, 31);
    let truth = Truth::load(&fx.cfg.input_root).unwrap();
    let cam = truth.camera("cam00").unwrap();
    let ids: Vec<String> = (0..50).map(patchfoundry::synth::frame_id).collect();
    let frames = load_frames(&fx.cfg, "cam00", &ids);
    let stranger = load_frames(&fx.cfg, "cam01", &ids[..1]).remove(0);
    let mut view = View::singleton("cam00.v00".into(), ids[0].clone());
    let mut true_h = vec![Homography::identity()];
    for id in &ids[1..] {
        let t = cam.member_to_reference(id, &ids[0]).unwrap();
        true_h.push(t);
        // start a little off so refinement has work to do
        let init = Homography::translation(0.6, -0.4).compose(&t).unwrap();
        view.members.push(ViewMember { image_id: id.clone(), homography: init });
    }
    let params = fx.cfg.refine();

    let refs: Vec<&GrayImage> = frames.iter().collect();
    let clean = verify_view_registration(&view, &refs, &params).unwrap();
    check!(clean.kept(), "clean view rejected: {:?}", clean.view.reasons);
    let residual = clean
        .view
        .members
        .iter()
        .zip(&true_h)
        .map(|(m, t)| m.homography.max_corner_distance(t, 720, 720))
        .fold(0.0, f64::max);
    check!(residual < 0.5, "max corner residual {residual:.3} px");

    let mut planted = refs.clone();
    planted[27] = &stranger;
    let dirty = verify_view_registration(&view, &planted, &params).unwrap();
    check!(!dirty.kept(), "view with a planted frame was kept");
    Ok(format!("planted view removed; clean view kept, residual {residual:.3} px"))
}

fn kmeans_checks() -> Outcome {
    for seed in 0..50u64 {
        let mut rng = rng_from_seed(300 + seed);
        let centres: Vec<Vec<f64>> = (0..8).map(|_| (0..6).map(|_| 4.0 * gaussian(&mut rng)).collect()).collect();
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|i| centres[i % 8].iter().map(|c| c + gaussian(&mut rng)).collect())
            .collect();
        let emb = EmbeddingSet::from_rows((0..200).map(|i| i.to_string()).collect(), &rows).unwrap();
        let c = kmeans(&emb, &KMeansParams { k: 7, max_iters: 100, tol: 0.0, seed }).unwrap();
        check!(
            c.cost_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)),
            "seed {seed}: cost increased"
        );
    }
    let mut rng = rng_from_seed(5);
    let rows: Vec<Vec<f64>> = (0..30).map(|_| (0..4).map(|_| gaussian(&mut rng)).collect()).collect();
    let emb = EmbeddingSet::from_rows((0..30).map(|i| i.to_string()).collect(), &rows).unwrap();
    let c = kmeans(&emb, &KMeansParams { k: 30, seed: 2, ..KMeansParams::default() }).unwrap();
    check!(c.cost == 0.0, "K=N cost {}", c.cost);

    let sites = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]];
    let mut rows = Vec::new();
    let mut gen = Vec::new();
    let mut rng = rng_from_seed(6);
    for (s, site) in sites.iter().enumerate() {
        for _ in 0..10 {
            rows.push(vec![site[0] + 0.5 * gaussian(&mut rng), site[1] + 0.5 * gaussian(&mut rng)]);
            gen.push(s);
        }
    }
    let emb = EmbeddingSet::from_rows((0..40).map(|i| i.to_string()).collect(), &rows).unwrap();
    for seed in 0..10 {
        let c = kmeans(&emb, &KMeansParams { k: 4, seed, ..KMeansParams::default() }).unwrap();
        let same = (0..40).all(|i| (0..40).all(|j| (c.assignments[i] == c.assignments[j]) == (gen[i] == gen[j])));
        check!(same, "seed {seed}: partition not recovered");
    }
    Ok("monotone over 50 runs; K=N cost 0; 4-site partition recovered".into())
}

fn mask_and_sampling() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let mut rng = rng_from_seed(seed);
        let img = GrayImage::from_fn(64, 48, |x, y| {
            (128.0 + 60.0 * ((x as f64 * 0.3 + seed as f64).sin() * (y as f64 * 0.2).cos()) + 5.0 * rng.random::<f64>()) as f32
        });
        let valid = ValidMask::all_valid(64, 48);
        for mode in MaskMode::ALL {
            let imgs = [&img, &img];
            let masks = [&valid, &valid];
            let m = build_probability_mask(&imgs, &masks, mode, 2.0).unwrap().mask;
            worst = worst.max((m.total() - 1.0).abs());
        }
    }
    let weights: Vec<f64> = (0..100).map(|i| 1.0 + ((i * 37) % 13) as f64).collect();
    let mask = ResponseMask::from_weights(10, 10, weights).unwrap();
    worst = worst.max((mask.total() - 1.0).abs());
    check!(worst <= 1e-6, "mask sum off by {worst:e}");
    let sampler = mask.sampler();
    let mut rng = rng_from_seed(99);
    let n = 100_000;
    let mut counts = vec![0usize; 100];
    for _ in 0..n {
        let (x, y) = sampler.draw(&mut rng);
        counts[y * 10 + x] += 1;
    }
    let l1: f64 = counts.iter().zip(mask.weights()).map(|(&c, &p)| (c as f64 / n as f64 - p).abs()).sum();
    check!(l1 < 0.05, "L1 {l1:.4}");
    Ok(format!("max |sum-1| {worst:.1e}; L1 {l1:.4}"))
}

fn brute_force_loss(a: &[f64], p: &[f64], dim: usize, margin: f64) -> f64 {
    let n = a.len() / dim;
    let d = |x: usize, y: usize| {
        a[x * dim..(x + 1) * dim]
            .iter()
            .zip(&p[y * dim..(y + 1) * dim])
            .map(|(u, v)| (u - v).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    (0..n)
        .map(|i| {
            let neg = (0..n).filter(|&j| j != i).map(|j| d(i, j).min(d(j, i))).fold(f64::INFINITY, f64::min);
            (margin + d(i, i) - neg).max(0.0)
        })
        .sum::<f64>()
        / n as f64
}

fn loss_oracle() -> Outcome {
    let mut rng = rng_from_seed(17);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..=48);
        let dim = rng.random_range(2..=12);
        let a = unit_rows(&mut rng, n, dim);
        let p = unit_rows(&mut rng, n, dim);
        let got = hard_in_batch_triplet_loss(&a, &p, dim, 1.0).unwrap().loss;
        worst = worst.max((got - brute_force_loss(&a, &p, dim, 1.0)).abs());
    }
    check!(worst < 1e-6, "max deviation {worst:e}");
    let loss = |a: &[f64], p: &[f64]| hard_in_batch_triplet_loss(a, p, 2, 1.0).unwrap().loss;
    let e1 = loss(&[1.0, 0.0, 0.0, 1.0], &[1.0, 0.0, 0.0, 1.0]);
    let e2 = loss(&[1.0, 0.0, 1.0, 0.0], &[1.0, 0.0, 1.0, 0.0]);
    let (s, c) = 30f64.to_radians().sin_cos();
    let e3 = loss(&[1.0, 0.0, c, s], &[1.0, 0.0, c, s]);
    check!(e1.abs() < 1e-4, "orthogonal example {e1}");
    check!((e2 - 1.0).abs() < 1e-4, "identical example {e2}");
    check!((e3 - 0.4824).abs() < 1e-4, "30 degree example {e3}");
    Ok(format!("max deviation {worst:.1e}; examples {e1:.4}, {e2:.4}, {e3:.4}"))
}

/// AP by definition: greedy global-minimum ranking, precision summed at
/// every recall step.
fn definition_ap(n: usize, dist: &[f64], gt: &[usize]) -> f64 {
    let mut pairs: Vec<(f64, usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (dist[i * n + j], i, j))).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let (mut rows, mut cols) = (vec![false; n], vec![false; n]);
    let mut ranked = Vec::new();
    for (_, i, j) in pairs {
        if !rows[i] && !cols[j] {
            rows[i] = true;
            cols[j] = true;
            ranked.push(gt[i] == j);
        }
    }
    let mut hits = 0;
    let mut ap = 0.0;
    for (k, ok) in ranked.iter().enumerate() {
        if *ok {
            hits += 1;
            ap += hits as f64 / (k + 1) as f64;
        }
    }
    ap / n as f64
}

fn ap_oracle() -> Outcome {
    for seed in 0..1000u64 {
        let mut rng = rng_from_seed(40_000 + seed);
        let n = rng.random_range(2..=6);
        let dim = 3;
        let a = unit_rows(&mut rng, n, dim);
        let b = unit_rows(&mut rng, n, dim);
        let mut gt: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            gt.swap(i, rng.random_range(0..=i));
        }
        let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let da = DescriptorMatrix::new(ids.clone(), dim, a).unwrap();
        let db = DescriptorMatrix::new(ids, dim, b).unwrap();
        let mut dist = Vec::new();
        for i in 0..n {
            for j in 0..n {
                dist.push(da.row(i).iter().zip(db.row(j)).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt());
            }
        }
        let got = match_task_ap(&da, &db, &gt).unwrap();
        let want = definition_ap(n, &dist, &gt);
        check!((got - want).abs() < 1e-12, "seed {seed}: {got} vs {want}");
    }
    let n = 5;
    let mut eye = vec![0.0; n * n];
    (0..n).for_each(|i| eye[i * n + i] = 1.0);
    let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    let m = DescriptorMatrix::new(ids, n, eye).unwrap();
    let perfect = match_task_ap(&m, &m, &(0..n).collect::<Vec<_>>()).unwrap();
    check!(perfect == 1.0, "perfect descriptor AP {perfect}");
    Ok("1000 seeds agree; perfect descriptor AP = 1".into())
}

fn dereg_shape() -> Outcome {
    let mut rows = Vec::new();
    for run in 0..10u64 {
        let seed = 700 + run;
        let dir = tempfile::tempdir().unwrap();
        let mut opts = SynthOptions::new(1, 10, seed);
        opts.kinds = vec![CameraKind::Static];
        let truth = generate(dir.path(), &opts).unwrap();
        let cam_truth = &truth.cameras[0];
        let ids: Vec<String> = (0..10).map(patchfoundry::synth::frame_id).collect();
        let cam = find_camera(dir.path(), "cam00").unwrap();
        let images: Vec<GrayImage> = ids.iter().map(|id| cam.load_image(id).unwrap()).collect();
        let mut view = View::singleton("cam00.v00".into(), ids[0].clone());
        for id in &ids[1..] {
            let h = cam_truth.member_to_reference(id, &ids[0]).unwrap();
            view.members.push(ViewMember { image_id: id.clone(), homography: h });
        }
        let valid = ValidMask::all_valid(720, 720);
        let mask = build_probability_mask(&[&images[0]], &[&valid], MaskMode::ReferenceOnly, 2.0).unwrap().mask;
        let region = ValidRegion::of_view(&view, 720, 720).unwrap();
        let specs = sample_patch_specs(&mask, &region, 40, &PipelineConfig::default().spec_ranges(), seed).unwrap();
        let specs: Vec<(u64, _)> = specs.into_iter().enumerate().map(|(i, s)| (i as u64, s)).collect();
        let input = DeregInput { view: &view, images: &images, specs: &specs };
        let sweep = dereg_sweep(&[input], &[0.0, 16.0], seed).unwrap();
        check!(sweep[1].map < sweep[0].map, "seed {seed}: mAP(16) {} >= mAP(0) {}", sweep[1].map, sweep[0].map);
        rows.push(format!("{:.3}->{:.3}", sweep[0].map, sweep[1].map));
    }
    Ok(format!("mAP(0)->mAP(16): {}", rows.join(" ")))
}

fn http(addr: std::net::SocketAddr, path: &str, body: &str) -> u16 {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(
        s,
        "POST {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = String::new();
    s.read_to_string(&mut raw).unwrap();
    raw.split_whitespace().nth(1).unwrap().parse().unwrap()
}

/// Every stage's recorded inputs are its predecessors' recorded outputs and
/// every recorded output matches the file on disk.
fn manifest_consistent(out: &std::path::Path) -> Result<usize, String> {
    let m = Manifest::open(out).map_err(|e| e.to_string())?;
    let bad = verify_outputs(out, &m).map_err(|e| e.to_string())?;
    check!(bad.is_empty(), "outputs differ from manifest: {bad:?}");
    let mut n = 0;
    for s in Stage::ALL {
        let Some(rec) = m.latest_stage(s.name()) else { continue };
        n += 1;
        for up in s.upstream() {
            let prev = m.latest_stage(up.name()).ok_or(format!("{s} ran without {up}"))?;
            for f in &prev.outputs {
                check!(rec.inputs.contains(f), "{s} does not list {} of {up}", f.path);
            }
        }
        check!(rec.config_hash.len() == 64, "{s} config hash malformed");
    }
    let lines = fs::read_to_string(out.join("manifest.jsonl")).map_err(|e| e.to_string())?;
    for l in lines.lines() {
        serde_json::from_str::<Record>(l).map_err(|e| format!("bad manifest line: {e}"))?;
    }
    Ok(n)
}

const TO_EVAL: [Stage; 3] = [Stage::Sample, Stage::Export, Stage::Eval];

/// Full chain with review decisions posted over HTTP.
fn run_chain(cfg: &PipelineConfig) -> Result<(), String> {
    run_all(cfg, &PREPARE);
    let server = spawn(cfg, "127.0.0.1:0".parse().unwrap()).map_err(|e| e.to_string())?;
    for v in registered_views(&cfg.output_root) {
        let status = http(
            server.addr(),
            &format!("/api/views/{}/decision", v.view_id),
            r#"{"verdict":"accept","reason":"scripted","reviewer":"acceptance"}"#,
        );
        check!(status == 200, "decision on {} returned {status}", v.view_id);
    }
    server.stop().map_err(|e| e.to_string())?;
    run_all(cfg, &TO_EVAL);
    Ok(())
}

struct Shared {
    fixture: Option<Fixture>,
}

fn end_to_end(shared: &mut Shared) -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    generate(&input, &SynthOptions::new(3, 60, 2024)).unwrap();
    let cfg = PipelineConfig {
        input_root: input,
        output_root: dir.path().join("out"),
        seed: 2024,
        jobs: 1,
        n_patch_sets: 150,
        ..PipelineConfig::default()
    };
    run_chain(&cfg)?;
    let secs = start.elapsed().as_secs_f64();

    let mut sets = 0;
    for f in ["export/train.amps", "export/test.amps"] {
        let (h, s) = read_amps(&mut fs::File::open(cfg.output_root.join(f)).unwrap()).map_err(|e| e.to_string())?;
        check!(h.patch_w == 96 && h.patch_h == 96, "{f}: patches {}x{}", h.patch_w, h.patch_h);
        check!(s.iter().all(|p| p.len() == 50), "{f}: a set is not 50 patches");
        sets += s.len();
    }
    check!(sets >= 100, "{sets} patch sets");
    let n_stages = manifest_consistent(&cfg.output_root)?;
    check!(n_stages == 7, "{n_stages} stages recorded");

    let before = fs::read(cfg.output_root.join("manifest.jsonl")).unwrap();
    let mut all = PREPARE.to_vec();
    all.extend(TO_EVAL);
    let statuses = run_all(&cfg, &all);
    check!(statuses.iter().all(|s| *s == StageStatus::UpToDate), "rerun was not a no-op: {statuses:?}");
    check!(before == fs::read(cfg.output_root.join("manifest.jsonl")).unwrap(), "rerun changed the manifest");
    check!(secs < 120.0, "chain took {secs:.1} s");

    shared.fixture = Some(Fixture { dir, cfg });
    Ok(format!("{secs:.1} s, {sets} sets of 50x96x96, manifest consistent, rerun no-op"))
}

fn batch_composition(shared: &Shared) -> Outcome {
    let fx = shared.fixture.as_ref().ok_or("needs the end-to-end run")?;
    let text = fs::read_to_string(fx.cfg.output_root.join("eval/batch_composition.txt")).map_err(|e| e.to_string())?;
    let rows: Vec<&str> = text.lines().skip(1).filter(|l| !l.starts_with("monotone")).collect();
    check!(rows.len() == 3, "{} rows", rows.len());
    check!(text.contains("monotone\tyes"), "not monotone:\n{text}");
    let fractions: Vec<String> = rows.iter().map(|r| r.split('\t').nth(4).unwrap_or("?").to_string()).collect();
    Ok(format!("same-view hardest-negative fraction {}", fractions.join(" >= ")))
}

fn parallelism(shared: &Shared) -> Outcome {
    let fx = shared.fixture.as_ref().ok_or("needs the end-to-end run")?;
    let mut cfg8 = fx.with_out("out8");
    cfg8.jobs = 8;
    run_chain(&cfg8)?;
    for f in ["export/train.amps", "export/test.amps", "export/index.tsv", "eval/report.txt"] {
        let a = fs::read(fx.cfg.output_root.join(f)).unwrap();
        let b = fs::read(cfg8.output_root.join(f)).unwrap();
        check!(a == b, "{f} differs between jobs=1 and jobs=8");
    }
    let a = normalized_lines(&fx.cfg.output_root.join("manifest.jsonl")).map_err(|e| e.to_string())?;
    let b = normalized_lines(&cfg8.output_root.join("manifest.jsonl")).map_err(|e| e.to_string())?;
    check!(a == b, "normalized manifests differ");
    Ok(format!("datasets byte-identical; {} manifest lines identical", a.len()))
}

fn main() {
    let mut shared = Shared { fixture: None };
    let mut failures = 0;
    let mut report = |name: &str, result: std::thread::Result<Outcome>| {
        let line = match result {
            Ok(Ok(detail)) => format!("PASS  {name}: {detail}"),
            Ok(Err(why)) => {
                failures += 1;
                format!("FAIL  {name}: {why}")
            }
            Err(p) => {
                failures += 1;
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                format!("FAIL  {name}: panicked: {msg}")
            }
        };
        println!("{line}");
    };
    report("ransac homography recovery", catch_unwind(ransac_recovery));
    report("view clustering fidelity", catch_unwind(view_clustering));
    report("registration pruning", catch_unwind(registration_pruning));
    report("k-means", catch_unwind(kmeans_checks));
    report("mask and sampling", catch_unwind(mask_and_sampling));
    report("loss oracle", catch_unwind(loss_oracle));
    report("ap oracle", catch_unwind(ap_oracle));
    report("deregistration shape", catch_unwind(dereg_shape));
    report("end-to-end", catch_unwind(AssertUnwindSafe(|| end_to_end(&mut shared))));
    report("batch-composition harness", catch_unwind(AssertUnwindSafe(|| batch_composition(&shared))));
    report("parallelism invariance", catch_unwind(AssertUnwindSafe(|| parallelism(&shared))));
    println!("{} of 11 criteria failed", failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
