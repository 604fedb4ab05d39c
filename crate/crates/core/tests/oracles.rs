//! Independent oracles for the numerical kernels.

mod common;

use std::time::Instant;

use common::{gaussian, smooth_texture, unit_rows};
use patchfoundry_core::cluster::{kmeans, EmbeddingSet, KMeansParams};
use patchfoundry_core::eval::{greedy_bijection, match_task_ap, DescriptorMatrix};
use patchfoundry_core::geom::{estimate_homography_ransac, refine_registration, Correspondence, RansacParams, RefineParams};
use patchfoundry_core::image::warp_image;
use patchfoundry_core::sampler::{
    hard_in_batch_triplet_loss, hessian_response, AugmentDraw, AugmentParams, ResponseMask,
};
use patchfoundry_core::seed::rng_from_seed;
use patchfoundry_core::{GrayImage, Homography};
use rand::Rng;

fn brute_force_loss(a: &[f64], p: &[f64], dim: usize, margin: f64) -> f64 {
    let n = a.len() / dim;
    let dist = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
    let row = |m: &[f64], i: usize| m[i * dim..(i + 1) * dim].to_vec();
    let mut total = 0.0;
    for i in 0..n {
        let pos = dist(&row(a, i), &row(p, i));
        let mut neg = f64::INFINITY;
        for j in 0..n {
            if j != i {
                neg = neg.min(dist(&row(a, i), &row(p, j)));
                neg = neg.min(dist(&row(a, j), &row(p, i)));
            }
        }
        total += (margin + pos - neg).max(0.0);
    }
    total / n as f64
}

#[test]
fn triplet_loss_matches_brute_force() {
    let mut rng = rng_from_seed(11);
    for trial in 0..100 {
        let n = rng.random_range(2..=64);
        let dim = rng.random_range(2..=16);
        let a = unit_rows(&mut rng, n, dim);
        // positives near anchors for some trials so the hinge is active both ways
        let p = if trial % 2 == 0 {
            unit_rows(&mut rng, n, dim)
        } else {
            let mut q: Vec<f64> = a.iter().map(|v| v + 0.3 * gaussian(&mut rng)).collect();
            for row in q.chunks_mut(dim) {
                let s = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                row.iter_mut().for_each(|v| *v /= s);
            }
            q
        };
        let got = hard_in_batch_triplet_loss(&a, &p, dim, 1.0).unwrap().loss;
        let want = brute_force_loss(&a, &p, dim, 1.0);
        assert!((got - want).abs() < 1e-6, "trial {trial}: {got} vs {want}");
    }
}

/// Greedy ranking by repeated global minimum search, AP by its definition.
fn exhaustive_ap(n: usize, dist: &[f64], gt: &[usize]) -> f64 {
    let mut used_r = vec![false; n];
    let mut used_c = vec![false; n];
    let mut ranked = Vec::new();
    for _ in 0..n {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            for j in 0..n {
                if used_r[i] || used_c[j] {
                    continue;
                }
                let d = dist[i * n + j];
                if best.is_none_or(|(bd, bi, bj)| d < bd || (d == bd && (i, j) < (bi, bj))) {
                    best = Some((d, i, j));
                }
            }
        }
        let (_, i, j) = best.unwrap();
        used_r[i] = true;
        used_c[j] = true;
        ranked.push((i, j));
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 1..=n {
        let correct = ranked[..k].iter().filter(|&&(i, j)| gt[i] == j).count();
        let precision = correct as f64 / k as f64;
        let recall = correct as f64 / n as f64;
        ap += precision * (recall - prev_recall);
        prev_recall = recall;
    }
    ap
}

#[test]
fn match_ap_matches_exhaustive_definition() {
    for seed in 0..1000u64 {
        let mut rng = rng_from_seed(seed);
        let n = rng.random_range(2..=6);
        let dim = 4;
        let a = unit_rows(&mut rng, n, dim);
        let b = unit_rows(&mut rng, n, dim);
        let mut gt: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            gt.swap(i, rng.random_range(0..=i));
        }
        let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let da = DescriptorMatrix::new(ids.clone(), dim, a.clone()).unwrap();
        let db = DescriptorMatrix::new(ids, dim, b.clone()).unwrap();
        let got = match_task_ap(&da, &db, &gt).unwrap();
        let mut dist = Vec::new();
        for i in 0..n {
            for j in 0..n {
                dist.push(da.row(i).iter().zip(db.row(j)).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt());
            }
        }
        let want = exhaustive_ap(n, &dist, &gt);
        assert!((got - want).abs() < 1e-12, "seed {seed}: {got} vs {want}");
        assert_eq!(greedy_bijection(n, &dist).unwrap().len(), n);
    }
}

#[test]
fn perfect_descriptor_ap_is_exactly_one() {
    let n = 6;
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        data[i * n + i] = 1.0;
    }
    let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    let m = DescriptorMatrix::new(ids, n, data).unwrap();
    let gt: Vec<usize> = (0..n).collect();
    assert_eq!(match_task_ap(&m, &m, &gt).unwrap(), 1.0);
}

#[test]
fn kmeans_cost_never_increases() {
    for seed in 0..50u64 {
        let mut rng = rng_from_seed(1000 + seed);
        let n = 300;
        let dim = 8;
        let centres: Vec<Vec<f64>> = (0..12).map(|_| (0..dim).map(|_| 5.0 * gaussian(&mut rng)).collect()).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| centres[i % 12].iter().map(|c| c + gaussian(&mut rng)).collect())
            .collect();
        let ids = (0..n).map(|i| format!("i{i}")).collect();
        let emb = EmbeddingSet::from_rows(ids, &rows).unwrap();
        let c = kmeans(
            &emb,
            &KMeansParams {
                k: 10,
                max_iters: 100,
                tol: 0.0,
                seed,
            },
        )
        .unwrap();
        for w in c.cost_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "seed {seed}: {:?}", c.cost_history);
        }
        assert!((c.recompute_cost(&emb) - c.cost).abs() <= 1e-9 * c.cost.max(1.0));
    }
}

#[test]
fn kmeans_with_k_equal_n_has_zero_cost() {
    let mut rng = rng_from_seed(4);
    let rows: Vec<Vec<f64>> = (0..40).map(|_| (0..5).map(|_| gaussian(&mut rng)).collect()).collect();
    let emb = EmbeddingSet::from_rows((0..40).map(|i| i.to_string()).collect(), &rows).unwrap();
    let c = kmeans(
        &emb,
        &KMeansParams {
            k: 40,
            seed: 1,
            ..KMeansParams::default()
        },
    )
    .unwrap();
    assert_eq!(c.cost, 0.0);
}

/// Two points around each of four sites; the optimum over all 4^8
/// assignments is the generating partition, and K-means must find it.
#[test]
fn kmeans_recovers_four_site_partition() {
    let sites = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]];
    let offsets = [[0.3, -0.2], [-0.25, 0.35]];
    let mut rows = Vec::new();
    for s in &sites {
        for o in &offsets {
            rows.push(vec![s[0] + o[0], s[1] + o[1]]);
        }
    }
    let n = rows.len();
    let cost_of = |assign: &[usize]| {
        let mut total = 0.0;
        for c in 0..4 {
            let members: Vec<&Vec<f64>> = (0..n).filter(|&i| assign[i] == c).map(|i| &rows[i]).collect();
            if members.is_empty() {
                continue;
            }
            let mx = members.iter().map(|r| r[0]).sum::<f64>() / members.len() as f64;
            let my = members.iter().map(|r| r[1]).sum::<f64>() / members.len() as f64;
            total += members.iter().map(|r| (r[0] - mx).powi(2) + (r[1] - my).powi(2)).sum::<f64>();
        }
        total
    };
    let mut best = (f64::INFINITY, vec![]);
    let mut assign = vec![0usize; n];
    for code in 0..4usize.pow(n as u32) {
        let mut c = code;
        for a in assign.iter_mut() {
            *a = c % 4;
            c /= 4;
        }
        let cost = cost_of(&assign);
        if cost < best.0 - 1e-12 {
            best = (cost, assign.clone());
        }
    }
    let same = |a: &[usize], b: &[usize]| (0..n).all(|i| (0..n).all(|j| (a[i] == a[j]) == (b[i] == b[j])));
    let generating: Vec<usize> = (0..n).map(|i| i / 2).collect();
    assert!(same(&best.1, &generating));

    let emb = EmbeddingSet::from_rows((0..n).map(|i| i.to_string()).collect(), &rows).unwrap();
    for seed in 0..20 {
        let c = kmeans(
            &emb,
            &KMeansParams {
                k: 4,
                seed,
                ..KMeansParams::default()
            },
        )
        .unwrap();
        assert!(same(&c.assignments, &generating), "seed {seed}");
        assert!((c.cost - best.0).abs() < 1e-9);
    }
}

#[test]
fn ransac_recovers_planted_homography() {
    let truth = Homography::from_coefficients([1.02, 0.01, 3.0, -0.01, 0.98, -2.0, 1e-5, 0.0, 1.0]).unwrap();
    let start = Instant::now();
    let mut good = 0;
    for seed in 0..100u64 {
        let mut rng = rng_from_seed(500 + seed);
        let corr: Vec<Correspondence> = (0..100)
            .map(|i| {
                let src = [rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)];
                let dst = if i < 70 {
                    let (x, y) = truth.apply(src[0], src[1]);
                    [x + 0.3 * gaussian(&mut rng), y + 0.3 * gaussian(&mut rng)]
                } else {
                    [rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)]
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
            assert!(est.inlier_count >= est.best_hypothesis_inliers);
            if est.homography.max_corner_distance(&truth, 640, 480) < 0.5 {
                good += 1;
            }
        }
    }
    assert!(good >= 95, "{good} of 100");
    assert!(start.elapsed().as_secs_f64() < 30.0);
}

#[test]
fn warp_round_trip_is_close() {
    let img = smooth_texture(160, 120, 8, 2.0);
    let h = Homography::from_coefficients([1.03, 0.02, -4.0, -0.015, 0.99, 3.0, 2e-5, -1e-5, 1.0]).unwrap();
    let (fwd, _) = warp_image(&img, &h, 160, 120).unwrap();
    let (back, valid) = warp_image(&fwd, &h.inverse().unwrap(), 160, 120).unwrap();
    let mut err = 0.0;
    let mut n = 0.0;
    // interior pixels whose round trip stayed inside both rasters
    for y in 10..110 {
        for x in 10..150 {
            if valid.is_valid(x, y) {
                let (u, v) = h.inverse().unwrap().apply(x as f64, y as f64);
                if fwd.sample_bilinear(u, v).is_some() && h.apply(u, v).0 > 0.0 {
                    err += (back.get(x, y) - img.get(x, y)).abs() as f64;
                    n += 1.0;
                }
            }
        }
    }
    assert!(n > 10_000.0);
    assert!(err / n < 2.0, "{}", err / n);
}

#[test]
fn hessian_peak_tracks_blob_centre() {
    for &(cx, cy, s) in &[(30.0, 33.0, 4.0), (20.4, 41.7, 3.0), (50.0, 20.0, 5.0)] {
        let img = GrayImage::from_fn(72, 64, |x, y| {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            (30.0 + 180.0 * (-d2 / (2.0 * s * s)).exp()) as f32
        });
        let r = hessian_response(&img, 1.0).unwrap();
        let mut best = (0, 0, f32::MIN);
        for y in 0..64 {
            for x in 0..72 {
                if r.get(x, y) > best.2 {
                    best = (x, y, r.get(x, y));
                }
            }
        }
        assert!((best.0 as f64 - cx).abs() <= 1.0 && (best.1 as f64 - cy).abs() <= 1.0);
    }
}

#[test]
fn mask_sampling_follows_mask() {
    let (w, h) = (12, 12);
    let weights: Vec<f64> = (0..w * h).map(|i| 1.0 + ((i * 37) % 11) as f64).collect();
    let mask = ResponseMask::from_weights(w, h, weights).unwrap();
    assert!((mask.total() - 1.0).abs() < 1e-6);
    let sampler = mask.sampler();
    let mut rng = rng_from_seed(77);
    let n = 100_000;
    let mut counts = vec![0usize; w * h];
    for _ in 0..n {
        let (x, y) = sampler.draw(&mut rng);
        counts[y * w + x] += 1;
    }
    let l1: f64 = counts.iter().zip(mask.weights()).map(|(&c, &p)| (c as f64 / n as f64 - p).abs()).sum();
    assert!(l1 < 0.05, "{l1}");
}

#[test]
fn augmentation_rotation_is_uniform() {
    let params = AugmentParams::default();
    let mut rots: Vec<f64> = (0..10_000u64)
        .map(|seed| AugmentDraw::sample(&mut rng_from_seed(seed), &params).rotation)
        .collect();
    rots.sort_by(f64::total_cmp);
    let (lo, hi) = params.rotation;
    let n = rots.len() as f64;
    let ks = rots
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let f = (r - lo) / (hi - lo);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.02, "{ks}");
}

fn shifted_pair(dx: f64, dy: f64, gain: f32) -> (GrayImage, GrayImage) {
    let base = smooth_texture(240, 200, 21, 2.5);
    let reference = GrayImage::from_fn(200, 160, |x, y| base.get(x + 20, y + 20));
    let moving = GrayImage::from_fn(200, 160, |x, y| {
        gain * base.sample_clamped(x as f64 + 20.0 + dx, y as f64 + 20.0 + dy) as f32 + 10.0
    });
    (reference, moving)
}

#[test]
fn registration_recovers_subpixel_shift() {
    let (dx, dy) = (3.4, -2.3);
    let (reference, moving) = shifted_pair(dx, dy, 0.8);
    let reg = refine_registration(&reference, &moving, &Homography::identity(), &RefineParams::default()).unwrap();
    for (x, y) in [(0.0, 0.0), (199.0, 0.0), (0.0, 159.0), (199.0, 159.0)] {
        let (u, v) = reg.homography.apply(x, y);
        assert!((u - x - dx).abs() < 0.2 && (v - y - dy).abs() < 0.2, "({u}, {v})");
    }
    assert!(reg.ncc > 0.95);
    for level in &reg.levels {
        assert!(level.final_mse <= level.initial_mse);
    }
}

#[test]
fn registration_refines_projective_jitter() {
    let truth = Homography::from_coefficients([1.01, 0.005, 1.5, -0.004, 0.995, -1.2, 1e-5, -1e-5, 1.0]).unwrap();
    let base = smooth_texture(240, 200, 5, 2.5);
    let reference = GrayImage::from_fn(200, 160, |x, y| base.get(x + 20, y + 20));
    let moving = GrayImage::from_fn(200, 160, |x, y| {
        let (u, v) = truth.apply(x as f64, y as f64);
        base.sample_clamped(u + 20.0, v + 20.0) as f32
    });
    let init = Homography::translation(1.0, -1.0);
    let reg = refine_registration(&reference, &moving, &init, &RefineParams::default()).unwrap();
    let err = reg.homography.max_corner_distance(&truth, 200, 160);
    assert!(err < 0.5, "{err}");
}

#[test]
fn registration_rejects_unrelated_frame() {
    let reference = smooth_texture(200, 160, 1, 2.5);
    let other = smooth_texture(200, 160, 2, 2.5);
    assert!(refine_registration(&reference, &other, &Homography::identity(), &RefineParams::default()).is_err());
}
