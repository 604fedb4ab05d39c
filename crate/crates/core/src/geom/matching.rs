use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use super::DescriptorSet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TentativeMatch {
    /// Row in the first descriptor set.
    pub a: usize,
    /// Row in the second descriptor set.
    pub b: usize,
    pub distance: f64,
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = f64::from(*x) - f64::from(*y);
            d * d
        })
        .sum()
}

/// Nearest-neighbour matching with Lowe's ratio test, made one-to-one by
/// keeping the closer pair whenever two rows of `a` claim the same row of `b`.
pub fn match_ratio(
    a: &DescriptorSet,
    b: &DescriptorSet,
    ratio: f64,
) -> Result<Vec<TentativeMatch>> {
    if a.is_empty() {
        return Err(Error::NotEnoughData {
            needed: 1,
            available: 0,
        });
    }
    if b.len() < 2 {
        return Err(Error::NotEnoughData {
            needed: 2,
            available: b.len(),
        });
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let mut claimed: Vec<Option<TentativeMatch>> = vec![None; b.len()];
    for (i, da) in a.iter().enumerate() {
        let mut best = (usize::MAX, f64::INFINITY);
        let mut second = f64::INFINITY;
        for (j, db) in b.iter().enumerate() {
            let d = sq_dist(da, db);
            if d < best.1 {
                second = best.1;
                best = (j, d);
            } else if d < second {
                second = d;
            }
        }
        let (d1, d2) = (best.1.sqrt(), second.sqrt());
        if !(d2 > 0.0) || !(d1 / d2 < ratio) {
            continue;
        }
        let m = TentativeMatch {
            a: i,
            b: best.0,
            distance: d1,
        };
        match claimed[best.0] {
            Some(prev) if prev.distance <= m.distance => {}
            _ => claimed[best.0] = Some(m),
        }
    }
    let mut out: Vec<TentativeMatch> = claimed.into_iter().flatten().collect();
    out.sort_by_key(|m| m.a);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::normalize_descriptor;
    use rand::Rng;

    fn random_set(seed: u64, n: usize, dim: usize) -> DescriptorSet {
        let mut rng = crate::seed::rng_from_seed(seed);
        let mut data = Vec::new();
        for _ in 0..n {
            let mut v: Vec<f32> = (0..dim).map(|_| rng.random::<f32>() - 0.5).collect();
            normalize_descriptor(&mut v);
            data.extend(v);
        }
        DescriptorSet::new(dim, data)
    }

    #[test]
    fn identical_sets_match_identically() {
        let a = random_set(1, 50, 32);
        let m = match_ratio(&a, &a, 0.8).unwrap();
        assert_eq!(m.len(), 50);
        for (i, mm) in m.iter().enumerate() {
            assert_eq!((mm.a, mm.b), (i, i));
        }
    }

    #[test]
    fn equidistant_candidate_is_rejected() {
        let a = DescriptorSet::new(2, vec![1.0, 0.0]);
        let b = DescriptorSet::new(2, vec![0.0, 1.0, 0.0, -1.0]);
        assert!(match_ratio(&a, &b, 0.8).unwrap().is_empty());
    }

    #[test]
    fn too_few_targets() {
        let a = DescriptorSet::new(2, vec![1.0, 0.0]);
        assert!(match_ratio(&a, &a, 0.8).is_err());
    }

    #[test]
    fn one_to_one_keeps_closer_pair() {
        let a = DescriptorSet::new(2, vec![1.0, 0.0, 0.99, 0.141]);
        let b = DescriptorSet::new(2, vec![1.0, 0.0, -1.0, 0.0]);
        let m = match_ratio(&a, &b, 0.8).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].a, m[0].b), (0, 0));
    }

    #[test]
    fn planted_matches_survive_noise() {
        let mut rng = crate::seed::rng_from_seed(5);
        let dim = 64;
        let base = random_set(7, 200, dim);
        let mut noisy = Vec::new();
        for row in base.iter() {
            let mut v: Vec<f32> = row
                .iter()
                .map(|&x| {
                    // Box-Muller
                    let u1: f64 = rng.random::<f64>().max(1e-12);
                    let u2: f64 = rng.random();
                    let g = (-2.0 * u1.ln()).sqrt() * (2.0 * core::f64::consts::PI * u2).cos();
                    x + (0.05 * g) as f32
                })
                .collect();
            normalize_descriptor(&mut v);
            noisy.extend(v);
        }
        let noisy = DescriptorSet::new(dim, noisy);
        let m = match_ratio(&noisy, &base, 0.8).unwrap();
        let recovered = m.iter().filter(|mm| mm.a == mm.b).count();
        assert!(recovered >= 180, "{recovered}");
    }
}
