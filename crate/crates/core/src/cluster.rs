//! Appearance clustering: Lloyd's K-means over global image embeddings and
//! selection of one representative image per cluster.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use rand::Rng;

use crate::seed::rng_from_seed;
use crate::{Error, Result};

/// N embeddings of a common dimension D, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    ids: Vec<String>,
    dim: usize,
    vectors: Vec<f64>,
}

impl EmbeddingSet {
    pub fn new(ids: Vec<String>, dim: usize, vectors: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "embedding dimension must be positive".into(),
            ));
        }
        if vectors.len() != ids.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: ids.len() * dim,
                got: vectors.len(),
            });
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding"));
        }
        Ok(Self { ids, dim, vectors })
    }

    pub fn from_rows(ids: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidArgument("ragged embedding rows".into()));
        }
        Self::new(ids, dim, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.vectors
    }

    /// Scales every row to unit L2 norm (zero rows are left untouched).
    pub fn l2_normalized(&self) -> Self {
        let mut out = self.clone();
        for row in out.vectors.chunks_exact_mut(self.dim) {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub max_iters: usize,
    /// Stop once the relative cost improvement falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            k: 120,
            max_iters: 100,
            tol: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    /// Cluster index per embedding row.
    pub assignments: Vec<usize>,
    /// K x D, row-major.
    pub centroids: Vec<f64>,
    pub dim: usize,
    pub cost: f64,
    /// Cost after seeding, then after every Lloyd iteration.
    pub cost_history: Vec<f64>,
}

impl Clustering {
    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    /// Σ ‖xᵢ − c_assign(i)‖² recomputed from scratch.
    pub fn recompute_cost(&self, emb: &EmbeddingSet) -> f64 {
        (0..emb.len())
            .map(|i| sq_dist(emb.row(i), self.centroid(self.assignments[i])))
            .sum()
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(row: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(row, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp_seed(emb: &EmbeddingSet, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = emb.len();
    let dim = emb.dim();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = emb.row(first).to_vec();
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(emb.row(i), emb.row(first)))
        .collect();
    while centroids.len() < k * dim {
        let total: f64 = (0..n).filter(|&i| !chosen[i]).map(|i| d2[i]).sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for i in (0..n).filter(|&i| !chosen[i]) {
                acc += d2[i];
                if d2[i] > 0.0 && acc >= target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `acc` a hair below `target`
            pick.unwrap_or_else(|| {
                (0..n)
                    .rev()
                    .find(|&i| !chosen[i] && d2[i] > 0.0)
                    .expect("positive mass")
            })
        } else {
            // only duplicates of existing centers remain
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        centroids.extend_from_slice(emb.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(emb.row(i), emb.row(pick)));
        }
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Empty clusters are repaired by moving in the point farthest from its
/// current centroid, which keeps the cost non-increasing.
pub fn kmeans(emb: &EmbeddingSet, params: &KMeansParams) -> Result<Clustering> {
    let n = emb.len();
    let k = params.k;
    let dim = emb.dim();
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if n < k {
        return Err(Error::NotEnoughData {
            needed: k,
            available: n,
        });
    }
    let mut rng = rng_from_seed(params.seed);
    let mut centroids = kmeans_pp_seed(emb, k, &mut rng);

    let mut assignments = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    for i in 0..n {
        let (c, d) = nearest(emb.row(i), &centroids, dim);
        assignments[i] = c;
        dists[i] = d;
    }
    let mut cost: f64 = dists.iter().sum();
    let mut history = vec![cost];

    for _ in 0..params.max_iters {
        if cost == 0.0 {
            break;
        }
        // update
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignments[i];
            counts[c] += 1;
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(emb.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids[c * dim..(c + 1) * dim]
                    .iter_mut()
                    .zip(&sums[c * dim..(c + 1) * dim])
                {
                    *dst = s * inv;
                }
            }
        }
        // assign
        for i in 0..n {
            let (c, d) = nearest(emb.row(i), &centroids, dim);
            assignments[i] = c;
            dists[i] = d;
        }
        repair_empty_clusters(emb, &mut centroids, &mut assignments, &mut dists, k);

        let new_cost: f64 = dists.iter().sum();
        history.push(new_cost);
        let improvement = if cost > 0.0 {
            (cost - new_cost) / cost
        } else {
            0.0
        };
        cost = new_cost;
        if improvement < params.tol {
            break;
        }
    }

    Ok(Clustering {
        k,
        assignments,
        centroids,
        dim,
        cost,
        cost_history: history,
    })
}

fn repair_empty_clusters(
    emb: &EmbeddingSet,
    centroids: &mut [f64],
    assignments: &mut [usize],
    dists: &mut [f64],
    k: usize,
) {
    let dim = emb.dim();
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignments.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        // farthest point among clusters that can spare one
        let victim = (0..assignments.len())
            .filter(|&i| counts[assignments[i]] > 1)
            .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
        let Some(victim) = victim else {
            return;
        };
        centroids[empty * dim..(empty + 1) * dim].copy_from_slice(emb.row(victim));
        assignments[victim] = empty;
        dists[victim] = 0.0;
    }
}

/// For each non-empty cluster, the id nearest its centroid (ties go to the
/// lexicographically smallest id), ordered by cluster index.
pub fn select_representatives(emb: &EmbeddingSet, clustering: &Clustering) -> Vec<String> {
    let mut best: Vec<Option<(f64, usize)>> = vec![None; clustering.k];
    for i in 0..emb.len() {
        let c = clustering.assignments[i];
        let d = sq_dist(emb.row(i), clustering.centroid(c));
        let better = match best[c] {
            None => true,
            Some((bd, bi)) => d < bd || (d == bd && emb.ids()[i] < emb.ids()[bi]),
        };
        if better {
            best[c] = Some((d, i));
        }
    }
    best.into_iter()
        .flatten()
        .map(|(_, i)| emb.ids()[i].clone())
        .collect()
}

/// Clusters and picks representatives; sets with at most `k` images are
/// returned whole.
pub fn reduce_to_representatives(emb: &EmbeddingSet, params: &KMeansParams) -> Result<Vec<String>> {
    if emb.len() <= params.k {
        return Ok(emb.ids().to_vec());
    }
    let clustering = kmeans(emb, params)?;
    Ok(select_representatives(emb, &clustering))
}
