use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{l2_distance, match_task_ap_from_distances, verification_pr, PrCurve};
use crate::seed::derived_rng;
use crate::{Error, Result};
use rand::Rng;

/// Descriptors of one test view, set-major: row `s * n_members + m` is
/// member `m` of patch set `s`. Matching takes the A side from `a` and the B
/// side from `b`; they coincide except in the deregistration sweep.
#[derive(Debug, Clone, Copy)]
pub struct EvalView<'a> {
    pub view_id: &'a str,
    pub n_sets: usize,
    pub n_members: usize,
    pub dim: usize,
    pub a: &'a [f64],
    pub b: &'a [f64],
}

impl<'a> EvalView<'a> {
    pub fn new(
        view_id: &'a str,
        n_sets: usize,
        n_members: usize,
        dim: usize,
        a: &'a [f64],
        b: &'a [f64],
    ) -> Result<Self> {
        let expected = n_sets * n_members * dim;
        for side in [a, b] {
            if side.len() != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    got: side.len(),
                });
            }
        }
        if n_sets < 2 {
            return Err(Error::NotEnoughData {
                needed: 2,
                available: n_sets,
            });
        }
        if n_members < 2 {
            return Err(Error::NotEnoughData {
                needed: 2,
                available: n_members,
            });
        }
        Ok(Self {
            view_id,
            n_sets,
            n_members,
            dim,
            a,
            b,
        })
    }

    fn a_row(&self, set: usize, member: usize) -> &[f64] {
        let k = (set * self.n_members + member) * self.dim;
        &self.a[k..k + self.dim]
    }

    fn b_row(&self, set: usize, member: usize) -> &[f64] {
        let k = (set * self.n_members + member) * self.dim;
        &self.b[k..k + self.dim]
    }

    /// Ordered member pairs `(i, j)`, `i != j`, in lexicographic order.
    pub fn member_pairs(&self) -> Vec<(usize, usize)> {
        let m = self.n_members;
        (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect()
    }

    /// Matching AP between member `i` (A side) and member `j` (B side) with
    /// the identity ground truth, plus verification pairs: for every set one
    /// positive and one negative against the next set.
    pub fn evaluate_pair(&self, i: usize, j: usize) -> Result<PairResult> {
        let n = self.n_sets;
        let mut dist = Vec::with_capacity(n * n);
        for s in 0..n {
            for t in 0..n {
                dist.push(l2_distance(self.a_row(s, i), self.b_row(t, j)));
            }
        }
        let gt: Vec<usize> = (0..n).collect();
        let ap = match_task_ap_from_distances(n, &dist, &gt)?;
        let mut verification = Vec::with_capacity(2 * n);
        for s in 0..n {
            verification.push((-dist[s * n + s], true));
            verification.push((-dist[s * n + (s + 1) % n], false));
        }
        Ok(PairResult {
            ap: PairAp {
                view_id: self.view_id.into(),
                i,
                j,
                ap,
            },
            verification,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairAp {
    pub view_id: String,
    pub i: usize,
    pub j: usize,
    pub ap: f64,
}

impl PairAp {
    pub fn pair_id(&self) -> String {
        format!("{}:{}-{}", self.view_id, self.i, self.j)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairResult {
    pub ap: PairAp,
    /// `(score, is_positive)` with score = negative distance.
    pub verification: Vec<(f64, bool)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Sorted by view id, then member pair.
    pub pairs: Vec<PairAp>,
    pub map: f64,
    pub pr: PrCurve,
}

impl EvalReport {
    /// Deterministic reduction of per-pair results in any order.
    pub fn from_results(mut results: Vec<PairResult>) -> Result<Self> {
        if results.is_empty() {
            return Err(Error::NotEnoughData {
                needed: 1,
                available: 0,
            });
        }
        results.sort_by(|x, y| {
            (x.ap.view_id.as_str(), x.ap.i, x.ap.j).cmp(&(y.ap.view_id.as_str(), y.ap.i, y.ap.j))
        });
        let verification: Vec<(f64, bool)> = results
            .iter()
            .flat_map(|r| r.verification.iter().copied())
            .collect();
        let pr = verification_pr(&verification)?;
        let pairs: Vec<PairAp> = results.into_iter().map(|r| r.ap).collect();
        let map = pairs.iter().map(|p| p.ap).sum::<f64>() / pairs.len() as f64;
        Ok(Self { pairs, map, pr })
    }

    /// Mean of the per-pair APs, recomputed.
    pub fn mean_ap(&self) -> f64 {
        self.pairs.iter().map(|p| p.ap).sum::<f64>() / self.pairs.len() as f64
    }
}

/// Evaluates every ordered member pair of every view, sequentially.
pub fn run_matching_eval(views: &[EvalView<'_>]) -> Result<EvalReport> {
    let dims: Option<usize> = views.first().map(|v| v.dim);
    if let Some(v) = views.iter().find(|v| Some(v.dim) != dims) {
        return Err(Error::DimensionMismatch {
            expected: dims.unwrap_or(0),
            got: v.dim,
        });
    }
    let mut results = Vec::new();
    for v in views {
        for (i, j) in v.member_pairs() {
            results.push(v.evaluate_pair(i, j)?);
        }
    }
    EvalReport::from_results(results)
}

/// Displacement direction (radians) of a patch set in the deregistration
/// sweep; fixed per (seed, set id) so every shift uses the same direction.
pub fn displacement_direction(seed: u64, set_id: u64) -> f64 {
    let mut rng = derived_rng(seed, &[b"dereg".as_slice(), &set_id.to_le_bytes()]);
    rng.random::<f64>() * 2.0 * core::f64::consts::PI
}
