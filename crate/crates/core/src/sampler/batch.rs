use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::{augment_patch, AugmentParams, PackedPatchSet};
use crate::seed::rng_from_seed;
use crate::{Error, GrayImage, Result};

/// Where a batch element came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Provenance {
    pub view_ordinal: u32,
    pub set_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch {
    pub anchors: Vec<GrayImage>,
    pub positives: Vec<GrayImage>,
    pub provenance: Vec<Provenance>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn distinct_views(&self) -> usize {
        let mut v: Vec<u32> = self.provenance.iter().map(|p| p.view_ordinal).collect();
        v.sort_unstable();
        v.dedup();
        v.len()
    }
}

/// Samples `views_per_batch` views, then distinct patch sets from them
/// (about `batch_size / views_per_batch` each), then two distinct members of
/// every set, each augmented independently. Anchor and positive roles are
/// assigned at random.
pub fn assemble_batch(
    sets: &[PackedPatchSet],
    batch_size: usize,
    views_per_batch: usize,
    augment: &AugmentParams,
    seed: u64,
) -> Result<TrainBatch> {
    if batch_size == 0 || views_per_batch == 0 {
        return Err(Error::InvalidArgument(
            "batch size and views per batch must be positive".into(),
        ));
    }
    let mut by_view: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, s) in sets.iter().enumerate() {
        by_view.entry(s.view_ordinal).or_default().push(i);
    }
    if by_view.len() < views_per_batch {
        return Err(Error::NotEnoughData {
            needed: views_per_batch,
            available: by_view.len(),
        });
    }
    let quota = batch_size.div_ceil(views_per_batch);
    let views: Vec<&Vec<usize>> = by_view.values().collect();
    let mut rng = rng_from_seed(seed);
    let mut chosen_views = index::sample(&mut rng, views.len(), views_per_batch).into_vec();
    chosen_views.sort_unstable();

    let mut picked: Vec<usize> = Vec::with_capacity(batch_size);
    for &vi in &chosen_views {
        let members = views[vi];
        if members.len() < quota {
            return Err(Error::NotEnoughData {
                needed: quota,
                available: members.len(),
            });
        }
        let take = quota.min(batch_size - picked.len());
        let mut idx = index::sample(&mut rng, members.len(), take).into_vec();
        idx.sort_unstable();
        picked.extend(idx.into_iter().map(|k| members[k]));
    }
    picked.shuffle(&mut rng);

    let mut batch = TrainBatch {
        anchors: Vec::with_capacity(picked.len()),
        positives: Vec::with_capacity(picked.len()),
        provenance: Vec::with_capacity(picked.len()),
    };
    for si in picked {
        let set = &sets[si];
        if set.len() < 2 {
            return Err(Error::NotEnoughData {
                needed: 2,
                available: set.len(),
            });
        }
        let pair = index::sample(&mut rng, set.len(), 2);
        let (mut a, mut p) = (pair.index(0), pair.index(1));
        if rng.random::<bool>() {
            core::mem::swap(&mut a, &mut p);
        }
        batch
            .anchors
            .push(augment_patch(&set.patch(a), augment, &mut rng)?);
        batch
            .positives
            .push(augment_patch(&set.patch(p), augment, &mut rng)?);
        batch.provenance.push(Provenance {
            view_ordinal: set.view_ordinal,
            set_id: set.set_id,
        });
    }
    Ok(batch)
}

/// Output of [`hard_in_batch_triplet_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct TripletLoss {
    pub loss: f64,
    /// For row `i`, the index `j ≠ i` realizing the hardest negative, found
    /// either as positive `j` for anchor `i` or as anchor `j` for positive `i`.
    pub hardest_negative: Vec<usize>,
    pub positive_distance: Vec<f64>,
    pub negative_distance: Vec<f64>,
}

fn check_rows(data: &[f64], dim: usize, what: &'static str) -> Result<usize> {
    if dim == 0 || data.len() % dim != 0 {
        return Err(Error::InvalidArgument(format!(
            "{what}: length is not a multiple of {dim}"
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    for row in data.chunks(dim) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-4 {
            return Err(Error::InvalidArgument(format!(
                "{what}: row norm {norm} is not 1"
            )));
        }
    }
    Ok(data.len() / dim)
}

/// Hard-in-batch triplet margin loss over row-major unit descriptors.
/// `D_ij = sqrt(max(0, 2 - 2 a_i·p_j))`; the hardest negative of row `i`
/// is the smallest off-diagonal entry of row `i` or column `i`.
pub fn hard_in_batch_triplet_loss(
    anchors: &[f64],
    positives: &[f64],
    dim: usize,
    margin: f64,
) -> Result<TripletLoss> {
    let n = check_rows(anchors, dim, "anchors")?;
    let m = check_rows(positives, dim, "positives")?;
    if n != m {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m,
        });
    }
    if n < 2 {
        return Err(Error::NotEnoughData {
            needed: 2,
            available: n,
        });
    }
    let mut d = Vec::with_capacity(n * n);
    for a in anchors.chunks(dim) {
        for p in positives.chunks(dim) {
            let dot: f64 = a.iter().zip(p).map(|(x, y)| x * y).sum();
            d.push((2.0 - 2.0 * dot).max(0.0).sqrt());
        }
    }
    let mut out = TripletLoss {
        loss: 0.0,
        hardest_negative: Vec::with_capacity(n),
        positive_distance: Vec::with_capacity(n),
        negative_distance: Vec::with_capacity(n),
    };
    for i in 0..n {
        let mut best = (usize::MAX, f64::INFINITY);
        for j in (0..n).filter(|&j| j != i) {
            for v in [d[i * n + j], d[j * n + i]] {
                if v < best.1 {
                    best = (j, v);
                }
            }
        }
        let pos = d[i * n + i];
        out.loss += (margin + pos - best.1).max(0.0);
        out.hardest_negative.push(best.0);
        out.positive_distance.push(pos);
        out.negative_distance.push(best.1);
    }
    out.loss /= n as f64;
    Ok(out)
}

/// Fraction of rows whose hardest negative comes from the same view.
pub fn same_view_negative_fraction(batch: &TrainBatch, loss: &TripletLoss) -> f64 {
    let n = loss.hardest_negative.len();
    if n == 0 {
        return 0.0;
    }
    let same = loss
        .hardest_negative
        .iter()
        .enumerate()
        .filter(|&(i, &j)| batch.provenance[i].view_ordinal == batch.provenance[j].view_ordinal)
        .count();
    same as f64 / n as f64
}

/// Train/test assignment of whole views.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewSplit {
    /// Indices into the input list, ascending.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Puts `round(n · test_fraction)` views in the test split, clamped so both
/// sides are nonempty when `n ≥ 2`; a single view goes to test. The choice is
/// a seeded shuffle, so it is reproducible and never splits a view.
pub fn split_views(n_views: usize, test_fraction: f64, seed: u64) -> Result<ViewSplit> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} outside [0, 1]"
        )));
    }
    if n_views == 0 {
        return Err(Error::NotEnoughData {
            needed: 1,
            available: 0,
        });
    }
    let n_test = if n_views == 1 {
        1
    } else {
        ((n_views as f64 * test_fraction).round() as usize).clamp(1, n_views - 1)
    };
    let mut order: Vec<usize> = (0..n_views).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(ViewSplit { train, test })
}
