use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;

use crate::seed::derived_rng;
use crate::{Error, Homography, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViewStatus {
    Raw,
    Registered,
    Accepted,
    Rejected,
}

impl ViewStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ViewStatus::Raw => "raw",
            ViewStatus::Registered => "registered",
            ViewStatus::Accepted => "accepted",
            ViewStatus::Rejected => "rejected",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "raw" => ViewStatus::Raw,
            "registered" => ViewStatus::Registered,
            "accepted" => ViewStatus::Accepted,
            "rejected" => ViewStatus::Rejected,
            _ => return None,
        })
    }
}

/// A view member and its member-to-reference homography.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewMember {
    pub image_id: String,
    pub homography: Homography,
}

/// A reference image plus the images related to it by a near-identity
/// homography. The reference is always the first member, with identity.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub view_id: String,
    pub reference: String,
    pub members: Vec<ViewMember>,
    pub status: ViewStatus,
    pub reasons: Vec<String>,
}

impl View {
    pub fn singleton(view_id: String, reference: String) -> Self {
        Self {
            view_id,
            members: vec![ViewMember {
                image_id: reference.clone(),
                homography: Homography::identity(),
            }],
            reference,
            status: ViewStatus::Raw,
            reasons: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member_ids(&self) -> impl Iterator<Item = &str> {
        self.members.iter().map(|m| m.image_id.as_str())
    }

    /// Checks the reference-first and distinct-members invariants.
    pub fn validate(&self) -> Result<()> {
        let first = self.members.first().ok_or_else(|| {
            Error::InvalidArgument(format!("view {} has no members", self.view_id))
        })?;
        if first.image_id != self.reference || first.homography != Homography::identity() {
            return Err(Error::InvalidArgument(format!(
                "view {}: reference must be the first member with identity homography",
                self.view_id
            )));
        }
        let mut ids: Vec<&str> = self.member_ids().collect();
        ids.sort_unstable();
        let n = ids.len();
        ids.dedup();
        if ids.len() != n {
            return Err(Error::InvalidArgument(format!(
                "view {}: duplicate members",
                self.view_id
            )));
        }
        Ok(())
    }
}

/// Join rule: strictly more than `min_inliers` inliers and SAD to identity
/// strictly below `max_sad`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewClusterRule {
    pub min_inliers: usize,
    pub max_sad: f64,
}

impl Default for ViewClusterRule {
    fn default() -> Self {
        Self {
            min_inliers: 50,
            max_sad: 50.0,
        }
    }
}

impl ViewClusterRule {
    pub fn joins(&self, pair: &PairGeometry) -> bool {
        pair.inliers > self.min_inliers && pair.homography.sad_to_identity() < self.max_sad
    }
}

/// Outcome of matching a candidate against a reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairGeometry {
    /// Candidate-to-reference homography.
    pub homography: Homography,
    pub inliers: usize,
}

pub fn view_id(prefix: &str, ordinal: usize) -> String {
    format!("{prefix}.v{ordinal:02}")
}

/// Greedy reference-based clustering.
///
/// The first remaining image becomes a reference; `match_round(reference,
/// candidates)` matches it against every other remaining image (indices into
/// `image_ids`) and returns one optional geometry per candidate. Candidates
/// satisfying `rule` join the view; everything in the view is removed, and
/// the loop repeats until no images remain. Unmatched images end up as
/// singleton views, so the result partitions the input.
pub fn cluster_views<F>(
    image_ids: &[String],
    rule: &ViewClusterRule,
    view_prefix: &str,
    mut match_round: F,
) -> Vec<View>
where
    F: FnMut(usize, &[usize]) -> Vec<Option<PairGeometry>>,
{
    let mut remaining: Vec<usize> = (0..image_ids.len()).collect();
    let mut views = Vec::new();
    while let Some((&reference, candidates)) = remaining.split_first() {
        let candidates = candidates.to_vec();
        let mut view = View::singleton(
            view_id(view_prefix, views.len()),
            image_ids[reference].clone(),
        );
        let results = if candidates.is_empty() {
            Vec::new()
        } else {
            match_round(reference, &candidates)
        };
        debug_assert_eq!(results.len(), candidates.len());
        let mut left = Vec::with_capacity(candidates.len());
        for (&cand, result) in candidates
            .iter()
            .zip(results.iter().chain(core::iter::repeat(&None)))
        {
            match result {
                Some(pair) if rule.joins(pair) => view.members.push(ViewMember {
                    image_id: image_ids[cand].clone(),
                    homography: pair.homography,
                }),
                _ => left.push(cand),
            }
        }
        views.push(view);
        remaining = left;
    }
    views
}

/// The largest view (earliest on ties) if it has strictly more than
/// `min_size` members, subsampled without replacement to `cap` members.
/// The reference is always kept and member order is preserved.
pub fn keep_dominant_view(views: &[View], min_size: usize, cap: usize, seed: u64) -> Option<View> {
    let mut best: Option<&View> = None;
    for v in views {
        if best.is_none_or(|b| v.len() > b.len()) {
            best = Some(v);
        }
    }
    let best = best?;
    if best.len() <= min_size {
        return None;
    }
    let mut view = best.clone();
    if cap >= 1 && view.len() > cap {
        let mut rng = derived_rng(seed, &[b"dominant".as_slice(), view.view_id.as_bytes()]);
        let mut keep = index::sample(&mut rng, view.len() - 1, cap - 1).into_vec();
        keep.sort_unstable();
        let others: Vec<ViewMember> = keep
            .into_iter()
            .map(|i| view.members[i + 1].clone())
            .collect();
        view.members.truncate(1);
        view.members.extend(others);
        view.reasons
            .push(format!("subsampled from {} to {cap} members", best.len()));
    }
    Some(view)
}

/// Marks every view except the dominant one as rejected with a reason.
pub fn label_non_dominant(views: &mut [View], dominant: Option<&View>, min_size: usize) {
    for v in views.iter_mut() {
        if dominant.is_some_and(|d| d.view_id == v.view_id) {
            continue;
        }
        v.status = ViewStatus::Rejected;
        v.reasons.push(if dominant.is_some() {
            "not the dominant view".to_string()
        } else {
            format!("largest view has at most {min_size} members")
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i:03}")).collect()
    }

    fn view_of(size: usize, tag: &str) -> View {
        let mut v = View::singleton(tag.into(), format!("{tag}-0"));
        for i in 1..size {
            v.members.push(ViewMember {
                image_id: format!("{tag}-{i}"),
                homography: Homography::identity(),
            });
        }
        v
    }

    #[test]
    fn identical_images_form_one_view() {
        let ids = ids(50);
        let views = cluster_views(&ids, &ViewClusterRule::default(), "cam", |_, c| {
            c.iter()
                .map(|_| {
                    Some(PairGeometry {
                        homography: Homography::identity(),
                        inliers: 500,
                    })
                })
                .collect()
        });
        assert_eq!(views.len(), 1);
        assert_eq!(views[0].len(), 50);
        views[0].validate().unwrap();
    }

    #[test]
    fn strict_boundaries() {
        let ids = ids(3);
        let rule = ViewClusterRule::default();
        // candidate 1: exactly 50 inliers; candidate 2: SAD exactly 50
        let views = cluster_views(&ids, &rule, "cam", |r, c| {
            c.iter()
                .map(|&i| match (r, i) {
                    (0, 1) => Some(PairGeometry {
                        homography: Homography::identity(),
                        inliers: 50,
                    }),
                    (0, 2) => Some(PairGeometry {
                        homography: Homography::translation(20.0, 30.0),
                        inliers: 400,
                    }),
                    _ => None,
                })
                .collect()
        });
        assert_eq!(views.len(), 3);
        assert!(views.iter().all(|v| v.len() == 1));

        let joined = cluster_views(&ids, &rule, "cam", |_, c| {
            c.iter()
                .map(|_| {
                    Some(PairGeometry {
                        homography: Homography::translation(20.0, 29.9),
                        inliers: 51,
                    })
                })
                .collect()
        });
        assert_eq!(joined.len(), 1);
    }

    #[test]
    fn dominant_view_rules() {
        let d = keep_dominant_view(&[view_of(60, "a"), view_of(10, "b")], 50, 50, 1).unwrap();
        assert_eq!(d.view_id, "a");
        assert_eq!(d.len(), 50);
        assert_eq!(d.members[0].image_id, "a-0");
        d.validate().unwrap();

        assert!(keep_dominant_view(&[view_of(50, "a"), view_of(30, "b")], 50, 50, 1).is_none());

        let one = keep_dominant_view(&[view_of(51, "a")], 50, 50, 1).unwrap();
        assert_eq!(one.len(), 50);
        assert_eq!(one.reference, "a-0");

        let tie = keep_dominant_view(&[view_of(55, "a"), view_of(55, "b")], 50, 50, 1).unwrap();
        assert_eq!(tie.view_id, "a");
        assert!(keep_dominant_view(&[], 50, 50, 1).is_none());
    }
}
