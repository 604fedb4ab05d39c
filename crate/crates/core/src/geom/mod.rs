//! Geometry: keypoints, descriptors, matching, robust homography fitting,
//! viewpoint clustering and photometric registration.

mod describe;
mod features;
mod keypoints;
mod matching;
mod ransac;
mod register;
mod views;

pub use describe::{
    describe_keypoints, normalize_descriptor, DescriptorSet, DESCRIPTOR_DIM, PATCH_SIDE,
};
pub use features::{extract_features, match_pair, ImageFeatures, MatcherConfig};
pub use keypoints::{
    detect_keypoints, detect_keypoints_with, HarrisParams, Keypoint, MIN_DETECT_SIDE,
};
pub use matching::{match_ratio, TentativeMatch};
pub use ransac::{
    estimate_homography_ransac, fit_homography_dlt, symmetric_transfer_error, Correspondence,
    RansacEstimate, RansacParams,
};
pub use register::{
    apply_registrations, refine_registration, verify_view_registration, LevelTrace, RefineParams,
    Registration, VerifiedView,
};
pub use views::{
    cluster_views, keep_dominant_view, label_non_dominant, view_id, PairGeometry, View,
    ViewClusterRule, ViewMember, ViewStatus,
};
