//! From registered views to training data: patch-centre distributions,
//! patch specs, aligned patch sets, augmentation, batches and the
//! hard-in-batch triplet loss.

mod augment;
mod batch;
mod mask;
mod patches;

pub use augment::{
    augment_patch, augment_with, AugmentDraw, AugmentParams, AUGMENT_OUT, AUGMENT_WINDOW,
};
pub use batch::{
    assemble_batch, hard_in_batch_triplet_loss, same_view_negative_fraction, split_views,
    Provenance, TrainBatch, TripletLoss, ViewSplit,
};
pub use mask::{
    build_probability_mask, hessian_response, MaskMode, MaskOutcome, MaskSampler, ResponseMask,
    MIN_RESPONSE_SIDE,
};
pub use patches::{
    extract_patch_set, sample_patch_specs, PackedPatchSet, PatchSet, PatchSpec, SpecRanges,
    ValidRegion, PATCH_OUT,
};
