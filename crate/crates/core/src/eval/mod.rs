//! Descriptor evaluation: the baseline descriptor, matching-task AP over
//! greedy bijections, verification precision/recall, and per-view reports.

mod ap;
mod descriptor;
mod report;

pub use ap::{
    greedy_bijection, match_task_ap, match_task_ap_from_distances, ranked_ap, verification_pr,
    PrCurve, PrPoint,
};
pub use descriptor::{
    baseline_descriptor, eval_patch, l2_distance, DescriptorMatrix, BASELINE_DIM, BASELINE_SIDE,
};
pub use report::{
    displacement_direction, run_matching_eval, EvalReport, EvalView, PairAp, PairResult,
};
