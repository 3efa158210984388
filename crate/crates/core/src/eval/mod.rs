//! Verification, matching and retrieval metrics.

mod metrics;
mod protocol;

pub use metrics::{
    average_precision, fdr_at_recall, fpr_at_recall, matching_map, operating_point, retrieval_curve, retrieval_map,
    OperatingPoint, ScoredPairs,
};
pub use protocol::{
    aligned_verification, correspondence_split, dataset_matching_map, describe_dataset, gather_rows, model_fpr95,
    model_matching_map, score_pairs, verification_pairs, verification_rates, EvalReport, VerificationPairs,
    DEFAULT_RECALL,
};
