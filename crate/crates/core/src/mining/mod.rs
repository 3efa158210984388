//! Distance matrices, negative selection and the training losses.

mod distance;
mod loss;
mod select;

pub use distance::{distance_matrix, hardest_negative_table, paired_distance, DIST_EPS, UNIT_NORM_TOL};
pub use loss::{
    contrastive_loss, cpr_penalty, gather_distances, softmin_loss, triplet_margin_loss, LossConfig, LossKind, CPR_EPS,
};
pub use select::{
    hardest_in_batch, random_negative_indices, random_negatives, NegativeSource, SamplingStrategy, TripletSelection,
};
