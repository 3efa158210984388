//! Patch datasets: Brown montages, synthetic generation, augmentation and
//! descriptor files.

mod augment;
mod brown;
mod dataset;
mod descriptors;
mod synthetic;

pub use augment::{augment, transform};
pub use brown::{load_brown, write_brown, BROWN_GRID, BROWN_PATCH, INFO_FILE};
pub use dataset::{PatchDataset, Provenance};
pub use descriptors::{
    descriptors_from_bytes, descriptors_to_bytes, export_descriptors, import_descriptors, DESC_MAGIC,
};
pub use synthetic::{generate_synthetic, SyntheticConfig, SYNTH_PATCH};
