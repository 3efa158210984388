//! The descriptor network, patch preprocessing and model files.

mod arch;
mod io;
#[allow(clippy::module_inception)]
mod model;
mod patch;

pub use arch::{ArchitectureSpec, LayerSpec, ShapeTrace};
pub use io::{load_model, model_from_bytes, model_to_bytes, save_model, MODEL_MAGIC, MODEL_VERSION};
pub(crate) use io::{put_u32, Reader};
pub use model::{DescriptorModel, Forward, Layer, INIT_BIAS, INIT_GAIN};
pub use patch::{describe_patches, normalize_patch, prepare_batch, resize_patch_64_to_32, Patch, MIN_PATCH_STD};
