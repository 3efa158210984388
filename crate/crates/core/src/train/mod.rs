//! SGD training loop: configs, batch assembly, the optimizer and the epoch
//! loop.

mod batch;
mod config;
mod optim;
mod run;

pub use batch::{assemble_batch, batch_from_points, epoch_batches, PatchBatch};
pub use config::{lr_at, Preset, TrainConfig, CONFIG_KEYS};
pub use optim::{sgd_step, OptimState};
pub use run::{
    active_fraction, epoch_hard_negatives, stream_rng, train, BestSnapshot, RngStream, TrainOptions, TrainOutcome,
    TrainStats,
};
