//! Dual-conditional flow matching: interpolant schedules, the dual-headed
//! drift network with exact gradients, AdamW and the training loop.

mod checkpoint;
mod net;
mod optim;
mod schedule;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use net::{
    loss_x, loss_y, time_embedding, Architecture, Batch, BatchLoss, DriftNet, Parameterization, Role, RoleBatch,
    DEFAULT_HIDDEN, DEFAULT_ROLE_DIM, ENDPOINT_A_MIN, TIME_EMBED_DIM,
};
pub use optim::{AdamW, AdamWConfig};
pub use schedule::{interpolate, Schedule};
pub use train::{draw_batch, train, write_training_log, EpochLog, PairData, TrainConfig, TrainState};
