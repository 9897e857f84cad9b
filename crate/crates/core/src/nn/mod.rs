//! Fully connected Q-network with rectified-linear hidden layers, the ADAM
//! optimizer and a binary checkpoint format.

mod adam;
mod checkpoint;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{config_hash, load_checkpoint, load_checkpoint_for, save_checkpoint, CheckpointMeta};
pub use mlp::{copy_params, BatchGrad, MlpParams, Q_LAYERS};
