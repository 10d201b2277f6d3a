//! Small convolutional classifier with hand-written reverse-mode gradients.
//!
//! conv 3×3 → ReLU → max-pool 2 → conv 3×3 → ReLU → max-pool 2 → dense.

mod checkpoint;
mod network;
mod params;
mod scalar;
mod train;

pub use checkpoint::{load_checkpoint, parse_checkpoint, render_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use network::{argmax_rows, forward, loss_and_grads, per_sample_loss, GradRequest, Gradients};
pub use params::{ModelParams, ModelShape};
pub use scalar::Scalar;
pub use train::{images_to_batch, predict, predict_logits, train, EpochRecord, TrainConfig, TrainedModel};
