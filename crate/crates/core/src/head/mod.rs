//! Reconstruction head: a shared per-point encoder with masked max-pool,
//! two branches of learned tokens joined by cross-attention, and one MANO
//! parameter decoder per hand. Gradients come from a small float64 tape.

mod checkpoint;
mod model;
mod tape;
mod train;

pub use checkpoint::{checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint};
pub use model::{forward_head, AttentionMode, HeadConfig, HeadModel, NamedTensor};
pub use tape::{Gradients, Tape, Tensor, Var};
pub use train::{
    evaluate_loss, gradient_check, sample_gradients, sample_loss, train_toy, Adam, AdamConfig, EpochRecord,
    GradCheckReport, ToySample, TrainingLog, GRAD_CHECK_FLOOR,
};
