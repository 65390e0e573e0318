//! Miniature Vision Transformer with analytic gradients.

mod checkpoint;
mod config;
mod grad;
mod model;
mod optim;
mod patch;

pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint, EncryptionInfo,
    CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use config::ViTConfig;
pub use grad::{argmax, cross_entropy, softmax};
pub use model::{EncoderBlock, LayerNorm, TensorView, TensorViewMut, ViTModel};
pub use optim::sgd_step;
pub use patch::{patchify, unpatchify, ImageTensor, PatchSequence};
