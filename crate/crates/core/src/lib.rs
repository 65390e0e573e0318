//! Federated training of a small Vision Transformer with a keyed, invertible
//! transform on the patch embedding. A model and images encrypted with the same
//! key produce the logits of the plain model on the plain images.

pub mod cipher;
pub mod data;
mod error;
pub mod fl;
pub mod keyring;
pub mod linalg;
pub mod vit;

pub use error::{Error, Result};
