//! JSON checkpoint format.
//!
//! ```json
//! {
//!   "format": "fedvit-checkpoint",
//!   "version": 1,
//!   "config": { "height": 32, "width": 32, "channels": 1, "patch": 8, "hidden": 32,
//!               "depth": 2, "heads": 4, "mlp_ratio": 2, "classes": 3 },
//!   "encryption": null | { "key_fingerprint": "<sha256 hex>", "mode": "orthogonal" },
//!   "tensors": [ { "name": "patch_embedding", "shape": [64, 32], "data": [ ...row-major... ] }, ... ]
//! }
//! ```
//!
//! Tensors appear in [`ViTModel::tensors`] order. Floats are written in shortest
//! round-trip form, so save → load is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keyring::KeyMode;

use super::config::ViTConfig;
use super::model::ViTModel;

pub const CHECKPOINT_FORMAT: &str = "fedvit-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptionInfo {
    pub key_fingerprint: String,
    pub mode: KeyMode,
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: ViTConfig,
    encryption: Option<EncryptionInfo>,
    tensors: Vec<TensorRecord>,
}

pub fn checkpoint_to_bytes(model: &ViTModel, encryption: Option<&EncryptionInfo>) -> Vec<u8> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config: model.config().clone(),
        encryption: encryption.cloned(),
        tensors: model
            .tensors()
            .into_iter()
            .map(|t| TensorRecord {
                name: t.name,
                shape: t.shape,
                data: t.data.to_vec(),
            })
            .collect(),
    };
    let mut bytes = serde_json::to_vec(&file).expect("checkpoint serializes");
    bytes.push(b'\n');
    bytes
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(ViTModel, Option<EncryptionInfo>)> {
    let file: CheckpointFile = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        what: "checkpoint",
        detail: e.to_string(),
    })?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(Error::Parse {
            what: "checkpoint",
            detail: format!("unexpected format tag `{}`", file.format),
        });
    }
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Parse {
            what: "checkpoint",
            detail: format!("unsupported version {}", file.version),
        });
    }
    let model = ViTModel::from_tensors(
        &file.config,
        file.tensors
            .iter()
            .map(|t| (t.name.as_str(), t.shape.as_slice(), t.data.as_slice())),
    )?;
    Ok((model, file.encryption))
}

pub fn save_checkpoint(
    model: &ViTModel,
    encryption: Option<&EncryptionInfo>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint_to_bytes(model, encryption)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ViTModel, Option<EncryptionInfo>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::RngState;

    #[test]
    fn round_trip_bit_exact() {
        let m = ViTModel::init(&ViTConfig::default(), &mut RngState::new(12)).unwrap();
        let bytes = checkpoint_to_bytes(&m, None);
        let (back, enc) = checkpoint_from_bytes(&bytes).unwrap();
        assert!(enc.is_none());
        for (a, b) in m.tensors().iter().zip(back.tensors()) {
            assert!(a
                .data
                .iter()
                .zip(b.data)
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(checkpoint_to_bytes(&back, None), bytes);
    }

    #[test]
    fn truncated_is_parse_error() {
        let m = ViTModel::init(&ViTConfig::default(), &mut RngState::new(1)).unwrap();
        let bytes = checkpoint_to_bytes(&m, None);
        assert!(matches!(
            checkpoint_from_bytes(&bytes[..bytes.len() / 2]),
            Err(Error::Parse { .. })
        ));
    }
}
