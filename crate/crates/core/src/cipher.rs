//! Model encryption (`Ê = E_a·E`, `Ê_pos = E_b·E_pos`), block-wise test-image
//! encryption, and the encrypted/plain equivalence check.
//!
//! Orientation: encrypted block `i` carries plain block `l_e(i)`, i.e.
//! `b̂_i = flatten(B_{l_e(i)})·E_a⁻¹`. Row `i` of `E_b·E_pos` is `e_pos^{l_e(i)}`,
//! so the encrypted token `i` equals plain token `l_e(i)` exactly and the whole
//! encrypted `z₀` is `E_b·z₀`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::keyring::{KeyMode, KeyPair};
use crate::linalg::{mat_mul, Matrix};
use crate::vit::{
    argmax, load_checkpoint, patchify, save_checkpoint, unpatchify, EncryptionInfo, ImageTensor,
    PatchSequence, ViTModel,
};

/// A model whose patch and position embeddings have been transformed by a key.
/// All other weights are copied bit for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct EncryptedModel {
    model: ViTModel,
    info: EncryptionInfo,
}

impl EncryptedModel {
    pub fn model(&self) -> &ViTModel {
        &self.model
    }

    pub fn key_fingerprint(&self) -> &str {
        &self.info.key_fingerprint
    }

    pub fn info(&self) -> &EncryptionInfo {
        &self.info
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_checkpoint(&self.model, Some(&self.info), path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        match load_checkpoint(path)? {
            (model, Some(info)) => Ok(EncryptedModel { model, info }),
            (_, None) => Err(Error::Format {
                path: path.into(),
                detail: "checkpoint is not marked as encrypted".into(),
            }),
        }
    }
}

fn check_key(model: &ViTModel, key: &KeyPair) -> Result<()> {
    let cfg = model.config();
    if key.patch_len() != cfg.patch_len() || key.num_patches() != cfg.num_patches() {
        return Err(Error::shape(
            "key/model",
            format!("key L={} N={}", key.patch_len(), key.num_patches()),
            format!("model L={} N={}", cfg.patch_len(), cfg.num_patches()),
        ));
    }
    Ok(())
}

pub fn encrypt_model(model: &ViTModel, key: &KeyPair) -> Result<EncryptedModel> {
    check_key(model, key)?;
    let mut out = model.clone();
    out.patch_embedding = mat_mul(key.patch_key(), &model.patch_embedding)?;
    out.position_embedding = mat_mul(key.position_key().matrix(), &model.position_embedding)?;
    Ok(EncryptedModel {
        model: out,
        info: EncryptionInfo {
            key_fingerprint: key.fingerprint(),
            mode: key.mode(),
        },
    })
}

pub const ENCRYPTED_IMAGE_MAGIC: &[u8; 4] = b"FVEI";
pub const ENCRYPTED_IMAGE_VERSION: u32 = 1;

/// Encrypted test image: `N` blocks of length `L`, stored as raw `f64`
/// (a general `E_a⁻¹` leaves the pixel range, and rounding would break equivalence).
#[derive(Clone, Debug, PartialEq)]
pub struct EncryptedImage {
    height: usize,
    width: usize,
    channels: usize,
    patch: usize,
    mode: KeyMode,
    key_fingerprint: String,
    blocks: Matrix,
}

#[derive(Serialize, Deserialize)]
struct EncryptedImageHeader {
    version: u32,
    h: usize,
    w: usize,
    c: usize,
    p: usize,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "L")]
    l: usize,
    mode: KeyMode,
    key_fingerprint: String,
}

impl EncryptedImage {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn mode(&self) -> KeyMode {
        self.mode
    }

    pub fn key_fingerprint(&self) -> &str {
        &self.key_fingerprint
    }

    /// `N × L` matrix of encrypted block vectors `b̂_i`.
    pub fn blocks(&self) -> &Matrix {
        &self.blocks
    }

    pub fn matches_key(&self, key: &KeyPair) -> bool {
        self.key_fingerprint == key.fingerprint()
    }

    /// Reassembles the encrypted blocks into an `h×w×c` picture. In permutation
    /// mode every value is still a source pixel, so the result is viewable.
    pub fn render(&self) -> Result<ImageTensor> {
        unpatchify(
            &self.blocks,
            self.height,
            self.width,
            self.channels,
            self.patch,
        )
    }

    /// Layout: magic `FVEI`, `u32` LE header length, JSON header
    /// `{version, h, w, c, p, N, L, mode, key_fingerprint}`, then `N·L` LE `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = EncryptedImageHeader {
            version: ENCRYPTED_IMAGE_VERSION,
            h: self.height,
            w: self.width,
            c: self.channels,
            p: self.patch,
            n: self.blocks.rows(),
            l: self.blocks.cols(),
            mode: self.mode,
            key_fingerprint: self.key_fingerprint.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(8 + json.len() + self.blocks.as_slice().len() * 8);
        out.extend_from_slice(ENCRYPTED_IMAGE_MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for v in self.blocks.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |detail: String| Error::Parse {
            what: "encrypted image",
            detail,
        };
        if bytes.len() < 8 || &bytes[..4] != ENCRYPTED_IMAGE_MAGIC {
            return Err(bad("missing FVEI magic".into()));
        }
        let hlen = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let body = bytes
            .get(8..8 + hlen)
            .ok_or_else(|| bad(format!("header length {hlen} exceeds file")))?;
        let h: EncryptedImageHeader =
            serde_json::from_slice(body).map_err(|e| bad(e.to_string()))?;
        if h.version != ENCRYPTED_IMAGE_VERSION {
            return Err(bad(format!("unsupported version {}", h.version)));
        }
        if h.p == 0 || !h.h.is_multiple_of(h.p) || !h.w.is_multiple_of(h.p) {
            return Err(bad(format!("patch {} does not tile {}x{}", h.p, h.h, h.w)));
        }
        if h.n * h.l != h.h * h.w * h.c || h.l != h.p * h.p * h.c {
            return Err(bad(format!(
                "N={} L={} inconsistent with {}x{}x{} p={}",
                h.n, h.l, h.h, h.w, h.c, h.p
            )));
        }
        let data = &bytes[8 + hlen..];
        if data.len() != h.n * h.l * 8 {
            return Err(bad(format!(
                "expected {} payload bytes, found {}",
                h.n * h.l * 8,
                data.len()
            )));
        }
        let values = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let blocks = Matrix::from_vec(h.n, h.l, values)?;
        Ok(EncryptedImage {
            height: h.h,
            width: h.w,
            channels: h.c,
            patch: h.p,
            mode: h.mode,
            key_fingerprint: h.key_fingerprint,
            blocks,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        EncryptedImage::from_bytes(&bytes)
    }
}

/// Divide into `p×p` blocks, permute by `l_t`, flatten, multiply by `E_a⁻¹`.
pub fn encrypt_image(x: &ImageTensor, key: &KeyPair, p: usize) -> Result<EncryptedImage> {
    let patches = patchify(x, p)?;
    if patches.len() != key.num_patches() || patches.patch_len() != key.patch_len() {
        return Err(Error::shape(
            "encrypt_image",
            format!("image N={} L={}", patches.len(), patches.patch_len()),
            format!("key N={} L={}", key.num_patches(), key.patch_len()),
        ));
    }
    let perm = key.permutation();
    let mut shuffled = Matrix::zeros(patches.len(), patches.patch_len());
    for i in 0..patches.len() {
        shuffled
            .row_mut(i)
            .copy_from_slice(patches.patch(perm.apply(i)));
    }
    let blocks = mat_mul(&shuffled, key.patch_key_inverse())?;
    Ok(EncryptedImage {
        height: x.height(),
        width: x.width(),
        channels: x.channels(),
        patch: p,
        mode: key.mode(),
        key_fingerprint: key.fingerprint(),
        blocks,
    })
}

/// Inverts [`encrypt_image`]. A key other than the one used to encrypt yields
/// a meaningless image rather than an error: the scheme carries no
/// authentication. Use [`EncryptedImage::matches_key`] to detect the mismatch.
pub fn decrypt_image(e: &EncryptedImage, key: &KeyPair) -> Result<ImageTensor> {
    if e.blocks.rows() != key.num_patches() || e.blocks.cols() != key.patch_len() {
        return Err(Error::shape(
            "decrypt_image",
            format!("image N={} L={}", e.blocks.rows(), e.blocks.cols()),
            format!("key N={} L={}", key.num_patches(), key.patch_len()),
        ));
    }
    let unmixed = mat_mul(&e.blocks, key.patch_key())?;
    let perm = key.permutation();
    let mut patches = Matrix::zeros(unmixed.rows(), unmixed.cols());
    for i in 0..unmixed.rows() {
        patches
            .row_mut(perm.apply(i))
            .copy_from_slice(unmixed.row(i));
    }
    unpatchify(&patches, e.height, e.width, e.channels, e.patch)
}

/// Logits of the encrypted model on an encrypted image.
pub fn encrypted_forward(model: &EncryptedModel, e: &EncryptedImage) -> Result<Vec<f64>> {
    if model.key_fingerprint() != e.key_fingerprint {
        return Err(Error::KeyMismatch {
            expected: model.key_fingerprint().into(),
            found: e.key_fingerprint.clone(),
        });
    }
    let cfg = model.model.config();
    if e.dims() != (cfg.height, cfg.width, cfg.channels) || e.patch != cfg.patch {
        return Err(Error::shape(
            "encrypted_forward",
            format!(
                "image {}x{}x{} p={}",
                e.height, e.width, e.channels, e.patch
            ),
            format!(
                "model {}x{}x{} p={}",
                cfg.height, cfg.width, cfg.channels, cfg.patch
            ),
        ));
    }
    model
        .model
        .forward_patches(&PatchSequence(e.blocks.clone()))
}

/// Accuracy of an encrypted model on `data`, each image encrypted with `key`
/// before inference.
pub fn encrypted_accuracy(
    model: &EncryptedModel,
    key: &KeyPair,
    data: &LabeledDataset,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot evaluate on an empty dataset".into(),
        ));
    }
    let p = model.model.config().patch;
    let mut correct = 0usize;
    for s in data.samples() {
        let e = encrypt_image(&s.image, key, p)?;
        if argmax(&encrypted_forward(model, &e)?) == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Comparison of the encrypted and plain pipelines on one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    /// `max |z₀(encrypted) − E_b·z₀(plain)|`.
    pub max_z0_row_diff: f64,
    pub max_logit_diff: f64,
    pub argmax_match: bool,
}

impl EquivalenceReport {
    pub fn passed(&self, logit_tolerance: f64) -> bool {
        self.argmax_match && self.max_logit_diff < logit_tolerance
    }

    /// Worst case over several reports.
    pub fn merge(reports: &[EquivalenceReport]) -> EquivalenceReport {
        EquivalenceReport {
            max_z0_row_diff: reports
                .iter()
                .map(|r| r.max_z0_row_diff)
                .fold(0.0, f64::max),
            max_logit_diff: reports.iter().map(|r| r.max_logit_diff).fold(0.0, f64::max),
            argmax_match: reports.iter().all(|r| r.argmax_match),
        }
    }
}

/// Logit tolerance for orthogonal keys; permutation keys are exact.
pub const LOGIT_TOLERANCE: f64 = 1e-6;
/// Embedding tolerance for orthogonal keys.
pub const Z0_TOLERANCE: f64 = 1e-8;

pub fn verify_equivalence(
    model: &ViTModel,
    key: &KeyPair,
    x: &ImageTensor,
) -> Result<EquivalenceReport> {
    let encrypted_model = encrypt_model(model, key)?;
    verify_with_encrypted(model, &encrypted_model, key, x)
}

/// As [`verify_equivalence`], reusing an already encrypted model.
pub fn verify_with_encrypted(
    model: &ViTModel,
    encrypted_model: &EncryptedModel,
    key: &KeyPair,
    x: &ImageTensor,
) -> Result<EquivalenceReport> {
    let plain_z0 = model.embed(&model.patchify(x)?)?;
    let plain_logits = model.logits_from_embedding(&plain_z0)?;

    let e = encrypt_image(x, key, model.config().patch)?;
    let enc_z0 = encrypted_model
        .model
        .embed(&PatchSequence(e.blocks.clone()))?;
    let enc_logits = encrypted_model.model.logits_from_embedding(&enc_z0)?;

    let expected = mat_mul(key.position_key().matrix(), &plain_z0)?;
    let max_logit_diff = plain_logits
        .iter()
        .zip(&enc_logits)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(EquivalenceReport {
        max_z0_row_diff: enc_z0.max_abs_diff(&expected),
        max_logit_diff,
        argmax_match: argmax(&plain_logits) == argmax(&enc_logits),
    })
}
