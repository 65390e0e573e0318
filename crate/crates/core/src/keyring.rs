//! Secret key material: the patch-embedding key `E_a` (invertible `L×L`) and the
//! block permutation `l_t` of `{1, …, N}`, from which the position key `E_b` derives.
//!
//! Key files are JSON:
//!
//! ```json
//! { "version": 1, "mode": "orthogonal", "seed": 7, "rng_algorithm": "chacha20",
//!   "L": 64, "N": 16, "l_t": [3, 1, ...], "E_a": [ ...L*L values, row-major... ] }
//! ```
//!
//! `l_t` is one-based. Matrices are stored explicitly so a key stays usable even
//! if the generator changes.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{
    mat_inverse, random_orthogonal, random_permutation, Matrix, Permutation, RngState,
    RNG_ALGORITHM,
};

pub const KEY_FILE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyMode {
    /// `E_a` is a Haar-random orthogonal matrix.
    Orthogonal,
    /// `E_a` is a random permutation matrix; encrypted blocks stay valid pixels.
    Permutation,
}

impl fmt::Display for KeyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KeyMode::Orthogonal => "orthogonal",
            KeyMode::Permutation => "permutation",
        })
    }
}

impl FromStr for KeyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orthogonal" => Ok(KeyMode::Orthogonal),
            "permutation" => Ok(KeyMode::Permutation),
            other => Err(Error::InvalidArgument(format!(
                "unknown key mode `{other}` (expected orthogonal|permutation)"
            ))),
        }
    }
}

/// Validated key pair. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyPair {
    mode: KeyMode,
    seed: u64,
    rng_algorithm: String,
    patch_key: Matrix,
    patch_key_inv: Matrix,
    perm: Permutation,
}

/// `E_b`: `(N+1)×(N+1)` 0/1 matrix with the class-token row and column fixed and
/// the permutation block `m_(i,j) = 1 ⇔ j = l_e(i)` below-right.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionKeyMatrix(Matrix);

impl PositionKeyMatrix {
    pub fn from_permutation(perm: &Permutation) -> Self {
        let n = perm.len();
        let mut m = Matrix::zeros(n + 1, n + 1);
        m.set(0, 0, 1.0);
        for i in 0..n {
            m.set(i + 1, perm.apply(i) + 1, 1.0);
        }
        PositionKeyMatrix(m)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// Builds `E_b` from a one-based `l_t`.
pub fn build_eb(l_t: &[usize]) -> Result<PositionKeyMatrix> {
    let perm = Permutation::from_one_based(l_t)?;
    Ok(PositionKeyMatrix::from_permutation(&perm))
}

impl KeyPair {
    /// Validates and assembles a key. `E_a` must be square, finite, and have a
    /// 1-norm condition estimate below `1e8`; permutation mode additionally
    /// requires a 0/1 permutation matrix.
    pub fn new(mode: KeyMode, seed: u64, patch_key: Matrix, perm: Permutation) -> Result<Self> {
        if !patch_key.is_square() || patch_key.rows() == 0 {
            return Err(Error::KeyValidation(format!(
                "E_a must be a non-empty square matrix, got {}",
                patch_key.shape_str()
            )));
        }
        if perm.is_empty() {
            return Err(Error::KeyValidation("l_t must be non-empty".into()));
        }
        if !patch_key.is_finite() {
            return Err(Error::KeyValidation("E_a has non-finite entries".into()));
        }
        if mode == KeyMode::Permutation && !patch_key.is_permutation() {
            return Err(Error::KeyValidation(
                "permutation-mode E_a must contain exactly one 1 per row and column".into(),
            ));
        }
        let patch_key_inv = mat_inverse(&patch_key).map_err(|e| match e {
            Error::Singular { condition } => Error::KeyValidation(format!(
                "E_a is not invertible (condition estimate {condition:e})"
            )),
            other => other,
        })?;
        Ok(KeyPair {
            mode,
            seed,
            rng_algorithm: RNG_ALGORITHM.into(),
            patch_key,
            patch_key_inv,
            perm,
        })
    }

    pub fn mode(&self) -> KeyMode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng_algorithm(&self) -> &str {
        &self.rng_algorithm
    }

    /// `L`, the flattened block length.
    pub fn patch_len(&self) -> usize {
        self.patch_key.rows()
    }

    /// `N`, the number of blocks.
    pub fn num_patches(&self) -> usize {
        self.perm.len()
    }

    /// `E_a`.
    pub fn patch_key(&self) -> &Matrix {
        &self.patch_key
    }

    /// `E_a⁻¹`, computed once at construction.
    pub fn patch_key_inverse(&self) -> &Matrix {
        &self.patch_key_inv
    }

    /// `l_t`.
    pub fn permutation(&self) -> &Permutation {
        &self.perm
    }

    /// `E_b`.
    pub fn position_key(&self) -> PositionKeyMatrix {
        PositionKeyMatrix::from_permutation(&self.perm)
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let file = KeyFile {
            version: KEY_FILE_VERSION,
            mode: self.mode,
            seed: self.seed,
            rng_algorithm: self.rng_algorithm.clone(),
            l: self.patch_len(),
            n: self.num_patches(),
            l_t: self.perm.to_one_based(),
            e_a: self.patch_key.as_slice().to_vec(),
        };
        let mut bytes = serde_json::to_vec(&file).expect("key serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let file: KeyFile = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
            what: "key file",
            detail: e.to_string(),
        })?;
        if file.version != KEY_FILE_VERSION {
            return Err(Error::Parse {
                what: "key file",
                detail: format!("field `version`: unsupported value {}", file.version),
            });
        }
        if file.l_t.len() != file.n {
            return Err(Error::KeyValidation(format!(
                "field `l_t` has {} entries but N = {}",
                file.l_t.len(),
                file.n
            )));
        }
        if file.e_a.len() != file.l * file.l {
            return Err(Error::KeyValidation(format!(
                "field `E_a` has {} values but L×L = {}",
                file.e_a.len(),
                file.l * file.l
            )));
        }
        let perm = Permutation::from_one_based(&file.l_t)?;
        let e_a = Matrix::from_vec(file.l, file.l, file.e_a)
            .map_err(|e| Error::KeyValidation(format!("field `E_a`: {e}")))?;
        let mut key = KeyPair::new(file.mode, file.seed, e_a, perm)?;
        key.rng_algorithm = file.rng_algorithm;
        Ok(key)
    }

    /// SHA-256 (hex) of the canonical key-file bytes.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_json_bytes()))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyFile {
    version: u32,
    mode: KeyMode,
    seed: u64,
    rng_algorithm: String,
    #[serde(rename = "L")]
    l: usize,
    #[serde(rename = "N")]
    n: usize,
    l_t: Vec<usize>,
    #[serde(rename = "E_a")]
    e_a: Vec<f64>,
}

/// Draws `E_a` (orthogonal or permutation, per `mode`) and then `l_t` from one
/// stream seeded by `seed`.
pub fn generate_keypair(l: usize, n: usize, mode: KeyMode, seed: u64) -> Result<KeyPair> {
    if l == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "key dimensions must be positive (L = {l}, N = {n})"
        )));
    }
    let mut rng = RngState::new(seed);
    let patch_key = match mode {
        KeyMode::Orthogonal => random_orthogonal(l, &mut rng)?,
        KeyMode::Permutation => random_permutation(l, &mut rng)?.to_matrix(),
    };
    let perm = random_permutation(n, &mut rng)?;
    KeyPair::new(mode, seed, patch_key, perm)
}

/// `E_a = I`, `l_t = [1, …, N]`: encryption under this key is the identity.
pub fn identity_keypair(l: usize, n: usize) -> Result<KeyPair> {
    if l == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "key dimensions must be positive (L = {l}, N = {n})"
        )));
    }
    KeyPair::new(
        KeyMode::Permutation,
        0,
        Matrix::identity(l),
        Permutation::identity(n),
    )
}

pub fn save_keypair(key: &KeyPair, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, key.to_json_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_keypair(path: impl AsRef<Path>) -> Result<KeyPair> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    KeyPair::from_json_bytes(&bytes)
}
