//! Dense `f64` linear algebra and seeded randomness shared by every other module.

mod decompose;
mod matrix;
mod perm;
mod rng;

pub use decompose::{
    condition_estimate, determinant, mat_inverse, qr, random_orthogonal, MAX_CONDITION,
};
pub use matrix::{canonical_sum, mat_mul, Matrix};
pub use perm::{random_permutation, Permutation};
pub use rng::{RngState, RNG_ALGORITHM};
