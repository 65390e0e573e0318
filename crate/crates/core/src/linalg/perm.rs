use crate::error::{Error, Result};

use super::{Matrix, RngState};

/// Bijection on `{0, …, n−1}`, stored zero-based.
///
/// Files and messages use the one-based form `l_t = [l_e(1), …, l_e(N)]`;
/// [`Permutation::from_one_based`] and [`Permutation::to_one_based`] convert.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation {
            map: (0..n).collect(),
        }
    }

    pub fn from_zero_based(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        let mut seen = vec![false; n];
        for (i, &v) in map.iter().enumerate() {
            if v >= n {
                return Err(Error::KeyValidation(format!(
                    "permutation entry {} at position {} is out of range 1..={n}",
                    v + 1,
                    i + 1
                )));
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::KeyValidation(format!(
                    "permutation value {} appears more than once",
                    v + 1
                )));
            }
        }
        Ok(Permutation { map })
    }

    pub fn from_one_based(values: &[usize]) -> Result<Self> {
        if let Some(pos) = values.iter().position(|&v| v == 0) {
            return Err(Error::KeyValidation(format!(
                "permutation entry at position {} is 0; values are 1-based",
                pos + 1
            )));
        }
        Permutation::from_zero_based(values.iter().map(|v| v - 1).collect())
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.map.iter().map(|v| v + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Zero-based image of position `i`.
    #[inline]
    pub fn apply(&self, i: usize) -> usize {
        self.map[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.map.len()];
        for (i, &v) in self.map.iter().enumerate() {
            inv[v] = i;
        }
        Permutation { map: inv }
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &v)| i == v)
    }

    /// Matrix `m` with `m[i][j] = 1` iff `j = map[i]`, so `(m·X)` row `i` is row `map[i]` of `X`.
    pub fn to_matrix(&self) -> Matrix {
        let n = self.map.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &j) in self.map.iter().enumerate() {
            m.set(i, j, 1.0);
        }
        m
    }

    /// Recovers the permutation from a 0/1 permutation matrix.
    pub fn from_matrix(m: &Matrix) -> Option<Permutation> {
        if !m.is_permutation() {
            return None;
        }
        let map = (0..m.rows())
            .map(|r| m.row(r).iter().position(|&v| v == 1.0).expect("checked"))
            .collect();
        Some(Permutation { map })
    }
}

/// Uniform random permutation of `{1, …, n}` (Fisher-Yates).
pub fn random_permutation(n: usize, rng: &mut RngState) -> Result<Permutation> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "random_permutation needs n >= 1".into(),
        ));
    }
    let mut map: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut map);
    Ok(Permutation { map })
}
