use crate::error::{Error, Result};

use super::{Matrix, RngState};

/// Matrices whose 1-norm condition estimate reaches this bound are rejected as singular.
pub const MAX_CONDITION: f64 = 1e8;

/// Inverse by Gauss-Jordan elimination with partial pivoting.
///
/// Rejects inputs whose 1-norm condition number `‖A‖₁·‖A⁻¹‖₁` is at least
/// [`MAX_CONDITION`]; a zero pivot reports an infinite condition.
pub fn mat_inverse(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::shape("mat_inverse", a.shape_str(), "square"));
    }
    let n = a.rows();
    let mut work = a.clone();
    let mut inv = Matrix::identity(n);

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&x, &y| work.get(x, col).abs().total_cmp(&work.get(y, col).abs()))
            .expect("non-empty range");
        let pivot = work.get(pivot_row, col);
        if pivot == 0.0 {
            return Err(Error::Singular {
                condition: f64::INFINITY,
            });
        }
        if pivot_row != col {
            swap_rows(&mut work, pivot_row, col);
            swap_rows(&mut inv, pivot_row, col);
        }
        if pivot != 1.0 {
            let recip = 1.0 / pivot;
            work.row_mut(col).iter_mut().for_each(|v| *v *= recip);
            inv.row_mut(col).iter_mut().for_each(|v| *v *= recip);
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = work.get(r, col);
            if factor == 0.0 {
                continue;
            }
            for c in 0..n {
                let w = work.get(col, c);
                let i = inv.get(col, c);
                work.set(r, c, work.get(r, c) - factor * w);
                inv.set(r, c, inv.get(r, c) - factor * i);
            }
        }
    }

    let condition = a.norm_1() * inv.norm_1();
    if !condition.is_finite() || condition >= MAX_CONDITION {
        return Err(Error::Singular { condition });
    }
    Ok(inv)
}

/// 1-norm condition number, or infinity when the matrix cannot be inverted.
pub fn condition_estimate(a: &Matrix) -> f64 {
    match mat_inverse(a) {
        Ok(inv) => a.norm_1() * inv.norm_1(),
        Err(Error::Singular { condition }) => condition,
        Err(_) => f64::INFINITY,
    }
}

fn swap_rows(m: &mut Matrix, a: usize, b: usize) {
    let cols = m.cols();
    let data = m.as_mut_slice();
    for c in 0..cols {
        data.swap(a * cols + c, b * cols + c);
    }
}

/// Determinant from LU with partial pivoting.
pub fn determinant(a: &Matrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::shape("determinant", a.shape_str(), "square"));
    }
    let n = a.rows();
    let mut lu = a.clone();
    let mut det = 1.0;
    for col in 0..n {
        let p = (col..n)
            .max_by(|&x, &y| lu.get(x, col).abs().total_cmp(&lu.get(y, col).abs()))
            .expect("non-empty range");
        if lu.get(p, col) == 0.0 {
            return Ok(0.0);
        }
        if p != col {
            swap_rows(&mut lu, p, col);
            det = -det;
        }
        let pivot = lu.get(col, col);
        det *= pivot;
        for r in col + 1..n {
            let f = lu.get(r, col) / pivot;
            for c in col..n {
                lu.set(r, c, lu.get(r, c) - f * lu.get(col, c));
            }
        }
    }
    Ok(det)
}

/// Householder QR of an `m×n` matrix with `m ≥ n`. Returns `(Q, R)` with `Q` `m×m`
/// orthogonal and `R` `m×n` upper triangular.
#[allow(clippy::needless_range_loop)]
pub fn qr(a: &Matrix) -> Result<(Matrix, Matrix)> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::shape("qr", a.shape_str(), "rows >= cols"));
    }
    let mut r = a.clone();
    let mut q = Matrix::identity(m);
    let mut v = vec![0.0; m];

    for k in 0..n.min(m.saturating_sub(1)) {
        let norm: f64 = (k..m).map(|i| r.get(i, k).powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = r.get(k, k);
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        for i in k..m {
            v[i] = r.get(i, k);
        }
        v[k] -= alpha;
        let v_norm_sq: f64 = v[k..m].iter().map(|x| x * x).sum();
        if v_norm_sq == 0.0 {
            continue;
        }
        let beta = 2.0 / v_norm_sq;

        // R ← (I − βvvᵀ) R
        for c in k..n {
            let s: f64 = (k..m).map(|i| v[i] * r.get(i, c)).sum();
            for i in k..m {
                r.set(i, c, r.get(i, c) - beta * v[i] * s);
            }
        }
        // Q ← Q (I − βvvᵀ)
        for row in 0..m {
            let s: f64 = (k..m).map(|i| q.get(row, i) * v[i]).sum();
            for i in k..m {
                q.set(row, i, q.get(row, i) - beta * s * v[i]);
            }
        }
        for i in k + 1..m {
            r.set(i, k, 0.0);
        }
    }
    Ok((q, r))
}

/// Haar-random orthogonal `n×n` matrix: QR of a Gaussian matrix with the
/// columns of `Q` sign-corrected by the signs of `diag(R)`.
pub fn random_orthogonal(n: usize, rng: &mut RngState) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "random_orthogonal needs n >= 1".into(),
        ));
    }
    let data = (0..n * n).map(|_| rng.gaussian()).collect();
    let g = Matrix::from_vec(n, n, data)?;
    let (mut q, r) = qr(&g)?;
    for c in 0..n {
        if r.get(c, c) < 0.0 {
            for row in 0..n {
                q.set(row, c, -q.get(row, c));
            }
        }
    }
    Ok(q)
}
