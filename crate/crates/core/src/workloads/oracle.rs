//! Brute-force references.

use super::matrix::{Mask, Matrix};
use crate::error::{Error, Result};

fn check(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    Ok(())
}

/// `C[m][n] += A[m][k] * B[k][n]`, m-n-k loop order.
pub fn oracle_spmm(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    check(a, b)?;
    let mut c = Matrix::zeros(a.rows, b.cols);
    for m in 0..a.rows {
        for n in 0..b.cols {
            let mut acc = 0i32;
            for k in 0..a.cols {
                acc = acc.wrapping_add(a.get(m, k).wrapping_mul(b.get(k, n)));
            }
            c.set(m, n, acc);
        }
    }
    Ok(c)
}

/// Row-wise (Gustavson) accumulation: every nonzero `A[m][k]` scales row
/// `k` of B into row `m` of C.
pub fn oracle_spmm_rowwise(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    check(a, b)?;
    let mut c = Matrix::zeros(a.rows, b.cols);
    for (i, &av) in a.data.iter().enumerate() {
        if av == 0 {
            continue;
        }
        let (m, k) = (i / a.cols, i % a.cols);
        for (n, &bv) in b.row(k).iter().enumerate() {
            c.add_at(m, n, av.wrapping_mul(bv));
        }
    }
    Ok(c)
}

/// Masked product; positions outside the mask are zero.
pub fn oracle_sddmm(a: &Matrix, b: &Matrix, mask: &Mask) -> Result<Matrix> {
    check(a, b)?;
    if mask.rows != a.rows || mask.cols != b.cols {
        return Err(Error::ShapeMismatch(format!(
            "mask {}x{} for a {}x{} output",
            mask.rows, mask.cols, a.rows, b.cols
        )));
    }
    let mut c = oracle_spmm(a, b)?;
    for (v, &keep) in c.data.iter_mut().zip(&mask.bits) {
        if !keep {
            *v = 0;
        }
    }
    Ok(c)
}
