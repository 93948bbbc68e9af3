use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

/// Row-wise `[a | b]`.
pub fn concat(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows() != b.rows() {
        return Err(Error::shape("concat", a.rows(), b.rows()));
    }
    let cols = a.cols() + b.cols();
    let mut out = Matrix::zeros(a.rows(), cols);
    for r in 0..a.rows() {
        let row = out.row_mut(r);
        row[..a.cols()].copy_from_slice(a.row(r));
        row[a.cols()..].copy_from_slice(b.row(r));
    }
    Ok(out)
}

/// Inverse of [`concat`] for gradients: splits columns at `at`.
pub fn split_columns(g: &Matrix, at: usize) -> Result<(Matrix, Matrix)> {
    if at > g.cols() {
        return Err(Error::shape("split_columns", format!("at <= {}", g.cols()), at));
    }
    let mut a = Matrix::zeros(g.rows(), at);
    let mut b = Matrix::zeros(g.rows(), g.cols() - at);
    for r in 0..g.rows() {
        a.row_mut(r).copy_from_slice(&g.row(r)[..at]);
        b.row_mut(r).copy_from_slice(&g.row(r)[at..]);
    }
    Ok((a, b))
}

/// Per-row inner product.
pub fn dot_merge(u: &Matrix, v: &Matrix) -> Result<Vec<f64>> {
    if u.shape() != v.shape() {
        return Err(Error::shape(
            "dot_merge",
            format!("{:?}", u.shape()),
            format!("{:?}", v.shape()),
        ));
    }
    Ok((0..u.rows()).map(|r| dot(u.row(r), v.row(r))).collect())
}

/// Gradients of [`dot_merge`] w.r.t. `u` and `v`.
pub fn dot_merge_backward(u: &Matrix, v: &Matrix, upstream: &[f64]) -> Result<(Matrix, Matrix)> {
    if u.shape() != v.shape() || upstream.len() != u.rows() {
        return Err(Error::shape("dot_merge backward", u.rows(), upstream.len()));
    }
    let mut du = Matrix::zeros(u.rows(), u.cols());
    let mut dv = Matrix::zeros(v.rows(), v.cols());
    for (r, &g) in upstream.iter().enumerate() {
        for (d, x) in du.row_mut(r).iter_mut().zip(v.row(r)) {
            *d = g * x;
        }
        for (d, x) in dv.row_mut(r).iter_mut().zip(u.row(r)) {
            *d = g * x;
        }
    }
    Ok((du, dv))
}
