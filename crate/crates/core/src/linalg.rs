//! Small dense symmetric matrix helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{LegopError, Result};

pub type Mat = DMatrix<f64>;

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
/// Column `k` of the returned matrix is the eigenvector of `values[k]`.
pub fn sym_eigen(m: &Mat) -> (Vec<f64>, Mat) {
    let sym = symmetrize(m);
    let eig = sym.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigenvalues only, ascending.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    let mut v: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Rebuilds `V diag(values) Vᵀ`.
pub fn from_eigen(values: &[f64], vectors: &Mat) -> Mat {
    let d = DVector::from_column_slice(values);
    let scaled = vectors * Mat::from_diagonal(&d);
    symmetrize(&(scaled * vectors.transpose()))
}

/// Checks symmetry to `1e-10` relative and eigenvalues `>= -1e-10 * max`.
pub fn check_psd(m: &Mat) -> Result<()> {
    if !m.is_square() {
        return Err(LegopError::InvalidMatrix(format!("expected square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(LegopError::InvalidMatrix("non-finite entry".into()));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(LegopError::InvalidMatrix(format!("not symmetric (|A - Aᵀ| = {asym:e})")));
    }
    let vals = sym_eigenvalues(m);
    let top = vals.last().copied().unwrap_or(0.0).max(0.0);
    if vals.first().is_some_and(|&lo| lo < -1e-10 * top.max(scale * 1e-300)) {
        return Err(LegopError::InvalidMatrix(format!(
            "not positive semidefinite (smallest eigenvalue {:e})",
            vals[0]
        )));
    }
    Ok(())
}

/// Requires a symmetric positive definite matrix.
pub fn check_pd(m: &Mat) -> Result<()> {
    check_psd(m)?;
    let vals = sym_eigenvalues(m);
    if vals.first().is_none_or(|&lo| lo <= 0.0) {
        return Err(LegopError::Singular);
    }
    Ok(())
}

/// Pseudo-inverse spectrum: `1/λ` for eigenvalues above `1e-12 * λ_max`, zero
/// otherwise, returned ascending.
pub fn pinv_eigenvalues(values: &[f64]) -> Vec<f64> {
    let top = values.iter().copied().fold(0.0_f64, f64::max);
    let mut out: Vec<f64> = values.iter().map(|&v| if top > 0.0 && v > 1e-12 * top { 1.0 / v } else { 0.0 }).collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Inverse of a symmetric PSD matrix after adding `rel_jitter * trace` to the
/// diagonal. Returns `None` when the result is not finite.
pub fn inverse_with_jitter(m: &Mat, rel_jitter: f64) -> Option<Mat> {
    let n = m.nrows();
    let jitter = rel_jitter * m.trace().abs();
    let a = symmetrize(m) + Mat::identity(n, n) * jitter;
    let inv = match a.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => a.try_inverse()?,
    };
    let inv = symmetrize(&inv);
    inv.iter().all(|v| v.is_finite()).then_some(inv)
}

/// Principal square root of a PSD matrix; negative rounding noise is clipped.
pub fn psd_sqrt(m: &Mat) -> Mat {
    let (vals, vecs) = sym_eigen(m);
    let roots: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
    from_eigen(&roots, &vecs)
}

/// Quadratic form `vᵀ M v`.
pub fn quad_form(m: &Mat, v: &[f64]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for a in 0..n {
        let mut row = 0.0;
        for b in 0..n {
            row += m[(a, b)] * v[b];
        }
        acc += v[a] * row;
    }
    acc
}

/// Row-major flattening, used for serialization.
pub fn to_row_major(m: &Mat) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

pub fn from_row_major(dim: usize, data: &[f64]) -> Result<Mat> {
    if data.len() != dim * dim {
        return Err(LegopError::DimensionMismatch { expected: dim * dim, found: data.len() });
    }
    Ok(Mat::from_row_slice(dim, dim, data))
}

/// Orthonormal basis of the complement of `v` (Gram-Schmidt on the standard basis).
pub fn orthonormal_complement(v: &[f64]) -> Vec<Vec<f64>> {
    let d = v.len();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut basis: Vec<Vec<f64>> = vec![v.iter().map(|x| x / norm).collect()];
    for k in 0..d {
        let mut e = vec![0.0; d];
        e[k] = 1.0;
        for b in &basis {
            let p: f64 = e.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in e.iter_mut().zip(b) {
                *x -= p * y;
            }
        }
        let n = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            e.iter_mut().for_each(|x| *x /= n);
            basis.push(e);
        }
        if basis.len() == d {
            break;
        }
    }
    basis.remove(0);
    basis
}
