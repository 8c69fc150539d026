//! Dense complex linear algebra: storage conventions, BLAS/LAPACK-backed
//! kernels, and the matrix exponential with its Frechet derivative.
//!
//! Matrices are `ndarray::Array2<Complex64>` in standard (row-major) layout.
//! BLAS and LAPACK see the same buffers as column-major transposes; the
//! wrappers in [`blas`] handle that mapping so callers never think about it.

mod blas;
mod expm;

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub use blas::{eigh, eigvals, lu_factor, matmul, matmul_into, matvec, set_blas_threads, solve, LuFactor};
pub use expm::{expm, expm_frechet, expm_frechet_dir};

/// Dense complex matrix, row-major.
pub type CMat = Array2<Complex64>;
/// Dense complex vector.
pub type CVec = Array1<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn identity(n: usize) -> CMat {
    CMat::eye(n)
}

/// Maximum absolute column sum (induced 1-norm).
pub fn one_norm(a: &CMat) -> f64 {
    let (rows, cols) = a.dim();
    let mut sums = vec![0.0f64; cols];
    for i in 0..rows {
        let row = a.row(i);
        for (j, z) in row.iter().enumerate() {
            sums[j] += z.norm();
        }
    }
    sums.into_iter().fold(0.0, f64::max)
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Conjugate transpose, returned in standard layout.
pub fn dagger(a: &CMat) -> CMat {
    let mut out = CMat::zeros((a.ncols(), a.nrows()));
    for ((i, j), z) in a.indexed_iter() {
        out[(j, i)] = z.conj();
    }
    out
}

/// (a + a^dagger) / 2.
pub fn hermitize(a: &CMat) -> CMat {
    let mut out = dagger(a);
    out.zip_mut_with(a, |h, &z| *h = 0.5 * (*h + z));
    out
}

/// Largest absolute deviation from Hermiticity, max_ij |a_ij - conj(a_ji)|.
pub fn hermiticity_deviation(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Errors with the position of the first non-finite entry, if any.
pub fn check_finite(a: &CMat) -> Result<()> {
    for ((i, j), z) in a.indexed_iter() {
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::NonFinite { row: i, col: j });
        }
    }
    Ok(())
}

pub(crate) fn check_square(a: &CMat, what: &str) -> Result<usize> {
    let (r, c) = a.dim();
    if r != c {
        return Err(Error::ShapeMismatch(format!("{what}: expected square, got {r}x{c}")));
    }
    if r == 0 {
        return Err(Error::ShapeMismatch(format!("{what}: empty matrix")));
    }
    Ok(r)
}

pub(crate) fn check_hermitian(a: &CMat, what: &str) -> Result<usize> {
    let n = check_square(a, what)?;
    let dev = hermiticity_deviation(a);
    let tol = 1e-12 * max_abs(a).max(1.0);
    if dev > tol {
        return Err(Error::NotHermitian { deviation: dev, tol });
    }
    Ok(n)
}

/// Kronecker product; index convention
/// `out[(i*p + k, j*q + l)] = a[(i, j)] * b[(k, l)]` for `b` of shape `(p, q)`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (m, n) = a.dim();
    let (p, q) = b.dim();
    let mut out = CMat::zeros((m * p, n * q));
    for i in 0..m {
        for j in 0..n {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            let mut block = out.slice_mut(ndarray::s![i * p..(i + 1) * p, j * q..(j + 1) * q]);
            block.zip_mut_with(b, |o, &z| *o = aij * z);
        }
    }
    out
}

/// Frobenius norm.
pub fn fro_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
