//! Safe wrappers over the system BLAS/LAPACK (OpenBLAS).
//!
//! Buffers are row-major; BLAS sees them as column-major transposes. Products
//! use C^T = B^T A^T, solves factor A^T once and back-substitute with the
//! transpose flag, and Hermitian eigenproblems exploit A^T = conj(A).

use ndarray::Array1;
use num_complex::Complex64;

use super::{check_hermitian, check_square, CMat};
use crate::error::{Error, Result};

type C64 = Complex64;

extern "C" {
    fn openblas_set_num_threads(n: i32);
    fn zgemm_(
        transa: *const u8,
        transb: *const u8,
        m: *const i32,
        n: *const i32,
        k: *const i32,
        alpha: *const C64,
        a: *const C64,
        lda: *const i32,
        b: *const C64,
        ldb: *const i32,
        beta: *const C64,
        c: *mut C64,
        ldc: *const i32,
    );
    fn zgetrf_(m: *const i32, n: *const i32, a: *mut C64, lda: *const i32, ipiv: *mut i32, info: *mut i32);
    fn zgetrs_(
        trans: *const u8,
        n: *const i32,
        nrhs: *const i32,
        a: *const C64,
        lda: *const i32,
        ipiv: *const i32,
        b: *mut C64,
        ldb: *const i32,
        info: *mut i32,
    );
    fn zheev_(
        jobz: *const u8,
        uplo: *const u8,
        n: *const i32,
        a: *mut C64,
        lda: *const i32,
        w: *mut f64,
        work: *mut C64,
        lwork: *const i32,
        rwork: *mut f64,
        info: *mut i32,
    );
    fn zgeev_(
        jobvl: *const u8,
        jobvr: *const u8,
        n: *const i32,
        a: *mut C64,
        lda: *const i32,
        w: *mut C64,
        vl: *mut C64,
        ldvl: *const i32,
        vr: *mut C64,
        ldvr: *const i32,
        work: *mut C64,
        lwork: *const i32,
        rwork: *mut f64,
        info: *mut i32,
    );
}

/// Caps the OpenBLAS thread pool. The numerics are deterministic for a fixed
/// thread count; pinning it makes runs reproducible across invocations.
pub fn set_blas_threads(n: usize) {
    unsafe { openblas_set_num_threads(n.max(1) as i32) }
}

fn dim_i32(n: usize) -> i32 {
    i32::try_from(n).expect("matrix dimension exceeds i32")
}

/// Contiguous row-major slice of `a`, copying only if the layout is not standard.
fn std_buf(a: &CMat) -> std::borrow::Cow<'_, [C64]> {
    match a.as_slice() {
        Some(s) => std::borrow::Cow::Borrowed(s),
        None => std::borrow::Cow::Owned(a.iter().copied().collect()),
    }
}

/// c = alpha * a b + beta * c.
pub fn matmul_into(alpha: C64, a: &CMat, b: &CMat, beta: C64, c: &mut CMat) {
    let (m, k) = a.dim();
    let (k2, n) = b.dim();
    assert_eq!(k, k2, "matmul: inner dimensions {k} vs {k2}");
    assert_eq!(c.dim(), (m, n), "matmul: output shape");
    let (mi, ni, ki) = (dim_i32(m), dim_i32(n), dim_i32(k));
    let ab = std_buf(a);
    let bb = std_buf(b);
    let cb = c.as_slice_mut().expect("matmul: output must be standard layout");
    // Column-major view: C^T (n x m) = B^T (n x k) * A^T (k x m).
    unsafe {
        zgemm_(
            b"N".as_ptr(),
            b"N".as_ptr(),
            &ni,
            &mi,
            &ki,
            &alpha,
            bb.as_ptr(),
            &ni,
            ab.as_ptr(),
            &ki,
            &beta,
            cb.as_mut_ptr(),
            &ni,
        );
    }
}

pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    let mut c = CMat::zeros((a.nrows(), b.ncols()));
    matmul_into(C64::new(1.0, 0.0), a, b, C64::new(0.0, 0.0), &mut c);
    c
}

pub fn matvec(a: &CMat, x: &Array1<C64>) -> Array1<C64> {
    assert_eq!(a.ncols(), x.len(), "matvec: {:?} vs {}", a.dim(), x.len());
    let xm = x.view().insert_axis(ndarray::Axis(1)).to_owned();
    let y = matmul(a, &xm);
    y.index_axis(ndarray::Axis(1), 0).to_owned()
}

/// LU factorization with partial pivoting, reusable across solves.
pub struct LuFactor {
    // LAPACK factors of A^T in a row-major buffer of A's shape.
    lu: CMat,
    ipiv: Vec<i32>,
    n: usize,
}

pub fn lu_factor(a: &CMat) -> Result<LuFactor> {
    let n = check_square(a, "lu_factor")?;
    let mut lu = a.as_standard_layout().into_owned();
    let mut ipiv = vec![0i32; n];
    let ni = dim_i32(n);
    let mut info = 0i32;
    unsafe {
        zgetrf_(&ni, &ni, lu.as_slice_mut().unwrap().as_mut_ptr(), &ni, ipiv.as_mut_ptr(), &mut info);
    }
    if info < 0 {
        return Err(Error::Lapack { routine: "zgetrf", info });
    }
    if info > 0 {
        return Err(Error::SingularSystem);
    }
    Ok(LuFactor { lu, ipiv, n })
}

impl LuFactor {
    /// Solves A X = B for matrix B with columns as right-hand sides.
    pub fn solve_mat(&self, b: &CMat) -> Result<CMat> {
        if b.nrows() != self.n {
            return Err(Error::ShapeMismatch(format!(
                "solve: rhs has {} rows, system is {}x{}",
                b.nrows(),
                self.n,
                self.n
            )));
        }
        let nrhs = b.ncols();
        // Row-major B^T doubles as column-major B.
        let mut bt = b.t().as_standard_layout().into_owned();
        let (ni, nrhsi) = (dim_i32(self.n), dim_i32(nrhs));
        let mut info = 0i32;
        unsafe {
            // The stored factors are of A^T, so the transpose solve yields A X = B.
            zgetrs_(
                b"T".as_ptr(),
                &ni,
                &nrhsi,
                self.lu.as_slice().unwrap().as_ptr(),
                &ni,
                self.ipiv.as_ptr(),
                bt.as_slice_mut().unwrap().as_mut_ptr(),
                &ni,
                &mut info,
            );
        }
        if info != 0 {
            return Err(Error::Lapack { routine: "zgetrs", info });
        }
        Ok(bt.reversed_axes().as_standard_layout().into_owned())
    }

    pub fn solve_vec(&self, b: &Array1<C64>) -> Result<Array1<C64>> {
        let col = CMat::from_shape_vec((b.len(), 1), b.to_vec())
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let x = self.solve_mat(&col)?;
        Ok(x.column(0).to_owned())
    }
}

/// Solves A X = B.
pub fn solve(a: &CMat, b: &CMat) -> Result<CMat> {
    lu_factor(a)?.solve_mat(b)
}

/// Eigendecomposition of a Hermitian matrix: `a = U diag(w) U^dagger` with
/// eigenvalues ascending and eigenvectors in the columns of `U`.
pub fn eigh(a: &CMat) -> Result<(Array1<f64>, CMat)> {
    let n = check_hermitian(a, "eigh")?;
    // Row-major A doubles as column-major conj(A); conj(A) has the same
    // (real) spectrum and conjugated eigenvectors.
    let mut buf = a.as_standard_layout().into_owned();
    let mut w = vec![0.0f64; n];
    let mut rwork = vec![0.0f64; 3 * n.max(1)];
    let ni = dim_i32(n);
    let mut info = 0i32;
    let mut query = [C64::new(0.0, 0.0)];
    let m1 = -1i32;
    unsafe {
        zheev_(
            b"V".as_ptr(),
            b"L".as_ptr(),
            &ni,
            buf.as_slice_mut().unwrap().as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            query.as_mut_ptr(),
            &m1,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack { routine: "zheev", info });
    }
    let lwork = query[0].re as i32;
    let mut work = vec![C64::new(0.0, 0.0); lwork.max(1) as usize];
    unsafe {
        zheev_(
            b"V".as_ptr(),
            b"L".as_ptr(),
            &ni,
            buf.as_slice_mut().unwrap().as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack { routine: "zheev", info });
    }
    // Rows of the returned buffer are eigenvectors of conj(A); conjugating and
    // transposing puts A's eigenvectors into columns.
    let u = buf.mapv(|z| z.conj()).reversed_axes().as_standard_layout().into_owned();
    Ok((Array1::from_vec(w), u))
}

/// Eigenvalues of a general square matrix (unordered).
pub fn eigvals(a: &CMat) -> Result<Array1<C64>> {
    let n = check_square(a, "eigvals")?;
    let mut buf = a.as_standard_layout().into_owned();
    let mut w = vec![C64::new(0.0, 0.0); n];
    let mut rwork = vec![0.0f64; 2 * n.max(1)];
    let ni = dim_i32(n);
    let mut info = 0i32;
    let mut query = [C64::new(0.0, 0.0)];
    let m1 = -1i32;
    let mut vdummy = [C64::new(0.0, 0.0)];
    let one = 1i32;
    unsafe {
        zgeev_(
            b"N".as_ptr(),
            b"N".as_ptr(),
            &ni,
            buf.as_slice_mut().unwrap().as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            vdummy.as_mut_ptr(),
            &one,
            vdummy.as_mut_ptr(),
            &one,
            query.as_mut_ptr(),
            &m1,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack { routine: "zgeev", info });
    }
    let lwork = query[0].re as i32;
    let mut work = vec![C64::new(0.0, 0.0); lwork.max(1) as usize];
    unsafe {
        zgeev_(
            b"N".as_ptr(),
            b"N".as_ptr(),
            &ni,
            buf.as_slice_mut().unwrap().as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            vdummy.as_mut_ptr(),
            &one,
            vdummy.as_mut_ptr(),
            &one,
            work.as_mut_ptr(),
            &lwork,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack { routine: "zgeev", info });
    }
    Ok(Array1::from_vec(w))
}
