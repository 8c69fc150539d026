//! State space of a few-level ion coupled to one truncated motional mode,
//! plus the standard operators on it.
//!
//! The composite Hilbert space is ordered internal (x) motional: basis index
//! `p * fock_dim + m` for internal level `p` and Fock state `m`. Truncation
//! at `fock_dim` Fock states is the only approximation introduced here.

use ndarray::Array1;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{check_finite, eigh, hermiticity_deviation, kron, CMat};

/// Dimensions of the composite space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpaceSpec {
    pub internal_dim: usize,
    pub fock_dim: usize,
}

impl SpaceSpec {
    pub fn new(internal_dim: usize, fock_dim: usize) -> Result<Self> {
        if !(2..=4).contains(&internal_dim) {
            return Err(Error::InvalidParam(format!(
                "internal_dim must be 2, 3, or 4, got {internal_dim}"
            )));
        }
        if fock_dim < 2 {
            return Err(Error::InvalidParam(format!("fock_dim must be at least 2, got {fock_dim}")));
        }
        Ok(SpaceSpec { internal_dim, fock_dim })
    }

    pub fn total_dim(&self) -> usize {
        self.internal_dim * self.fock_dim
    }

    /// Composite basis index of internal level `p`, Fock state `m`.
    pub fn index(&self, p: usize, m: usize) -> usize {
        debug_assert!(p < self.internal_dim && m < self.fock_dim);
        p * self.fock_dim + m
    }
}

/// Annihilation operator on a `d`-dimensional Fock space:
/// `a[(m-1, m)] = sqrt(m)`.
pub fn annihilator(d: usize) -> CMat {
    let mut a = CMat::zeros((d, d));
    for m in 1..d {
        a[(m - 1, m)] = Complex64::new((m as f64).sqrt(), 0.0);
    }
    a
}

/// Number operator `a^dagger a = diag(0, 1, ..., d-1)`.
pub fn number_op(d: usize) -> CMat {
    let mut n = CMat::zeros((d, d));
    for m in 0..d {
        n[(m, m)] = Complex64::new(m as f64, 0.0);
    }
    n
}

/// Dimensionless position quadrature `x = a + a^dagger`.
pub fn position_op(d: usize) -> CMat {
    let a = annihilator(d);
    let mut x = crate::linalg::dagger(&a);
    x.zip_mut_with(&a, |o, &z| *o += z);
    x
}

/// Internal-level transition operator `|i><j|` on an `n`-level system.
pub fn level_op(n: usize, i: usize, j: usize) -> CMat {
    assert!(i < n && j < n, "level_op: indices ({i}, {j}) out of range for {n} levels");
    let mut op = CMat::zeros((n, n));
    op[(i, j)] = Complex64::new(1.0, 0.0);
    op
}

/// Lifts `internal (x) motional` operator factors to the composite space.
pub fn embed(op_int: &CMat, op_mot: &CMat, space: &SpaceSpec) -> Result<CMat> {
    if op_int.dim() != (space.internal_dim, space.internal_dim) {
        return Err(Error::ShapeMismatch(format!(
            "embed: internal factor is {:?}, space has {} levels",
            op_int.dim(),
            space.internal_dim
        )));
    }
    if op_mot.dim() != (space.fock_dim, space.fock_dim) {
        return Err(Error::ShapeMismatch(format!(
            "embed: motional factor is {:?}, space has {} Fock states",
            op_mot.dim(),
            space.fock_dim
        )));
    }
    Ok(kron(op_int, op_mot))
}

/// Density matrix: Hermitian with unit trace, validated at construction.
///
/// Positivity is not enforced here: states evolved in a truncated Fock space
/// can acquire eigenvalues a few ulps below zero. Tests bound
/// [`DensityMatrix::min_eigenvalue`] instead.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    mat: CMat,
}

const HERM_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;

impl DensityMatrix {
    pub fn new(mat: CMat) -> Result<Self> {
        let n = mat.nrows();
        if mat.ncols() != n || n == 0 {
            return Err(Error::ShapeMismatch(format!("density matrix must be square, got {:?}", mat.dim())));
        }
        check_finite(&mat)?;
        let dev = hermiticity_deviation(&mat);
        if dev > HERM_TOL {
            return Err(Error::NotHermitian { deviation: dev, tol: HERM_TOL });
        }
        let tr = trace(&mat);
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}, expected 1")));
        }
        Ok(DensityMatrix { mat })
    }

    /// Pure state `|k><k|` on a `dim`-dimensional space.
    pub fn pure(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::InvalidParam(format!("pure state index {k} out of range for dim {dim}")));
        }
        let mut m = CMat::zeros((dim, dim));
        m[(k, k)] = Complex64::new(1.0, 0.0);
        Ok(DensityMatrix { mat: m })
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        trace(&self.mat)
    }

    /// Smallest eigenvalue; negative values beyond truncation noise indicate
    /// an unphysical state.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let symm = crate::linalg::hermitize(&self.mat);
        let (w, _) = eigh(&symm)?;
        Ok(w[0])
    }

    /// Diagonal populations (real parts).
    pub fn populations(&self) -> Array1<f64> {
        Array1::from_iter((0..self.dim()).map(|k| self.mat[(k, k)].re))
    }
}

pub fn trace(a: &CMat) -> Complex64 {
    let mut t = Complex64::new(0.0, 0.0);
    for k in 0..a.nrows().min(a.ncols()) {
        t += a[(k, k)];
    }
    t
}

/// Thermal (geometric) motional state with mean occupation `nbar0`,
/// renormalized over the `d`-state truncation:
/// `p_m ~ (nbar0 / (1 + nbar0))^m`.
pub fn thermal_state(nbar0: f64, d: usize) -> Result<DensityMatrix> {
    if !nbar0.is_finite() || nbar0 < 0.0 {
        return Err(Error::InvalidParam(format!("nbar0 must be finite and >= 0, got {nbar0}")));
    }
    if d < 2 {
        return Err(Error::InvalidParam(format!("fock_dim must be at least 2, got {d}")));
    }
    let mut m = CMat::zeros((d, d));
    if nbar0 == 0.0 {
        m[(0, 0)] = Complex64::new(1.0, 0.0);
        return Ok(DensityMatrix { mat: m });
    }
    let r = nbar0 / (1.0 + nbar0);
    let mut weights = Vec::with_capacity(d);
    let mut w = 1.0f64;
    let mut total = 0.0f64;
    for _ in 0..d {
        weights.push(w);
        total += w;
        w *= r;
    }
    for (k, wk) in weights.into_iter().enumerate() {
        m[(k, k)] = Complex64::new(wk / total, 0.0);
    }
    Ok(DensityMatrix { mat: m })
}

/// Mean occupation of a thermal state after truncation; the target of the
/// cooling loss at `t = 0`.
pub fn truncated_thermal_mean(nbar0: f64, d: usize) -> Result<f64> {
    let th = thermal_state(nbar0, d)?;
    let mut mean = 0.0;
    for m in 0..d {
        mean += m as f64 * th.mat[(m, m)].re;
    }
    Ok(mean)
}

/// Composite initial state: internal level `level` (pure) with a thermal
/// motional distribution.
pub fn initial_state(level: usize, nbar0: f64, space: &SpaceSpec) -> Result<DensityMatrix> {
    if level >= space.internal_dim {
        return Err(Error::InvalidParam(format!(
            "initial level {level} out of range for {} internal levels",
            space.internal_dim
        )));
    }
    let internal = level_op(space.internal_dim, level, level);
    let motional = thermal_state(nbar0, space.fock_dim)?;
    DensityMatrix::new(kron(&internal, motional.mat()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dagger, matmul, max_abs as linalg_max_abs};

    #[test]
    fn annihilator_two_levels() {
        let a = annihilator(2);
        assert_eq!(a[(0, 1)], Complex64::new(1.0, 0.0));
        assert_eq!(a[(0, 0)], Complex64::new(0.0, 0.0));
        assert_eq!(a[(1, 0)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn number_operator_from_annihilator() {
        let d = 10;
        let a = annihilator(d);
        let n = matmul(&dagger(&a), &a);
        for m in 0..d {
            assert!((n[(m, m)].re - m as f64).abs() < 1e-14);
        }
        let diff = &n - &number_op(d);
        assert!(linalg_max_abs(&diff.to_owned()) < 1e-14);
    }

    #[test]
    fn position_spectrum_is_sign_symmetric() {
        let x = position_op(10);
        let (w, _) = eigh(&x).unwrap();
        for k in 0..10 {
            assert!((w[k] + w[9 - k]).abs() < 1e-10, "spectrum not symmetric about 0");
        }
    }

    #[test]
    fn level_op_composition() {
        let p = matmul(&level_op(4, 3, 2), &level_op(4, 2, 1));
        let diff = &p - &level_op(4, 3, 1);
        assert!(linalg_max_abs(&diff.to_owned()) < 1e-15);
        let z = matmul(&level_op(4, 3, 2), &level_op(4, 1, 0));
        assert!(linalg_max_abs(&z) < 1e-15);
    }

    #[test]
    fn embed_number_operator() {
        let space = SpaceSpec::new(2, 3).unwrap();
        let full = embed(&level_op(2, 1, 1), &number_op(3), &space).unwrap();
        assert_eq!(full.dim(), (6, 6));
        assert_eq!(full[(space.index(1, 2), space.index(1, 2))], Complex64::new(2.0, 0.0));
        assert_eq!(full[(space.index(0, 2), space.index(0, 2))], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn embed_rejects_wrong_shapes() {
        let space = SpaceSpec::new(2, 3).unwrap();
        assert!(embed(&number_op(3), &number_op(3), &space).is_err());
    }

    #[test]
    fn thermal_matches_closed_form() {
        // nbar0 = 1, d = 10: ground population 0.5 / (1 - 2^-10), mean 0.99022.
        let th = thermal_state(1.0, 10).unwrap();
        let p0 = th.mat()[(0, 0)].re;
        assert!((p0 - 0.5 / (1.0 - 2f64.powi(-10))).abs() < 1e-14);
        assert!((p0 - 0.500489).abs() < 1e-6);
        let mean = truncated_thermal_mean(1.0, 10).unwrap();
        assert!((mean - 0.99022).abs() < 1e-5);
        assert!((th.trace().re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn thermal_zero_temperature_is_ground() {
        let th = thermal_state(0.0, 8).unwrap();
        assert_eq!(th.mat()[(0, 0)], Complex64::new(1.0, 0.0));
        assert!((th.trace().re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn thermal_populations_decrease() {
        let th = thermal_state(3.0, 30).unwrap();
        let p = th.populations();
        for m in 1..30 {
            assert!(p[m] < p[m - 1]);
        }
    }

    #[test]
    fn density_matrix_rejects_bad_trace() {
        let mut m = CMat::zeros((2, 2));
        m[(0, 0)] = Complex64::new(0.7, 0.0);
        assert!(DensityMatrix::new(m).is_err());
    }

    #[test]
    fn density_matrix_rejects_non_hermitian() {
        let mut m = CMat::zeros((2, 2));
        m[(0, 0)] = Complex64::new(1.0, 0.0);
        m[(0, 1)] = Complex64::new(0.1, 0.0);
        assert!(matches!(DensityMatrix::new(m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn initial_state_lives_on_chosen_level() {
        let space = SpaceSpec::new(3, 4).unwrap();
        let rho = initial_state(0, 0.5, &space).unwrap();
        let p = rho.populations();
        let ground_block: f64 = (0..4).map(|m| p[space.index(0, m)]).sum();
        assert!((ground_block - 1.0).abs() < 1e-12);
        assert!(rho.min_eigenvalue().unwrap() > -1e-12);
    }

    #[test]
    fn space_spec_validation() {
        assert!(SpaceSpec::new(1, 10).is_err());
        assert!(SpaceSpec::new(5, 10).is_err());
        assert!(SpaceSpec::new(2, 1).is_err());
        assert!(SpaceSpec::new(4, 2).is_ok());
    }
}
