//! Vectorized Lindblad calculus: superoperators on the space of density
//! matrices, recoil-averaged spontaneous-emission dissipators, and the
//! steady-state solver.
//!
//! Vectorization is column-stacking: `vec(m)[i + j*n] = m[i, j]`, so the
//! identity `vec(A X B) = (B^T kron A) vec(X)` holds with the first Kronecker
//! factor acting on the column index.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hilbert::{position_op, trace, DensityMatrix, SpaceSpec};
use crate::linalg::{
    dagger, eigh, fro_norm, hermiticity_deviation, hermitize, kron, lu_factor, matmul, matvec,
    max_abs, one_norm, CMat, CVec, I, ONE,
};

/// Column-stacked vector of a matrix.
pub fn vec(m: &CMat) -> CVec {
    let (r, c) = m.dim();
    CVec::from_shape_fn(r * c, |k| m[(k % r, k / r)])
}

/// Inverse of [`vec`] for an `r x c` matrix.
pub fn unvec(v: &CVec, r: usize, c: usize) -> Result<CMat> {
    if v.len() != r * c {
        return Err(Error::ShapeMismatch(format!(
            "unvec: vector of length {} cannot fill a {r} x {c} matrix",
            v.len()
        )));
    }
    Ok(CMat::from_shape_fn((r, c), |(i, j)| v[i + j * r]))
}

/// Dense superoperator acting on column-stacked density matrices of a
/// composite space.
///
/// Assembled Lindbladians satisfy two testable invariants: the left trace
/// vector is null (`trace_residual` small) and no eigenvalue has a positive
/// real part beyond roundoff. Intermediate pieces (a Hamiltonian commutator,
/// a single dissipator, a parameter-derivative generator) satisfy the first
/// but are not by themselves generators of a contraction semigroup.
#[derive(Debug, Clone)]
pub struct Superoperator {
    pub space: SpaceSpec,
    pub matrix: CMat,
}

impl Superoperator {
    pub fn zeros(space: SpaceSpec) -> Self {
        let nn = space.total_dim() * space.total_dim();
        Superoperator { space, matrix: CMat::zeros((nn, nn)) }
    }

    /// Side length of `matrix`, i.e. `total_dim()` squared.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `self += alpha * other`. Panics on space mismatch; that is a
    /// programming error, not a data error.
    pub fn add_scaled(&mut self, alpha: f64, other: &Superoperator) {
        assert_eq!(self.space, other.space, "superoperator space mismatch");
        self.matrix.scaled_add(Complex64::new(alpha, 0.0), &other.matrix);
    }

    pub fn scale(&mut self, alpha: f64) {
        self.matrix.mapv_inplace(|z| z * alpha);
    }

    /// Applies the superoperator to a column-stacked state.
    pub fn apply(&self, v: &CVec) -> CVec {
        matvec(&self.matrix, v)
    }

    /// Max-norm of `vec(I)^dagger * matrix`; zero for any map that preserves
    /// the trace, so this bounds the trace drift rate of the generated flow.
    pub fn trace_residual(&self) -> f64 {
        let n = self.space.total_dim();
        let nn = n * n;
        let mut worst = 0.0f64;
        for col in 0..nn {
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..n {
                s += self.matrix[(k * (n + 1), col)];
            }
            worst = worst.max(s.norm());
        }
        worst
    }
}

/// Superoperator of the commutator, `rho -> -i [h, rho]`.
pub fn hamiltonian_part(h: &CMat, space: &SpaceSpec) -> Result<Superoperator> {
    let n = space.total_dim();
    if h.dim() != (n, n) {
        return Err(Error::ShapeMismatch(format!(
            "hamiltonian_part: operator is {:?}, space dimension is {n}",
            h.dim()
        )));
    }
    let dev = hermiticity_deviation(h);
    let tol = 1e-10 * max_abs(h).max(1.0);
    if dev > tol {
        return Err(Error::NotHermitian { deviation: dev, tol });
    }
    let mut sup = Superoperator::zeros(*space);
    // -i (I kron h): block-diagonal copies of h over the column index.
    for j in 0..n {
        for i in 0..n {
            for k in 0..n {
                let hv = h[(i, k)];
                if hv != Complex64::new(0.0, 0.0) {
                    sup.matrix[(j * n + i, j * n + k)] -= I * hv;
                }
            }
        }
    }
    // +i (h^T kron I): couples column indices, diagonal in the row index.
    for j in 0..n {
        for l in 0..n {
            let hv = h[(l, j)];
            if hv != Complex64::new(0.0, 0.0) {
                for i in 0..n {
                    sup.matrix[(j * n + i, l * n + i)] += I * hv;
                }
            }
        }
    }
    Ok(sup)
}

/// Angular distribution of spontaneous emission relative to the trap axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DipolePattern {
    /// Weight (3/4)(1 + cos^2 theta); pi transitions.
    Parallel,
    /// Weight (3/2)(1 - cos^2 theta); sigma transitions.
    Perpendicular,
}

/// Closed form of `f(mu) = integral over c in [-1, 1] of w(c) exp(i mu c)`,
/// the recoil average of the momentum-kick phases. Real, even in `mu`, and
/// `f(0) = 2` for both normalized patterns.
pub fn recoil_kernel(mu: f64, pattern: DipolePattern) -> f64 {
    let m2 = mu * mu;
    if mu.abs() < 0.5 {
        // The closed forms divide by mu^3 and lose roughly eps/mu^2 digits
        // to cancellation; below 0.5 sum the moment series
        //   f(mu) = sum_j (-1)^j mu^(2j)/(2j)! * integral of w(c) c^(2j)
        // instead, which converges to full precision in a few terms.
        let mut total = 0.0;
        let mut pow = 1.0;
        for j in 0..25u32 {
            let odd = (2 * j + 1) as f64;
            let moment = match pattern {
                DipolePattern::Parallel => 1.5 * (1.0 / odd + 1.0 / (odd + 2.0)),
                DipolePattern::Perpendicular => 3.0 * (1.0 / odd - 1.0 / (odd + 2.0)),
            };
            let term = pow * moment;
            total += term;
            if term.abs() < 1e-18 {
                break;
            }
            pow *= -m2 / (odd * (odd + 1.0));
        }
        return total;
    }
    let s = mu.sin();
    let c = mu.cos();
    let sinc = s / mu;
    let core = ((m2 - 2.0) * s + 2.0 * mu * c) / (m2 * mu);
    match pattern {
        DipolePattern::Parallel => 1.5 * (sinc + core),
        DipolePattern::Perpendicular => 3.0 * (sinc - core),
    }
}

/// One spontaneous-emission decay path `upper -> lower` with its recoil
/// geometry.
#[derive(Debug, Clone, Copy)]
pub struct RecoilChannel {
    pub lower: usize,
    pub upper: usize,
    /// Decay rate in trap-frequency units.
    pub rate: f64,
    /// Lamb-Dicke parameter entering the recoil kernel argument.
    pub lamb_dicke: f64,
    pub pattern: DipolePattern,
}

impl RecoilChannel {
    fn validate(&self, space: &SpaceSpec) -> Result<()> {
        if self.lower == self.upper {
            return Err(Error::InvalidParam("recoil channel must connect distinct levels".into()));
        }
        if self.lower >= space.internal_dim || self.upper >= space.internal_dim {
            return Err(Error::InvalidParam(format!(
                "recoil channel levels ({}, {}) out of range for {} internal levels",
                self.lower, self.upper, space.internal_dim
            )));
        }
        if !(self.rate > 0.0) || !self.rate.is_finite() {
            return Err(Error::InvalidParam(format!("decay rate must be positive, got {}", self.rate)));
        }
        if !self.lamb_dicke.is_finite() {
            return Err(Error::InvalidParam("Lamb-Dicke parameter must be finite".into()));
        }
        Ok(())
    }
}

/// Dissipator of one recoil-averaged decay channel.
///
/// Gain: the motional block of `|lower><upper| rho |upper><lower|` is taken
/// to the eigenbasis of `x = a + a^dagger` (`x = U L U^dagger`), multiplied
/// entrywise by `F[m, k] = f(eta (l_m - l_k))`, transformed back, and scaled
/// by `rate / 2`. Loss: `-(rate/2) {|upper><upper|, rho}`. At `eta = 0` the
/// kernel is identically 2 and the channel reduces to plain amplitude
/// damping at `rate`.
pub fn recoil_dissipator(channel: &RecoilChannel, space: &SpaceSpec) -> Result<Superoperator> {
    channel.validate(space)?;
    let d = space.fock_dim;
    let n = space.total_dim();
    let (lam, u) = eigh(&position_op(d))?;

    // Motional gain map in vectorized form:
    //   M = (conj(U) kron U) diag(g) (conj(U) kron U)^dagger,
    // g[k*d + m] = F[m, k]. F is real symmetric (kernels are even), so M is
    // Hermitian and the gain map preserves Hermiticity.
    let uc = u.mapv(|z| z.conj());
    let w = kron(&uc, &u);
    let mut wg = w.clone();
    for k in 0..d {
        for m in 0..d {
            let f = recoil_kernel(channel.lamb_dicke * (lam[m] - lam[k]), channel.pattern);
            let g = k * d + m;
            for row in 0..d * d {
                wg[(row, g)] *= f;
            }
        }
    }
    let gain_mot = matmul(&wg, &dagger(&w));

    let half_rate = channel.rate / 2.0;
    let mut sup = Superoperator::zeros(*space);
    let lo = channel.lower * d;
    let up = channel.upper * d;
    for np in 0..d {
        for mp in 0..d {
            let row = (lo + mp) + (lo + np) * n;
            for nc in 0..d {
                for mc in 0..d {
                    let col = (up + mc) + (up + nc) * n;
                    sup.matrix[(row, col)] = gain_mot[(np * d + mp, nc * d + mc)] * half_rate;
                }
            }
        }
    }
    // Anticommutator loss is diagonal in the vec basis: the projector on the
    // upper level is diagonal in the composite basis.
    for q in 0..n {
        for p in 0..n {
            let mut hits = 0.0;
            if p / d == channel.upper {
                hits += 1.0;
            }
            if q / d == channel.upper {
                hits += 1.0;
            }
            if hits != 0.0 {
                let k = p + q * n;
                sup.matrix[(k, k)] -= Complex64::new(half_rate * hits, 0.0);
            }
        }
    }
    Ok(sup)
}

const STEADY_CONVERGED: f64 = 1e-13;
const STEADY_MAX_ITERS: usize = 30;
const DEGENERACY_TOL: f64 = 1e-10;

/// Null vector of the Lindbladian by LU-based inverse iteration, returned as
/// a state together with the relative residual `|L v| / (|L|_1 |v|)`.
///
/// The kernel is required to be one-dimensional: a second inverse iteration,
/// kept orthogonal to the first solution, must not converge. A degenerate
/// kernel (conserved quantity, disconnected subspace) is reported as an
/// error rather than silently returning one of many fixed points.
pub fn steady_state(l: &Superoperator) -> Result<(DensityMatrix, f64)> {
    let n = l.space.total_dim();
    let nn = n * n;
    let norm_l = one_norm(&l.matrix).max(f64::MIN_POSITIVE);

    // The Lindbladian is singular by construction; LAPACK usually factors it
    // anyway with a tiny pivot, which is exactly what inverse iteration
    // needs. An exact zero pivot is repaired with a small diagonal shift.
    let factor = match lu_factor(&l.matrix) {
        Ok(f) => f,
        Err(Error::SingularSystem) => {
            let mut shifted = l.matrix.clone();
            let eps = Complex64::new(1e-13 * norm_l, 0.0);
            for k in 0..nn {
                shifted[(k, k)] += eps;
            }
            lu_factor(&shifted)?
        }
        Err(e) => return Err(e),
    };

    // Start from vec(I/n): unit overlap with any unit-trace fixed point.
    let mut v = CVec::zeros(nn);
    for k in 0..n {
        v[k * (n + 1)] = Complex64::new(1.0 / n as f64, 0.0);
    }
    let mut residual = f64::INFINITY;
    for _ in 0..STEADY_MAX_ITERS {
        let mut y = factor.solve_vec(&v)?;
        let norm = vec_norm(&y);
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::SingularSystem);
        }
        y.mapv_inplace(|z| z / norm);
        residual = vec_norm(&l.apply(&y)) / norm_l;
        v = y;
        if residual < STEADY_CONVERGED {
            break;
        }
    }

    // Degeneracy probe: a start orthogonal to the found state, re-projected
    // each sweep. With a 1-D kernel its residual stalls at the spectral gap.
    let mut probe = CVec::zeros(nn);
    probe[0] = ONE;
    if nn > 1 {
        probe[nn - 1] = -ONE;
    }
    orthogonalize(&mut probe, &v);
    let pn = vec_norm(&probe);
    if pn > 0.0 {
        probe.mapv_inplace(|z| z / pn);
        for _ in 0..8 {
            let mut y = factor.solve_vec(&probe)?;
            orthogonalize(&mut y, &v);
            let norm = vec_norm(&y);
            if !norm.is_finite() || norm == 0.0 {
                break;
            }
            y.mapv_inplace(|z| z / norm);
            probe = y;
        }
        let probe_res = vec_norm(&l.apply(&probe)) / norm_l;
        if probe_res < DEGENERACY_TOL {
            return Err(Error::DegenerateKernel { residual: probe_res });
        }
    }

    let raw = unvec(&v, n, n)?;
    let tr = trace(&raw);
    if tr.norm() < 1e-10 * fro_norm(&raw) {
        // A traceless kernel vector cannot be normalized into a state; with
        // a unique fixed point the trace overlap is order one.
        return Err(Error::DegenerateKernel { residual });
    }
    let rho = hermitize(&raw.mapv(|z| z / tr));
    Ok((DensityMatrix::new(rho)?, residual))
}

fn vec_norm(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn orthogonalize(y: &mut CVec, against: &CVec) {
    let mut overlap = Complex64::new(0.0, 0.0);
    for (a, b) in against.iter().zip(y.iter()) {
        overlap += a.conj() * b;
    }
    for (t, a) in y.iter_mut().zip(against.iter()) {
        *t -= overlap * a;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::level_op;
    use crate::linalg::identity;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn random_cmat(n: usize, seed: u64) -> CMat {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, n), |_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn vec_of_identity() {
        let v = vec(&identity(2));
        assert_eq!(v[0], ONE);
        assert_eq!(v[1], Complex64::new(0.0, 0.0));
        assert_eq!(v[2], Complex64::new(0.0, 0.0));
        assert_eq!(v[3], ONE);
    }

    #[test]
    fn kron_vec_identity() {
        // vec(A X B) = (B^T kron A) vec(X) for random 3x3 triples.
        let a = random_cmat(3, 1);
        let x = random_cmat(3, 2);
        let b = random_cmat(3, 3);
        let lhs = vec(&matmul(&matmul(&a, &x), &b));
        let rhs = matvec(&kron(&b.t().to_owned(), &a), &vec(&x));
        let err = lhs
            .iter()
            .zip(rhs.iter())
            .map(|(p, q)| (p - q).norm())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-13, "kron-vec identity violated by {err}");
    }

    #[test]
    fn hamiltonian_part_diagonal() {
        let space = SpaceSpec::new(2, 2).unwrap();
        let mut h = CMat::zeros((4, 4));
        for k in 0..4 {
            h[(k, k)] = Complex64::new(k as f64, 0.0);
        }
        let sup = hamiltonian_part(&h, &space).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let k = i + j * 4;
                let want = -I * Complex64::new(i as f64 - j as f64, 0.0);
                assert!((sup.matrix[(k, k)] - want).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn hamiltonian_part_matches_commutator() {
        let space = SpaceSpec::new(2, 3).unwrap();
        let h = hermitize(&random_cmat(6, 7));
        let rho = hermitize(&random_cmat(6, 8));
        let sup = hamiltonian_part(&h, &space).unwrap();
        let lhs = unvec(&sup.apply(&vec(&rho)), 6, 6).unwrap();
        let comm = &matmul(&h, &rho) - &matmul(&rho, &h);
        let rhs = comm.mapv(|z| -I * z);
        let diff = &lhs - &rhs;
        assert!(max_abs(&diff.to_owned()) < 1e-12);
        assert!(sup.trace_residual() < 1e-12);
    }

    #[test]
    fn hamiltonian_part_rejects_non_hermitian() {
        let space = SpaceSpec::new(2, 2).unwrap();
        let mut h = CMat::zeros((4, 4));
        h[(0, 1)] = ONE;
        assert!(matches!(hamiltonian_part(&h, &space), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn kernel_limits_and_symmetry() {
        for pat in [DipolePattern::Parallel, DipolePattern::Perpendicular] {
            assert!((recoil_kernel(0.0, pat) - 2.0).abs() < 1e-15);
            for mu in [0.3, 1.7, 4.9] {
                assert!((recoil_kernel(mu, pat) - recoil_kernel(-mu, pat)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn kernel_series_matches_closed_form_at_branch() {
        // Just above the switch point both the closed form and the series
        // are accurate; they must agree there.
        let mu = 2e-3;
        let m2: f64 = mu * mu;
        let series_par = 2.0 - 0.4 * m2 + (3.0 / 140.0) * m2 * m2 - m2 * m2 * m2 / 1890.0;
        let series_perp = 2.0 - m2 / 5.0 + m2 * m2 / 140.0 - m2 * m2 * m2 / 7560.0;
        assert!((recoil_kernel(mu, DipolePattern::Parallel) - series_par).abs() < 1e-9);
        assert!((recoil_kernel(mu, DipolePattern::Perpendicular) - series_perp).abs() < 1e-9);
    }

    #[test]
    fn zero_lamb_dicke_is_amplitude_damping() {
        let space = SpaceSpec::new(2, 3).unwrap();
        let ch = RecoilChannel {
            lower: 0,
            upper: 1,
            rate: 0.37,
            lamb_dicke: 0.0,
            pattern: DipolePattern::Parallel,
        };
        let got = recoil_dissipator(&ch, &space).unwrap();

        let j = kron(&level_op(2, 0, 1), &identity(3));
        let jd = dagger(&j);
        let jdj = matmul(&jd, &j);
        let id = identity(6);
        let jc = j.mapv(|z| z.conj());
        let mut want = kron(&jc, &j);
        want.scaled_add(Complex64::new(-0.5, 0.0), &kron(&id, &jdj));
        want.scaled_add(Complex64::new(-0.5, 0.0), &kron(&jdj.t().to_owned(), &id));
        want.mapv_inplace(|z| z * ch.rate);

        let diff = &got.matrix - &want;
        assert!(max_abs(&diff.to_owned()) < 1e-12);
    }

    #[test]
    fn dissipator_preserves_trace_and_hermiticity() {
        let space = SpaceSpec::new(3, 6).unwrap();
        let ch = RecoilChannel {
            lower: 0,
            upper: 2,
            rate: 6.6667,
            lamb_dicke: 0.15,
            pattern: DipolePattern::Perpendicular,
        };
        let sup = recoil_dissipator(&ch, &space).unwrap();
        assert!(sup.trace_residual() < 1e-9, "trace residual {}", sup.trace_residual());

        let rho = hermitize(&random_cmat(18, 5));
        let out = unvec(&sup.apply(&vec(&rho)), 18, 18).unwrap();
        assert!(hermiticity_deviation(&out) < 1e-10);
    }

    #[test]
    fn channel_validation() {
        let space = SpaceSpec::new(2, 3).unwrap();
        let bad_levels = RecoilChannel {
            lower: 1,
            upper: 1,
            rate: 1.0,
            lamb_dicke: 0.1,
            pattern: DipolePattern::Parallel,
        };
        assert!(recoil_dissipator(&bad_levels, &space).is_err());
        let bad_rate = RecoilChannel { lower: 0, upper: 1, rate: 0.0, ..bad_levels };
        assert!(recoil_dissipator(&bad_rate, &space).is_err());
        let out_of_range = RecoilChannel { lower: 0, upper: 2, rate: 1.0, ..bad_levels };
        assert!(recoil_dissipator(&out_of_range, &space).is_err());
    }

    /// Hand-built two-channel damping model with the unique fixed point
    /// `|0><0| kron |0><0|`: internal decay plus motional decay.
    fn damped_model() -> Superoperator {
        let space = SpaceSpec::new(2, 3).unwrap();
        let id = identity(6);
        let mut sup = Superoperator::zeros(space);
        let jumps = [
            (kron(&level_op(2, 0, 1), &identity(3)), 0.9),
            (kron(&identity(2), &crate::hilbert::annihilator(3)), 0.4),
        ];
        for (j, rate) in jumps {
            let jd = dagger(&j);
            let jdj = matmul(&jd, &j);
            let jc = j.mapv(|z| z.conj());
            let mut part = kron(&jc, &j);
            part.scaled_add(Complex64::new(-0.5, 0.0), &kron(&id, &jdj));
            part.scaled_add(Complex64::new(-0.5, 0.0), &kron(&jdj.t().to_owned(), &id));
            sup.matrix.scaled_add(Complex64::new(rate, 0.0), &part);
        }
        sup
    }

    #[test]
    fn steady_state_of_damped_model() {
        let sup = damped_model();
        let (rho, residual) = steady_state(&sup).unwrap();
        assert!(residual < 1e-12, "residual {residual}");
        assert!((rho.mat()[(0, 0)].re - 1.0).abs() < 1e-10);
        let off: f64 = (1..6).map(|k| rho.mat()[(k, k)].re.abs()).sum();
        assert!(off < 1e-10);
    }

    #[test]
    fn degenerate_kernel_reported() {
        // Internal decay only: every motional state is left invariant, so
        // the kernel is far from one-dimensional.
        let space = SpaceSpec::new(2, 3).unwrap();
        let ch = RecoilChannel {
            lower: 0,
            upper: 1,
            rate: 1.0,
            lamb_dicke: 0.0,
            pattern: DipolePattern::Parallel,
        };
        let sup = recoil_dissipator(&ch, &space).unwrap();
        assert!(matches!(steady_state(&sup), Err(Error::DegenerateKernel { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn unvec_vec_roundtrip(seed in 0u64..1024, r in 1usize..6, c in 1usize..6) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = Array2::from_shape_fn((r, c), |_| {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let back = unvec(&vec(&m), r, c).unwrap();
            prop_assert!(max_abs(&(&back - &m).to_owned()) == 0.0);
        }

        #[test]
        fn kernel_matches_weight_moments(mu in -5.0f64..5.0) {
            // f is bounded by f(0) = 2 (the weights are nonnegative) and
            // both patterns stay real and even.
            for pat in [DipolePattern::Parallel, DipolePattern::Perpendicular] {
                let f = recoil_kernel(mu, pat);
                prop_assert!(f.abs() <= 2.0 + 1e-12);
                prop_assert!((f - recoil_kernel(-mu, pat)).abs() < 1e-13);
            }
        }
    }
}
