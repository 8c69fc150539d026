//! Shared oracle helpers for the integration suites: quadrature rules and a
//! Taylor-series matrix exponential that are deliberately independent of the
//! production algorithms, plus seeded random instances.

#![allow(dead_code)]

use num_complex::Complex64;
use rand::Rng;

use coolopt_core::hilbert::{level_op, position_op};
use coolopt_core::linalg::{eigh, identity, kron, matmul, max_abs, one_norm, CMat};
use coolopt_core::schemes::SchemeId;
use coolopt_core::{ControlProblem, DipolePattern, RecoilChannel, SpaceSpec};

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = if n == 0 { 0.0 } else { n as f64 * (x * p1 - p0) / (x * x - 1.0) };
    (p1, dp)
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Matrix exponential by scaled Taylor summation; an algorithmic family
/// apart from the production Pade code.
pub fn taylor_expm(a: &CMat) -> CMat {
    let n = a.nrows();
    let norm = one_norm(a);
    let s = if norm > 0.25 { (norm / 0.25).log2().ceil().max(0.0) as i32 } else { 0 };
    let mut b = a.clone();
    let scale = 2f64.powi(s);
    b.mapv_inplace(|z| z / scale);
    let mut sum = identity(n);
    let mut term = identity(n);
    for k in 1..=80u32 {
        term = matmul(&term, &b);
        term.mapv_inplace(|z| z / k as f64);
        sum.zip_mut_with(&term, |o, &t| *o += t);
        if max_abs(&term) < 1e-20 {
            break;
        }
    }
    for _ in 0..s {
        sum = matmul(&sum, &sum);
    }
    sum
}

/// Central finite difference of the Taylor exponential in direction `e`; an
/// oracle for Frechet derivatives, accurate to O(h^2).
pub fn fd_frechet(a: &CMat, e: &CMat, h: f64) -> CMat {
    let mut up = a.clone();
    up.zip_mut_with(e, |o, &v| *o += v * h);
    let mut dn = a.clone();
    dn.zip_mut_with(e, |o, &v| *o -= v * h);
    let mut diff = taylor_expm(&up);
    let down = taylor_expm(&dn);
    diff.zip_mut_with(&down, |o, &v| *o -= v);
    diff.mapv_inplace(|z| z / (2.0 * h));
    diff
}

/// Half the sum of absolute eigenvalues of the (Hermitian) difference.
pub fn trace_distance(a: &CMat, b: &CMat) -> f64 {
    let mut diff = a.clone();
    diff.zip_mut_with(b, |o, &v| *o -= v);
    let (vals, _) = eigh(&diff).expect("trace_distance eigendecomposition");
    0.5 * vals.iter().map(|v| v.abs()).sum::<f64>()
}

pub fn random_cmat<R: Rng>(rng: &mut R, n: usize, scale: f64) -> CMat {
    CMat::from_shape_fn((n, n), |_| {
        Complex64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
    })
}

pub fn pattern_weight(pattern: DipolePattern, x: f64) -> f64 {
    match pattern {
        DipolePattern::Parallel => 0.75 * (1.0 + x * x),
        DipolePattern::Perpendicular => 1.5 * (1.0 - x * x),
    }
}

/// Assemble a recoil dissipator directly from the quadrature definition:
/// a continuum of jump operators `|l><u| exp(i eta X x)` weighted by the
/// dipole pattern, discretized with 32 Gauss-Legendre nodes.
pub fn quadrature_dissipator(channel: &RecoilChannel, space: &SpaceSpec) -> CMat {
    let i = Complex64::new(0.0, 1.0);
    let d = space.fock_dim;
    let n = space.total_dim();
    let rule = gauss_legendre(32);
    let sigma = level_op(space.internal_dim, channel.lower, channel.upper);
    let x_op = position_op(d);
    let mut total = CMat::zeros((n * n, n * n));
    for &(x, w) in &rule {
        let mut arg = x_op.clone();
        arg.mapv_inplace(|z| z * i * channel.lamb_dicke * x);
        let kick = taylor_expm(&arg);
        let jump = kron(&sigma, &kick);
        let gain = kron(&jump.mapv(|z| z.conj()), &jump);
        let coeff = 0.5 * channel.rate * w * pattern_weight(channel.pattern, x);
        total.zip_mut_with(&gain, |o, &v| *o += v * coeff);
    }
    let proj = kron(&level_op(space.internal_dim, channel.upper, channel.upper), &identity(d));
    let loss_left = kron(&identity(n), &proj);
    let loss_right = kron(&proj, &identity(n));
    total.zip_mut_with(&loss_left, |o, &v| *o -= v * 0.5 * channel.rate);
    total.zip_mut_with(&loss_right, |o, &v| *o -= v * 0.5 * channel.rate);
    total
}

/// Richardson-extrapolated central differences of the loss, the
/// finite-difference side of gradient cross-checks. Parameters enter the
/// loss through phases of order `x * horizon`, so the landscape oscillates
/// on the scale `1 / horizon`; the step must stay well inside one period
/// while staying large enough to beat roundoff in the loss.
pub fn richardson_grad(problem: &ControlProblem, x: &[f64]) -> Vec<f64> {
    let h = 0.01 / problem.horizon.max(1.0);
    let cd = |x: &[f64], i: usize, h: f64| -> f64 {
        let mut up = x.to_vec();
        up[i] += h;
        let mut dn = x.to_vec();
        dn[i] -= h;
        (problem.loss(&up).unwrap() - problem.loss(&dn).unwrap()) / (2.0 * h)
    };
    (0..x.len())
        .map(|i| (4.0 * cd(x, i, 0.5 * h) - cd(x, i, h)) / 3.0)
        .collect()
}

/// A random parameter point inside the region the experiments scan.
pub fn random_feasible<R: Rng>(id: SchemeId, rng: &mut R) -> Vec<f64> {
    match id {
        SchemeId::Rwsc | SchemeId::Swsc => {
            vec![rng.gen_range(-1.4..-0.5), rng.gen_range(0.1..0.9)]
        }
        SchemeId::Eit3 => vec![
            rng.gen_range(30.0..120.0),
            rng.gen_range(0.5..6.0),
            rng.gen_range(8.0..25.0),
        ],
        SchemeId::Eit4 => {
            let dg = rng.gen_range(40.0..110.0);
            vec![
                dg,
                dg + rng.gen_range(-0.5..0.5),
                rng.gen_range(0.5..6.0),
                rng.gen_range(8.0..25.0),
            ]
        }
    }
}
