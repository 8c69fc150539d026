//! Time evolution, phonon-number readout, trajectory sampling, and
//! exponential cooling-rate fits.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hilbert::{trace, DensityMatrix, SpaceSpec};
use crate::linalg::{expm, hermitize, matvec, CVec};
use crate::liouville::{unvec, vec, Superoperator};

/// Largest tolerated deviation of tr rho(t) from one before evolution is
/// considered broken (truncation too tight, or a malformed generator).
pub const TRACE_DRIFT_TOL: f64 = 1e-9;

/// Default lower edge of the rate-fit window, units of 1/nu. The first few
/// trap periods hold a non-exponential transient that would bias the rate.
pub const DEFAULT_FIT_WINDOW_START: f64 = 5.0;

/// Default number of trajectory samples; resolves the initial transient
/// while costing a single matrix exponential.
pub const DEFAULT_TRAJECTORY_SAMPLES: usize = 121;

/// Sampled mean phonon number over time, with an optional record of where
/// the curve came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Sample times, strictly increasing, units of 1/nu.
    pub times: Vec<f64>,
    pub nbar: Vec<f64>,
    pub provenance: Option<Provenance>,
}

/// The scheme and parameter point a trajectory was computed at.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub scheme: String,
    pub params: Vec<f64>,
}

/// Result of fitting `nbar(t) = nbar_inf + amplitude * exp(-w t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    /// Cooling rate, units of nu. Positive for decaying data.
    pub w: f64,
    pub nbar_inf: f64,
    pub amplitude: f64,
    /// Root-mean-square misfit over the fitted window.
    pub residual: f64,
    /// False when the data does not decay (w <= 0); the other fields then
    /// describe the best fit found, not a cooling rate.
    pub cooling: bool,
    /// Lower time edge actually used for the fit.
    pub window_start: f64,
    pub iterations: usize,
}

fn check_state_dim(l: &Superoperator, rho0: &DensityMatrix) -> Result<usize> {
    let n = l.space.total_dim();
    if rho0.dim() != n {
        return Err(Error::ShapeMismatch(format!(
            "state dimension {} does not match generator space {}",
            rho0.dim(),
            n
        )));
    }
    Ok(n)
}

pub(crate) fn state_from_vec(v: &CVec, n: usize) -> Result<DensityMatrix> {
    let m = unvec(v, n, n)?;
    let tr = trace(&m);
    let drift = (tr - Complex64::new(1.0, 0.0)).norm();
    if !drift.is_finite() || drift > TRACE_DRIFT_TOL {
        return Err(Error::InvalidState(format!(
            "trace drifted to {tr} (|drift| = {drift:.3e}); increase the Fock truncation"
        )));
    }
    let mut m = m;
    m.mapv_inplace(|z| z / tr);
    DensityMatrix::new(hermitize(&m))
}

/// Propagates `rho0` for time `t` under the Lindbladian `l`.
pub fn evolve(l: &Superoperator, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidParam(format!("evolution time must be finite and >= 0, got {t}")));
    }
    let n = check_state_dim(l, rho0)?;
    let mut lt = l.matrix.clone();
    lt.mapv_inplace(|z| z * t);
    let p = expm(&lt)?;
    state_from_vec(&matvec(&p, &vec(rho0.mat())), n)
}

/// Mean phonon number `Re tr(n rho)` with `n = I_internal (x) a^dagger a`.
pub fn mean_phonon(rho: &DensityMatrix, space: &SpaceSpec) -> Result<f64> {
    if rho.dim() != space.total_dim() {
        return Err(Error::ShapeMismatch(format!(
            "state dimension {} does not match space {}",
            rho.dim(),
            space.total_dim()
        )));
    }
    let mut sum = 0.0;
    for p in 0..space.internal_dim {
        for m in 0..space.fock_dim {
            let k = space.index(p, m);
            sum += m as f64 * rho.mat()[(k, k)].re;
        }
    }
    Ok(sum)
}

fn nbar_of_vec(v: &CVec, space: &SpaceSpec) -> Result<f64> {
    let n = space.total_dim();
    let mut tr = Complex64::new(0.0, 0.0);
    let mut sum = 0.0;
    for p in 0..space.internal_dim {
        for m in 0..space.fock_dim {
            let k = space.index(p, m);
            let diag = v[k * (n + 1)];
            tr += diag;
            sum += m as f64 * diag.re;
        }
    }
    let drift = (tr - Complex64::new(1.0, 0.0)).norm();
    if !drift.is_finite() || drift > TRACE_DRIFT_TOL {
        return Err(Error::InvalidState(format!(
            "trace drifted to {tr} during trajectory; increase the Fock truncation"
        )));
    }
    Ok(sum)
}

/// Samples `nbar(t)` at `samples` uniform times over `[0, t_final]` using a
/// single step propagator `exp(L t_final/(samples-1))` applied repeatedly.
pub fn trajectory(
    l: &Superoperator,
    rho0: &DensityMatrix,
    t_final: f64,
    samples: usize,
) -> Result<Trajectory> {
    if samples < 2 {
        return Err(Error::InvalidParam(format!("need at least 2 samples, got {samples}")));
    }
    if !t_final.is_finite() || t_final <= 0.0 {
        return Err(Error::InvalidParam(format!("final time must be positive, got {t_final}")));
    }
    check_state_dim(l, rho0)?;
    let dt = t_final / (samples - 1) as f64;
    let mut step = l.matrix.clone();
    step.mapv_inplace(|z| z * dt);
    let p = expm(&step)?;
    let mut v = vec(rho0.mat());
    let mut times = Vec::with_capacity(samples);
    let mut nbar = Vec::with_capacity(samples);
    for k in 0..samples {
        times.push(k as f64 * dt);
        nbar.push(nbar_of_vec(&v, &l.space)?);
        if k + 1 < samples {
            v = matvec(&p, &v);
        }
    }
    Ok(Trajectory { times, nbar, provenance: None })
}

/// Fits the cooling-rate model over the default window `t >= 5/nu`.
pub fn fit_rate(traj: &Trajectory) -> Result<RateFit> {
    fit_rate_from(traj, DEFAULT_FIT_WINDOW_START)
}

/// Fits `nbar(t) = nbar_inf + amplitude * exp(-w t)` to the samples with
/// `t >= window_start`. Initial guess comes from log-linear regression of
/// `nbar(t) - nbar(t_final)`, refined by damped Gauss-Newton.
pub fn fit_rate_from(traj: &Trajectory, window_start: f64) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.nbar)
        .filter(|(t, _)| **t >= window_start)
        .map(|(t, n)| (*t, *n))
        .collect();
    if pts.len() < 10 {
        return Err(Error::FitFailure(format!(
            "only {} samples at t >= {window_start}; need at least 10",
            pts.len()
        )));
    }

    let tail = pts[pts.len() - 1].1;
    let mut guess = log_linear_guess(&pts, tail);
    let flat = guess.is_none();
    let p0 = guess.take().unwrap_or_else(|| {
        let mean = pts.iter().map(|(_, n)| n).sum::<f64>() / pts.len() as f64;
        [mean, 0.0, 1.0]
    });
    let (p, iterations) = gauss_newton(&pts, p0);
    let residual = (ssr(&pts, &p) / pts.len() as f64).sqrt();
    let w = p[2];
    Ok(RateFit {
        w,
        nbar_inf: p[0],
        amplitude: p[1],
        residual,
        cooling: !flat && w > 0.0 && p[1] > 0.0,
        window_start,
        iterations,
    })
}

/// Log-linear regression of `ln(nbar - tail)` on t; None when too few
/// points sit above the tail value to expose a decay.
fn log_linear_guess(pts: &[(f64, f64)], tail: f64) -> Option<[f64; 3]> {
    let usable: Vec<(f64, f64)> = pts
        .iter()
        .filter(|(_, n)| *n - tail > 1e-300)
        .map(|(t, n)| (*t, (n - tail).ln()))
        .collect();
    if usable.len() < 3 {
        return None;
    }
    let n = usable.len() as f64;
    let st: f64 = usable.iter().map(|(t, _)| t).sum();
    let sy: f64 = usable.iter().map(|(_, y)| y).sum();
    let stt: f64 = usable.iter().map(|(t, _)| t * t).sum();
    let sty: f64 = usable.iter().map(|(t, y)| t * y).sum();
    let det = n * stt - st * st;
    if det.abs() < 1e-300 {
        return None;
    }
    let slope = (n * sty - st * sy) / det;
    let intercept = (sy * stt - st * sty) / det;
    Some([tail, intercept.exp(), -slope])
}

fn model(p: &[f64; 3], t: f64) -> f64 {
    // Clamped so that a wayward iterate cannot overflow the exponential.
    p[0] + p[1] * (-p[2] * t).min(700.0).exp()
}

fn ssr(pts: &[(f64, f64)], p: &[f64; 3]) -> f64 {
    pts.iter().map(|(t, n)| (model(p, *t) - n).powi(2)).sum()
}

/// Damped Gauss-Newton for the three-parameter exponential model.
fn gauss_newton(pts: &[(f64, f64)], mut p: [f64; 3]) -> ([f64; 3], usize) {
    let mut current = ssr(pts, &p);
    for iter in 0..100 {
        // Normal equations J^T J delta = -J^T r for the 3-vector delta.
        let mut jtj = [[0.0f64; 3]; 3];
        let mut jtr = [0.0f64; 3];
        for (t, n) in pts {
            let e = (-p[2] * t).min(700.0).exp();
            let r = p[0] + p[1] * e - n;
            let j = [1.0, e, -p[1] * t * e];
            for a in 0..3 {
                jtr[a] += j[a] * r;
                for b in 0..3 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        let Some(delta) = solve3(&jtj, &[-jtr[0], -jtr[1], -jtr[2]]) else {
            return (p, iter);
        };
        let scale = p.iter().map(|v| v.abs()).fold(1.0f64, f64::max);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..25 {
            let trial = [p[0] + lambda * delta[0], p[1] + lambda * delta[1], p[2] + lambda * delta[2]];
            let s = ssr(pts, &trial);
            if s.is_finite() && s <= current {
                p = trial;
                current = s;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return (p, iter + 1);
        }
        let step = delta.iter().map(|v| (lambda * v).abs()).fold(0.0f64, f64::max);
        if step < 1e-10 * scale {
            return (p, iter + 1);
        }
    }
    (p, 100)
}

/// Direct 3x3 solve with partial pivoting; None on singular systems.
fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let mut m = [[0.0f64; 4]; 3];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&a[i]);
        m[i][3] = b[i];
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut x = [0.0f64; 3];
    for i in (0..3).rev() {
        let mut s = m[i][3];
        for k in i + 1..3 {
            s -= m[i][k] * x[k];
        }
        x[i] = s / m[i][i];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}
