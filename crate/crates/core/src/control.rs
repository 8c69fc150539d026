//! The optimal-control layer: loss, exact gradient, L-BFGS minimization,
//! multi-start, and 1-D/2-D parameter scans.
//!
//! The loss is the mean phonon number after evolving for a fixed horizon.
//! Its gradient is exact: with `A = L T` and the rank-1 direction
//! `D = vec(rho0) vec(n)^T`, one Frechet derivative `K = DexpA(D)` gives
//! every component at once through `dloss/da_i = T Re tr(G_i K)`, because
//! `tr(DexpA(E) M) = tr(E DexpA(M))` for any direction E. The per-direction
//! route stays available in the linear-algebra layer and the two are checked
//! against each other in the test suite.

use std::collections::VecDeque;
use std::sync::Arc;

use rayon::prelude::*;

use crate::dynamics::{mean_phonon, state_from_vec};
use crate::error::{Error, Result};
use crate::hilbert::DensityMatrix;
use crate::linalg::{expm, expm_frechet_dir, matvec, CMat, CVec, ZERO};
use crate::liouville::vec;
use crate::schemes::{SchemeId, SchemeModel};

/// Optimizer settings; the defaults are the contract values.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimOptions {
    pub max_iters: usize,
    /// Convergence threshold on the infinity norm of the scaled gradient.
    pub grad_tol: f64,
    /// Relative loss-decrease floor; stalling below it for `stall_iters`
    /// consecutive steps terminates the run.
    pub loss_tol: f64,
    pub stall_iters: usize,
    /// Number of curvature pairs kept by L-BFGS.
    pub history: usize,
    /// Armijo constant of the strong Wolfe line search.
    pub c1: f64,
    /// Curvature constant of the strong Wolfe line search.
    pub c2: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            max_iters: 500,
            grad_tol: 1e-8,
            loss_tol: 1e-12,
            stall_iters: 3,
            history: 10,
            c1: 1e-4,
            c2: 0.9,
        }
    }
}

/// Outcome of one minimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    /// Full parameter assignment at the returned point, fixed values
    /// included, in scheme parameter order.
    pub params: Vec<(String, f64)>,
    pub loss: f64,
    /// Infinity norm of the scaled gradient at the returned point.
    pub gradient_norm: f64,
    pub iterations: usize,
    /// True only when the gradient tolerance was met.
    pub converged: bool,
    /// Per-iteration (loss, scaled gradient norm) records.
    pub history: Vec<(f64, f64)>,
    /// Preconditioning scale per free parameter.
    pub scales: Vec<f64>,
    pub note: Option<String>,
}

impl OptimResult {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

/// One row of a 1-D scan: the scanned value, the optimized inner
/// parameters, and the loss reached.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPoint {
    pub value: f64,
    pub inner: Vec<f64>,
    pub loss: f64,
    pub converged: bool,
    pub error: Option<String>,
}

/// One cell of a 2-D grid evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub p1: f64,
    pub p2: f64,
    pub loss: f64,
    pub error: Option<String>,
}

/// All runs of a multi-start minimization plus the winner.
#[derive(Debug, Clone, PartialEq)]
pub struct MultistartOutcome {
    pub best: OptimResult,
    pub runs: Vec<OptimResult>,
}

/// A loss landscape: scheme model, initial state, horizon, and the split of
/// scheme parameters into optimized (free) and held (fixed) ones.
#[derive(Clone)]
pub struct ControlProblem {
    model: Arc<SchemeModel>,
    rho0: DensityMatrix,
    v0: CVec,
    /// Sparse support of vec(n): (vectorized index, phonon count).
    w_support: Vec<(usize, f64)>,
    pub horizon: f64,
    free: Vec<usize>,
    fixed: Vec<(usize, f64)>,
    pub initial_guess: Vec<f64>,
}

impl ControlProblem {
    /// Problem with every scheme parameter free.
    pub fn all_free(
        model: SchemeModel,
        rho0: DensityMatrix,
        horizon: f64,
        initial_guess: Vec<f64>,
    ) -> Result<Self> {
        let names = model.param_names().to_vec();
        Self::with_model(Arc::new(model), rho0, horizon, &names, &[], initial_guess)
    }

    /// Problem with an explicit free/fixed split; the two sets must be
    /// disjoint and together cover every scheme parameter.
    pub fn new(
        model: SchemeModel,
        rho0: DensityMatrix,
        horizon: f64,
        free: &[&str],
        fixed: &[(&str, f64)],
        initial_guess: Vec<f64>,
    ) -> Result<Self> {
        Self::with_model(Arc::new(model), rho0, horizon, free, fixed, initial_guess)
    }

    fn with_model(
        model: Arc<SchemeModel>,
        rho0: DensityMatrix,
        horizon: f64,
        free: &[&str],
        fixed: &[(&str, f64)],
        initial_guess: Vec<f64>,
    ) -> Result<Self> {
        if !horizon.is_finite() || horizon < 0.0 {
            return Err(Error::InvalidParam(format!("horizon must be finite and >= 0, got {horizon}")));
        }
        let space = model.space();
        if rho0.dim() != space.total_dim() {
            return Err(Error::ShapeMismatch(format!(
                "initial state dimension {} does not match space {}",
                rho0.dim(),
                space.total_dim()
            )));
        }
        let names = model.param_names();
        let pos = |name: &str| -> Result<usize> {
            names
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| Error::InvalidParam(format!("unknown parameter {name:?}")))
        };
        let mut taken = vec![false; names.len()];
        let mut free_idx = Vec::with_capacity(free.len());
        for name in free {
            let k = pos(name)?;
            if taken[k] {
                return Err(Error::InvalidParam(format!("parameter {name:?} listed twice")));
            }
            taken[k] = true;
            free_idx.push(k);
        }
        let mut fixed_idx = Vec::with_capacity(fixed.len());
        for (name, value) in fixed {
            let k = pos(name)?;
            if taken[k] {
                return Err(Error::InvalidParam(format!("parameter {name:?} listed twice")));
            }
            if !value.is_finite() {
                return Err(Error::InvalidParam(format!("fixed value for {name:?} must be finite")));
            }
            taken[k] = true;
            fixed_idx.push((k, *value));
        }
        if let Some(k) = taken.iter().position(|t| !t) {
            return Err(Error::InvalidParam(format!(
                "parameter {:?} is neither free nor fixed",
                names[k]
            )));
        }
        if initial_guess.len() != free_idx.len() {
            return Err(Error::InvalidParam(format!(
                "initial guess has {} entries for {} free parameters",
                initial_guess.len(),
                free_idx.len()
            )));
        }
        if initial_guess.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("initial guess must be finite".into()));
        }
        let n = space.total_dim();
        let mut w_support = Vec::new();
        for p in 0..space.internal_dim {
            for m in 1..space.fock_dim {
                w_support.push((space.index(p, m) * (n + 1), m as f64));
            }
        }
        let v0 = vec(rho0.mat());
        Ok(ControlProblem {
            model,
            rho0,
            v0,
            w_support,
            horizon,
            free: free_idx,
            fixed: fixed_idx,
            initial_guess,
        })
    }

    /// Same landscape with a different free/fixed split and start.
    pub fn with_split(
        &self,
        free: &[&str],
        fixed: &[(&str, f64)],
        initial_guess: Vec<f64>,
    ) -> Result<Self> {
        Self::with_model(
            Arc::clone(&self.model),
            self.rho0.clone(),
            self.horizon,
            free,
            fixed,
            initial_guess,
        )
    }

    pub fn model(&self) -> &SchemeModel {
        &self.model
    }

    pub fn free_names(&self) -> Vec<&'static str> {
        let names = self.model.param_names();
        self.free.iter().map(|&k| names[k]).collect()
    }

    pub fn fixed_named(&self) -> Vec<(&'static str, f64)> {
        let names = self.model.param_names();
        self.fixed.iter().map(|&(k, v)| (names[k], v)).collect()
    }

    /// Preconditioning scales for the free parameters.
    pub fn scales(&self) -> Vec<f64> {
        let all = self.model.scheme().id().param_scales();
        self.free.iter().map(|&k| all[k]).collect()
    }

    /// Full scheme parameter vector from the free values.
    pub fn full_params(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.free.len() {
            return Err(Error::InvalidParam(format!(
                "expected {} free values, got {}",
                self.free.len(),
                x.len()
            )));
        }
        let mut full = vec![0.0; self.model.param_names().len()];
        for (&k, &v) in self.free.iter().zip(x) {
            full[k] = v;
        }
        for &(k, v) in &self.fixed {
            full[k] = v;
        }
        Ok(full)
    }

    /// Full named assignment at the given free values.
    pub fn named_params(&self, x: &[f64]) -> Result<Vec<(String, f64)>> {
        let full = self.full_params(x)?;
        Ok(self
            .model
            .param_names()
            .iter()
            .zip(full)
            .map(|(n, v)| (n.to_string(), v))
            .collect())
    }

    fn scaled_generator(&self, x: &[f64]) -> Result<CMat> {
        let full = self.full_params(x)?;
        let l = self.model.assemble(&full)?;
        let mut a = l.matrix;
        let t = self.horizon;
        a.mapv_inplace(|z| z * t);
        Ok(a)
    }

    fn finish_loss(&self, propagator: &CMat) -> Result<f64> {
        let v_t = matvec(propagator, &self.v0);
        let space = self.model.space();
        let rho = state_from_vec(&v_t, space.total_dim())?;
        mean_phonon(&rho, &space)
    }

    /// Mean phonon number after evolving for the horizon at free values `x`.
    pub fn loss(&self, x: &[f64]) -> Result<f64> {
        let a = self.scaled_generator(x)?;
        self.finish_loss(&expm(&a)?)
    }

    /// Loss and its exact gradient with respect to the free parameters,
    /// from a single Frechet evaluation in the rank-1 adjoint direction.
    pub fn grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let a = self.scaled_generator(x)?;
        let s = a.nrows();
        let mut dir = CMat::zeros((s, s));
        for (r, &vr) in self.v0.iter().enumerate() {
            if vr == ZERO {
                continue;
            }
            for &(c, m) in &self.w_support {
                dir[(r, c)] = vr * m;
            }
        }
        let (p, k) = expm_frechet_dir(&a, &dir)?;
        let loss = self.finish_loss(&p)?;
        let t = self.horizon;
        let mut g = Vec::with_capacity(self.free.len());
        for &idx in &self.free {
            let gen = &self.model.generators()[idx].matrix;
            let mut acc = 0.0;
            for r in 0..s {
                for c in 0..s {
                    acc += (gen[(r, c)] * k[(c, r)]).re;
                }
            }
            g.push(t * acc);
        }
        Ok((loss, g))
    }
}

/// Start on the bright-state resonance line `omega_g^2 + omega_r^2 =
/// 4 nu (nu + delta)` with the given `omega_g / omega_r` ratio; returns
/// `(omega_g, omega_r)`.
pub fn resonance_start(delta: f64, ratio: f64) -> (f64, f64) {
    let total = 4.0 * (1.0 + delta);
    let omega_r = (total.max(0.0) / (1.0 + ratio * ratio)).sqrt();
    (ratio * omega_r, omega_r)
}

/// Documented default start per scheme: sideband schemes at the bare red
/// sideband with a moderate drive, EIT schemes on the resonance line at
/// delta = 60 with a weak g-leg.
pub fn default_initial_guess(id: SchemeId) -> Vec<f64> {
    match id {
        SchemeId::Rwsc | SchemeId::Swsc => vec![-1.0, 0.3],
        SchemeId::Eit3 => {
            let (og, or) = resonance_start(60.0, 0.15);
            vec![60.0, og, or]
        }
        SchemeId::Eit4 => {
            let (og, or) = resonance_start(60.0, 0.15);
            vec![60.0, 60.0, og, or]
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

struct RayPoint {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    dphi: f64,
}

fn eval_ray<F>(obj: &F, x: &[f64], d: &[f64], alpha: f64) -> Option<RayPoint>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let pt: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect();
    match obj(&pt) {
        Ok((f, g)) if f.is_finite() => {
            let dphi = dot(&g, d);
            Some(RayPoint { x: pt, f, g, dphi })
        }
        _ => None,
    }
}

/// Value-only probe; a gradient costs a directional exponential derivative
/// on top of the propagator, so rejected trial points should not pay for
/// one.
fn eval_ray_loss<Fv>(objf: &Fv, x: &[f64], d: &[f64], alpha: f64) -> Option<f64>
where
    Fv: Fn(&[f64]) -> Result<f64>,
{
    let pt: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect();
    match objf(&pt) {
        Ok(f) if f.is_finite() => Some(f),
        _ => None,
    }
}

/// One secant step toward the root of phi' when the accepted point is far
/// from the line minimum; kept only if it still satisfies strong Wolfe and
/// improves. Exact on quadratics, which is what makes the quasi-Newton
/// iteration count match conjugate gradients there.
fn refine_toward_line_min<F>(
    obj: &F,
    x: &[f64],
    d: &[f64],
    f0: f64,
    dphi0: f64,
    alpha: f64,
    pt: RayPoint,
    c1: f64,
    c2: f64,
) -> (f64, RayPoint)
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if pt.dphi.abs() <= 0.1 * dphi0.abs() {
        return (alpha, pt);
    }
    let denom = dphi0 - pt.dphi;
    if denom.abs() < 1e-300 {
        return (alpha, pt);
    }
    let alpha2 = alpha * dphi0 / denom;
    if !alpha2.is_finite() || alpha2 <= 0.0 {
        return (alpha, pt);
    }
    if let Some(pt2) = eval_ray(obj, x, d, alpha2) {
        if pt2.f <= f0 + c1 * alpha2 * dphi0
            && pt2.dphi.abs() <= -c2 * dphi0
            && pt2.f <= pt.f
        {
            return (alpha2, pt2);
        }
    }
    (alpha, pt)
}

/// Strong Wolfe line search (bracket then zoom). Returns the accepted point
/// or, after exhausting the zoom, the best point satisfying the Armijo
/// condition; None when not even a decrease was found.
///
/// Probes are staged: a trial point is first judged on its value alone, and
/// only trials that pass the Armijo test and improve on the current lo pay
/// for the gradient the Wolfe curvature test needs. On rough stretches of
/// the landscape most trials are rejected, so this keeps their cost at one
/// propagator instead of one propagator plus its derivative.
fn strong_wolfe<F, Fv>(
    obj: &F,
    objf: &Fv,
    x: &[f64],
    d: &[f64],
    f0: f64,
    dphi0: f64,
    alpha_init: f64,
    opts: &OptimOptions,
) -> Option<(f64, RayPoint)>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
    Fv: Fn(&[f64]) -> Result<f64>,
{
    let c1 = opts.c1;
    let c2 = opts.c2;
    let armijo = |alpha: f64, f: f64| f <= f0 + c1 * alpha * dphi0;

    // Cap the search so one hard line search cannot dominate the whole
    // run; on exhaustion the best Armijo point found so far is returned.
    // Value probes count 1, gradient upgrades 2.
    let mut evals = 0usize;
    const EVAL_BUDGET: usize = 30;

    let mut alpha_lo = 0.0;
    let mut f_lo = f0;
    let mut dphi_lo = dphi0;
    let mut pt_lo: Option<RayPoint> = None;
    let mut alpha = alpha_init.max(1e-16);
    let mut alpha_hi = None;
    let mut f_hi = f64::INFINITY;

    // Bracketing: grow alpha until the minimum is straddled.
    for i in 0..30 {
        if evals >= EVAL_BUDGET {
            return pt_lo.map(|pt| (alpha_lo, pt));
        }
        evals += 1;
        let value = eval_ray_loss(objf, x, d, alpha);
        let rejected = match value {
            None => true,
            Some(fv) => !armijo(alpha, fv) || (i > 0 && fv >= f_lo),
        };
        if rejected {
            alpha_hi = Some(alpha);
            f_hi = value.unwrap_or(f64::INFINITY);
            break;
        }
        evals += 2;
        match eval_ray(obj, x, d, alpha) {
            None => {
                alpha_hi = Some(alpha);
                f_hi = f64::INFINITY;
                break;
            }
            Some(pt) => {
                if pt.dphi.abs() <= -c2 * dphi0 {
                    return Some(refine_toward_line_min(obj, x, d, f0, dphi0, alpha, pt, c1, c2));
                }
                if pt.dphi >= 0.0 {
                    // Minimum lies between lo and here; swap roles.
                    alpha_hi = Some(alpha_lo);
                    f_hi = f_lo;
                    alpha_lo = alpha;
                    f_lo = pt.f;
                    dphi_lo = pt.dphi;
                    pt_lo = Some(pt);
                    break;
                }
                alpha_lo = alpha;
                f_lo = pt.f;
                dphi_lo = pt.dphi;
                pt_lo = Some(pt);
                alpha *= 2.0;
                if alpha > 1e8 {
                    break;
                }
            }
        }
    }
    let mut hi = match alpha_hi {
        Some(h) => h,
        // Never bracketed: the last expansion point is the best Armijo
        // point seen; accept it if it at least decreased.
        None => return pt_lo.map(|pt| (alpha_lo, pt)),
    };

    // Zoom, maintaining lo as the best Armijo point. A quadratic model
    // through (lo: value and slope, hi: value) picks the trial; every third
    // step bisects so the interval shrinks geometrically regardless.
    let mut best: Option<(f64, RayPoint)> = pt_lo.take().map(|pt| (alpha_lo, pt));
    for k in 0..50 {
        if evals >= EVAL_BUDGET {
            break;
        }
        let span = hi - alpha_lo;
        if span.abs() < 1e-14 * alpha_lo.abs().max(1.0) {
            break;
        }
        let mut trial = 0.5 * (alpha_lo + hi);
        if f_hi.is_finite() && k % 3 != 2 {
            let b = f_hi - f_lo - dphi_lo * span;
            if b > 0.0 {
                let q = alpha_lo - 0.5 * dphi_lo * span * span / b;
                let margin = 0.1 * span.abs();
                let (lo_edge, hi_edge) = (alpha_lo.min(hi) + margin, alpha_lo.max(hi) - margin);
                if q.is_finite() && q >= lo_edge && q <= hi_edge {
                    trial = q;
                }
            }
        }
        evals += 1;
        let value = eval_ray_loss(objf, x, d, trial);
        let rejected = match value {
            None => true,
            Some(fv) => !armijo(trial, fv) || fv >= f_lo,
        };
        if rejected {
            hi = trial;
            f_hi = value.unwrap_or(f64::INFINITY);
            continue;
        }
        evals += 2;
        match eval_ray(obj, x, d, trial) {
            None => {
                hi = trial;
                f_hi = f64::INFINITY;
            }
            Some(pt) => {
                if pt.dphi.abs() <= -c2 * dphi0 {
                    return Some(refine_toward_line_min(obj, x, d, f0, dphi0, trial, pt, c1, c2));
                }
                if pt.dphi * (hi - alpha_lo) >= 0.0 {
                    hi = alpha_lo;
                    f_hi = f_lo;
                }
                alpha_lo = trial;
                f_lo = pt.f;
                dphi_lo = pt.dphi;
                let replace = best.as_ref().map_or(true, |(_, b)| pt.f < b.f);
                if replace {
                    best = Some((trial, pt));
                }
            }
        }
    }
    best.filter(|(_, pt)| pt.f < f0)
}

struct LbfgsOutcome {
    x: Vec<f64>,
    f: f64,
    g_norm: f64,
    iterations: usize,
    converged: bool,
    history: Vec<(f64, f64)>,
    note: Option<String>,
}

/// Two-loop recursion producing the quasi-Newton direction -H g.
fn two_loop(
    g: &[f64],
    s_hist: &VecDeque<Vec<f64>>,
    y_hist: &VecDeque<Vec<f64>>,
    rho_hist: &VecDeque<f64>,
) -> Vec<f64> {
    let k = s_hist.len();
    let mut q = g.to_vec();
    let mut alpha = vec![0.0; k];
    for i in (0..k).rev() {
        alpha[i] = rho_hist[i] * dot(&s_hist[i], &q);
        for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
            *qj -= alpha[i] * yj;
        }
    }
    if k > 0 {
        let gamma = dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1]);
        for qj in q.iter_mut() {
            *qj *= gamma;
        }
    }
    for i in 0..k {
        let beta = rho_hist[i] * dot(&y_hist[i], &q);
        for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
            *qj += (alpha[i] - beta) * sj;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

fn lbfgs<F, Fv>(obj: &F, objf: &Fv, x0: &[f64], opts: &OptimOptions) -> Result<LbfgsOutcome>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
    Fv: Fn(&[f64]) -> Result<f64>,
{
    let mut x = x0.to_vec();
    let (mut f, mut g) = obj(&x)?;
    if !f.is_finite() {
        return Err(Error::Optimization("loss is not finite at the initial point".into()));
    }
    let mut best_x = x.clone();
    let mut best_f = f;
    let mut best_g = inf_norm(&g);
    let mut history = Vec::new();
    let mut s_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut y_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut rho_hist: VecDeque<f64> = VecDeque::new();
    let mut stall = 0usize;
    let mut note = None;
    let mut converged = false;
    let mut iterations = 0usize;

    for iter in 0..opts.max_iters {
        let gnorm = inf_norm(&g);
        history.push((f, gnorm));
        if gnorm < opts.grad_tol {
            converged = true;
            break;
        }
        let mut d = two_loop(&g, &s_hist, &y_hist, &rho_hist);
        let mut dphi0 = dot(&d, &g);
        if !(dphi0 < 0.0) {
            // Curvature history went bad; restart from steepest descent.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = g.iter().map(|v| -v).collect();
            dphi0 = dot(&d, &g);
            if !(dphi0 < 0.0) {
                converged = true;
                break;
            }
        }
        let alpha_init = if s_hist.is_empty() && iter == 0 {
            (1.0 / inf_norm(&d).max(1e-300)).min(1.0)
        } else {
            1.0
        };
        let Some((_, pt)) = strong_wolfe(obj, objf, &x, &d, f, dphi0, alpha_init, opts) else {
            note = Some("line search failed; returning best point found".into());
            break;
        };
        iterations = iter + 1;
        let s: Vec<f64> = pt.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = pt.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            s_hist.push_back(s);
            y_hist.push_back(y);
            rho_hist.push_back(1.0 / sy);
            if s_hist.len() > opts.history {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        let decrease = (f - pt.f) / f.abs().max(1.0);
        x = pt.x;
        f = pt.f;
        g = pt.g;
        if f < best_f {
            best_f = f;
            best_x = x.clone();
            best_g = inf_norm(&g);
        }
        if decrease < opts.loss_tol {
            stall += 1;
            if stall >= opts.stall_iters {
                note = Some("loss stalled below relative tolerance".into());
                break;
            }
        } else {
            stall = 0;
        }
    }
    if converged || f <= best_f {
        best_x = x;
        best_f = f;
        best_g = inf_norm(&g);
    }
    if !converged && best_g < opts.grad_tol {
        converged = true;
    }
    Ok(LbfgsOutcome {
        x: best_x,
        f: best_f,
        g_norm: best_g,
        iterations,
        converged,
        history,
        note,
    })
}

/// L-BFGS minimization of the loss over the problem's free parameters,
/// preconditioned by the per-parameter scales.
pub fn minimize(problem: &ControlProblem, opts: &OptimOptions) -> Result<OptimResult> {
    let scales = problem.scales();
    let z0: Vec<f64> = problem
        .initial_guess
        .iter()
        .zip(&scales)
        .map(|(v, s)| v / s)
        .collect();
    let obj = |z: &[f64]| -> Result<(f64, Vec<f64>)> {
        let x: Vec<f64> = z.iter().zip(&scales).map(|(zi, s)| zi * s).collect();
        let (f, g) = problem.grad(&x)?;
        let gs = g.iter().zip(&scales).map(|(gi, s)| gi * s).collect();
        Ok((f, gs))
    };
    let objf = |z: &[f64]| -> Result<f64> {
        let x: Vec<f64> = z.iter().zip(&scales).map(|(zi, s)| zi * s).collect();
        problem.loss(&x)
    };
    let out = lbfgs(&obj, &objf, &z0, opts)?;
    let x: Vec<f64> = out.x.iter().zip(&scales).map(|(zi, s)| zi * s).collect();
    Ok(OptimResult {
        params: problem.named_params(&x)?,
        loss: out.f,
        gradient_norm: out.g_norm,
        iterations: out.iterations,
        converged: out.converged,
        history: out.history,
        scales,
        note: out.note,
    })
}

/// Minimize from several starts; the lowest loss wins. Failed starts are
/// kept in the log with infinite loss.
pub fn multistart(
    problem: &ControlProblem,
    starts: &[Vec<f64>],
    opts: &OptimOptions,
) -> Result<MultistartOutcome> {
    if starts.is_empty() {
        return Err(Error::InvalidParam("multistart needs at least one start".into()));
    }
    let mut runs = Vec::with_capacity(starts.len());
    for start in starts {
        let sub = problem.with_split(
            &problem.free_names(),
            &problem.fixed_named(),
            start.clone(),
        )?;
        match minimize(&sub, opts) {
            Ok(r) => runs.push(r),
            Err(e) => runs.push(OptimResult {
                params: problem
                    .named_params(start)
                    .unwrap_or_default(),
                loss: f64::INFINITY,
                gradient_norm: f64::INFINITY,
                iterations: 0,
                converged: false,
                history: Vec::new(),
                scales: problem.scales(),
                note: Some(format!("start failed: {e}")),
            }),
        }
    }
    let best_idx = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.loss.is_finite())
        .min_by(|(_, a), (_, b)| a.loss.total_cmp(&b.loss))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Optimization("every start failed".into()))?;
    Ok(MultistartOutcome { best: runs[best_idx].clone(), runs })
}

/// For each grid value of `scan_param`, fix it and minimize over the
/// remaining free parameters, warm-starting each point from its
/// predecessor's optimum. Failures are recorded per point and the scan
/// continues.
pub fn scan1d(
    problem: &ControlProblem,
    scan_param: &str,
    grid: &[f64],
    opts: &OptimOptions,
) -> Result<Vec<ScanPoint>> {
    let free_names = problem.free_names();
    let Some(scan_pos) = free_names.iter().position(|n| *n == scan_param) else {
        return Err(Error::InvalidParam(format!(
            "scan parameter {scan_param:?} is not free in this problem"
        )));
    };
    if grid.is_empty() {
        return Err(Error::InvalidParam("empty scan grid".into()));
    }
    let scan_name = free_names[scan_pos];
    let inner_names: Vec<&'static str> = free_names
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != scan_pos)
        .map(|(_, n)| *n)
        .collect();
    let mut warm: Vec<f64> = problem
        .initial_guess
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != scan_pos)
        .map(|(_, v)| *v)
        .collect();
    let mut rows = Vec::with_capacity(grid.len());
    for &value in grid {
        let mut fixed = problem.fixed_named();
        fixed.push((scan_name, value));
        let outcome = problem
            .with_split(&inner_names, &fixed, warm.clone())
            .and_then(|sub| {
                if inner_names.is_empty() {
                    sub.loss(&[]).map(|loss| (warm.clone(), loss, true))
                } else {
                    minimize(&sub, opts).map(|r| {
                        let inner: Vec<f64> = inner_names
                            .iter()
                            .map(|n| r.value(n).unwrap_or(f64::NAN))
                            .collect();
                        (inner, r.loss, r.converged)
                    })
                }
            });
        match outcome {
            Ok((inner, loss, converged)) => {
                warm.clone_from(&inner);
                rows.push(ScanPoint { value, inner, loss, converged, error: None });
            }
            Err(e) => rows.push(ScanPoint {
                value,
                inner: vec![f64::NAN; inner_names.len()],
                loss: f64::NAN,
                converged: false,
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(rows)
}

/// Loss on the full cartesian grid, no inner optimization. Rows come out in
/// row-major order (grid1 outer, grid2 inner); cells are evaluated in
/// parallel but the output order is fixed.
pub fn scan2d(
    problem: &ControlProblem,
    p1: &str,
    grid1: &[f64],
    p2: &str,
    grid2: &[f64],
) -> Result<Vec<GridPoint>> {
    let free_names = problem.free_names();
    if free_names.len() != 2 || !free_names.contains(&p1) || !free_names.contains(&p2) || p1 == p2
    {
        return Err(Error::InvalidParam(format!(
            "2-D scan needs exactly the two free parameters, got free {free_names:?}, scan ({p1:?}, {p2:?})"
        )));
    }
    if grid1.is_empty() || grid2.is_empty() {
        return Err(Error::InvalidParam("empty scan grid".into()));
    }
    let cells: Vec<(f64, f64)> = grid1
        .iter()
        .flat_map(|&a| grid2.iter().map(move |&b| (a, b)))
        .collect();
    let rows: Vec<GridPoint> = cells
        .par_iter()
        .map(|&(a, b)| {
            let x: Vec<f64> = free_names
                .iter()
                .map(|n| if *n == p1 { a } else { b })
                .collect();
            match problem.loss(&x) {
                Ok(loss) => GridPoint { p1: a, p2: b, loss, error: None },
                Err(e) => GridPoint { p1: a, p2: b, loss: f64::NAN, error: Some(e.to_string()) },
            }
        })
        .collect();
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{initial_state, truncated_thermal_mean};
    use crate::linalg::expm_frechet;
    use crate::schemes::{Scheme, LEVEL_G};

    fn problem(scheme: Scheme, fock: usize, horizon: f64, guess: Vec<f64>) -> ControlProblem {
        let model = SchemeModel::new(scheme, fock).unwrap();
        let rho0 = initial_state(LEVEL_G, 1.0, &model.space()).unwrap();
        ControlProblem::all_free(model, rho0, horizon, guess).unwrap()
    }

    #[test]
    fn loss_at_zero_horizon_is_initial_phonon_number() {
        let p = problem(Scheme::rwsc_default(), 10, 0.0, vec![-1.0, 0.3]);
        let loss = p.loss(&[-1.0, 0.3]).unwrap();
        assert!((loss - truncated_thermal_mean(1.0, 10).unwrap()).abs() < 1e-12);
        assert!((loss - 0.99022).abs() < 5e-6);
    }

    #[test]
    fn loss_without_drive_keeps_initial_phonon_number() {
        let p = problem(Scheme::rwsc_default(), 6, 50.0, vec![-1.0, 0.0]);
        let want = truncated_thermal_mean(1.0, 6).unwrap();
        assert!((p.loss(&[-1.0, 0.0]).unwrap() - want).abs() < 1e-10);
        assert!((p.loss(&[-0.3, 0.0]).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn loss_is_even_in_the_drive() {
        let p = problem(Scheme::rwsc_default(), 5, 20.0, vec![-1.0, 0.3]);
        let a = p.loss(&[-0.9, 0.45]).unwrap();
        let b = p.loss(&[-0.9, -0.45]).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn gradient_vanishes_at_zero_drive() {
        let p = problem(Scheme::rwsc_default(), 5, 20.0, vec![-1.0, 0.3]);
        let (_, g) = p.grad(&[-0.9, 0.0]).unwrap();
        assert!(g[1].abs() < 1e-12, "domega gradient at omega=0: {}", g[1]);
    }

    #[test]
    fn gradient_matches_finite_differences_and_per_direction_route() {
        let cases = [
            (Scheme::rwsc_default(), vec![-0.9, 0.45], 12.0),
            (Scheme::swsc_default(), vec![-1.05, 0.8], 9.0),
            (Scheme::eit3_default(), vec![55.0, 4.0, 13.0], 25.0),
            (Scheme::eit4_default(), vec![60.0, 59.5, 2.3, 15.0], 30.0),
        ];
        for (scheme, x, horizon) in cases {
            let p = problem(scheme, 4, horizon, x.clone());
            let (loss, g) = p.grad(&x).unwrap();
            assert!((loss - p.loss(&x).unwrap()).abs() < 1e-12 * loss.abs().max(1.0));
            let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-10);
            let a = p.scaled_generator(&x).unwrap();
            for i in 0..x.len() {
                // Richardson-extrapolated central difference: the plain
                // stencil at this base step leaves visible h^2 truncation
                // on the detuning axes.
                let h = 1e-4 * x[i].abs().max(1.0);
                let cd = |h: f64| {
                    let mut up = x.clone();
                    up[i] += h;
                    let mut dn = x.clone();
                    dn[i] -= h;
                    (p.loss(&up).unwrap() - p.loss(&dn).unwrap()) / (2.0 * h)
                };
                let fd = (4.0 * cd(h / 2.0) - cd(h)) / 3.0;
                assert!(
                    ((g[i] - fd) / gnorm).abs() < 1e-6,
                    "{} param {i}: grad {} vs fd {fd}",
                    scheme.id().token(),
                    g[i]
                );
                // Per-direction Frechet route: block evaluation in the
                // direction of one generator.
                let mut e = p.model().generators()[i].matrix.clone();
                e.mapv_inplace(|z| z * horizon);
                let (_, l_dir) = expm_frechet(&a, &e).unwrap();
                let v_t = matvec(&l_dir, &p.v0);
                let mut per_dir = 0.0;
                for &(c, m) in &p.w_support {
                    per_dir += m * v_t[c].re;
                }
                assert!(
                    (g[i] - per_dir).abs() < 1e-9 * per_dir.abs().max(1.0),
                    "{} param {i}: adjoint {} vs per-direction {per_dir}",
                    scheme.id().token(),
                    g[i]
                );
            }
        }
    }

    #[test]
    fn quadratic_bowl_minimized_in_few_iterations() {
        let obj = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let f = (x[0] - 1.5).powi(2) + 4.0 * (x[1] + 0.5).powi(2);
            Ok((f, vec![2.0 * (x[0] - 1.5), 8.0 * (x[1] + 0.5)]))
        };
        let objf = |x: &[f64]| obj(x).map(|(f, _)| f);
        let out = lbfgs(&obj, &objf, &[8.0, 3.0], &OptimOptions::default()).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 3, "took {} iterations", out.iterations);
        assert!((out.x[0] - 1.5).abs() < 1e-7);
        assert!((out.x[1] + 0.5).abs() < 1e-7);
    }

    #[test]
    fn minimize_improves_on_the_start_and_reaches_stationarity() {
        let p = problem(Scheme::rwsc_default(), 6, 40.0, vec![-1.0, 0.3]);
        let start_loss = p.loss(&[-1.0, 0.3]).unwrap();
        let r = minimize(&p, &OptimOptions::default()).unwrap();
        assert!(r.loss <= start_loss, "loss {} above start {start_loss}", r.loss);
        assert!(r.converged, "no convergence: {r:?}");
        assert!(r.gradient_norm < 1e-8);
        assert_eq!(r.params.len(), 2);
        assert!(r.value("delta").unwrap() < 0.0);
        assert!(!r.history.is_empty());
    }

    #[test]
    fn fixed_parameters_are_respected() {
        let model = SchemeModel::new(Scheme::rwsc_default(), 6).unwrap();
        let rho0 = initial_state(LEVEL_G, 1.0, &model.space()).unwrap();
        let p = ControlProblem::new(model, rho0, 30.0, &["omega"], &[("delta", -1.0)], vec![0.3])
            .unwrap();
        let (_, g) = p.grad(&[0.4]).unwrap();
        assert_eq!(g.len(), 1);
        let r = minimize(&p, &OptimOptions::default()).unwrap();
        assert_eq!(r.value("delta").unwrap(), -1.0);
        assert!(r.value("omega").unwrap().abs() > 0.05);
    }

    #[test]
    fn split_validation_catches_mistakes() {
        let base = problem(Scheme::rwsc_default(), 5, 10.0, vec![-1.0, 0.3]);
        // Parameter in both sets.
        assert!(base.with_split(&["delta"], &[("delta", -1.0)], vec![-1.0]).is_err());
        // Uncovered parameter.
        assert!(base.with_split(&["omega"], &[], vec![0.3]).is_err());
        // Unknown name.
        assert!(base.with_split(&["delta", "omega", "zeta"], &[], vec![0.0; 3]).is_err());
        // Guess length mismatch.
        assert!(base.with_split(&["delta", "omega"], &[], vec![0.3]).is_err());
        // Non-finite fixed value.
        assert!(base
            .with_split(&["omega"], &[("delta", f64::NAN)], vec![0.3])
            .is_err());
        // A correct split works.
        assert!(base.with_split(&["omega"], &[("delta", -1.0)], vec![0.3]).is_ok());
    }

    #[test]
    fn scan1d_warm_starts_and_records_rows() {
        let p = problem(Scheme::rwsc_default(), 5, 25.0, vec![-1.0, 0.3]);
        let grid = [-1.05, -1.0, -0.95, -0.9, -0.85];
        let rows = scan1d(&p, "delta", &grid, &OptimOptions::default()).unwrap();
        assert_eq!(rows.len(), grid.len());
        for (row, want) in rows.iter().zip(grid) {
            assert_eq!(row.value, want);
            assert!(row.error.is_none(), "{:?}", row.error);
            assert!(row.loss.is_finite());
            assert_eq!(row.inner.len(), 1);
            assert!(row.inner[0].abs() > 0.01);
        }
    }

    #[test]
    fn scan1d_rejects_non_free_parameter() {
        let p = problem(Scheme::rwsc_default(), 5, 25.0, vec![-1.0, 0.3]);
        assert!(scan1d(&p, "nope", &[-1.0], &OptimOptions::default()).is_err());
    }

    #[test]
    fn scan2d_matches_pointwise_loss() {
        let p = problem(Scheme::rwsc_default(), 5, 25.0, vec![-1.0, 0.3]);
        let rows = scan2d(&p, "delta", &[-1.0, -0.9], "omega", &[0.3, 0.4, 0.5]).unwrap();
        assert_eq!(rows.len(), 6);
        // Row-major: delta outer, omega inner.
        assert_eq!((rows[0].p1, rows[0].p2), (-1.0, 0.3));
        assert_eq!((rows[4].p1, rows[4].p2), (-0.9, 0.4));
        for row in &rows {
            let direct = p.loss(&[row.p1, row.p2]).unwrap();
            assert!((row.loss - direct).abs() < 1e-14);
        }
        let single = scan2d(&p, "delta", &[-1.0], "omega", &[0.4]).unwrap();
        assert_eq!(single.len(), 1);
        assert!((single[0].loss - p.loss(&[-1.0, 0.4]).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn multistart_is_deterministic_and_picks_the_best() {
        let p = problem(Scheme::rwsc_default(), 5, 25.0, vec![-1.0, 0.3]);
        let opts = OptimOptions::default();
        let twin = multistart(&p, &[vec![-1.0, 0.3], vec![-1.0, 0.3]], &opts).unwrap();
        assert_eq!(twin.runs[0].loss, twin.runs[1].loss);
        assert_eq!(twin.runs[0].params, twin.runs[1].params);

        let mixed = multistart(&p, &[vec![1.2, 0.3], vec![-1.0, 0.3]], &opts).unwrap();
        assert_eq!(mixed.runs.len(), 2);
        assert!(mixed.best.value("delta").unwrap() < 0.0);
        assert!(mixed.best.loss <= mixed.runs[0].loss);
    }

    #[test]
    fn default_guesses_sit_on_the_resonance_line() {
        let g = default_initial_guess(SchemeId::Eit3);
        let total = g[1].powi(2) + g[2].powi(2);
        assert!((total - 4.0 * (1.0 + g[0])).abs() < 1e-9);
        assert!((g[1] / g[2] - 0.15).abs() < 1e-12);
        let g4 = default_initial_guess(SchemeId::Eit4);
        assert_eq!(g4.len(), 4);
        assert_eq!(g4[0], g4[1]);
        assert_eq!(default_initial_guess(SchemeId::Rwsc), vec![-1.0, 0.3]);
    }
}
