//! The four cooling schemes as parametric Lindbladian families.
//!
//! Every tunable parameter enters the Hamiltonian linearly, so each scheme
//! is a drift superoperator (trap term, constant level offsets, dissipator)
//! plus a fixed generator per parameter:
//! `L(params) = drift + sum_i params[i] * generator[i]`.
//! The generators double as the exact derivatives `dL/dparams[i]`.
//!
//! Level order is (g, e, r, t); frequencies are in trap units (nu = 1).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hilbert::{level_op, number_op, position_op, SpaceSpec};
use crate::linalg::{dagger, eigh, identity, matmul, CMat};
use crate::liouville::{
    hamiltonian_part, recoil_dissipator, DipolePattern, RecoilChannel, Superoperator,
};

pub const LEVEL_G: usize = 0;
pub const LEVEL_E: usize = 1;
pub const LEVEL_R: usize = 2;
pub const LEVEL_T: usize = 3;

/// Two-level sideband cooling constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SidebandConsts {
    pub eta: f64,
    /// Decay rate of the excited level, units of nu.
    pub gamma: f64,
}

/// Recoil geometry of one decay path: the Lamb-Dicke scale of the emitted
/// photon and the emission dipole pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoilSpec {
    pub lamb_dicke: f64,
    pub pattern: DipolePattern,
}

/// Three-level Lambda-system constants.
///
/// `eta_g` and `eta_r` are signed wavevector projections onto the trap axis;
/// opposite signs mean counter-propagating beams. The coupling of level `x`
/// is `(Omega_x/2)(|e><x| e^{+i eta_x X} + h.c.)`, so the two-photon
/// recoil between the laser-coupled levels is `eta_g - eta_r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EitThreeConsts {
    pub eta_g: f64,
    pub eta_r: f64,
    pub gamma_g: f64,
    pub gamma_r: f64,
    pub recoil_g: RecoilSpec,
    pub recoil_r: RecoilSpec,
}

impl EitThreeConsts {
    /// Standard geometry: counter-propagating beams along the trap axis,
    /// decay branching 1:2 between the two ground levels.
    pub fn counter_propagating() -> Self {
        EitThreeConsts {
            eta_g: 0.15,
            eta_r: -0.15,
            gamma_g: 20.0 / 3.0,
            gamma_r: 40.0 / 3.0,
            recoil_g: RecoilSpec { lamb_dicke: 0.15, pattern: DipolePattern::Parallel },
            recoil_r: RecoilSpec { lamb_dicke: -0.15, pattern: DipolePattern::Parallel },
        }
    }

    /// The Lambda system left after deleting level |t> from the four-level
    /// scheme: same couplings, rates, and recoil assignments on the shared
    /// levels. The restricted Hamiltonians agree entry for entry.
    pub fn from_four_level(c: &EitFourConsts) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2 * c.eta;
        EitThreeConsts {
            eta_g: -s,
            eta_r: s,
            gamma_g: c.gamma_g,
            gamma_r: c.gamma_r,
            recoil_g: RecoilSpec { lamb_dicke: c.eta, pattern: DipolePattern::Parallel },
            recoil_r: RecoilSpec { lamb_dicke: c.eta, pattern: DipolePattern::Perpendicular },
        }
    }

    /// Total decay rate of the excited level.
    pub fn total_gamma(&self) -> f64 {
        self.gamma_g + self.gamma_r
    }
}

/// Four-level (two ground, two excited Zeeman sublevels) constants.
///
/// One pi-polarized beam drives g-e and r-t with shared Rabi frequency, one
/// sigma+ beam drives r-e; both project onto the trap axis with
/// `(sqrt(2)/2) eta`. Spontaneous emission recoil carries the full `eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EitFourConsts {
    pub eta: f64,
    /// pi-transition decay rate (e to g, t to r), units of nu.
    pub gamma_g: f64,
    /// sigma-transition decay rate (e to r, t to g), units of nu.
    pub gamma_r: f64,
    /// Zeeman offset between the two pi detunings: Delta_t = Delta_g + offset.
    pub delta_t_offset: f64,
}

impl EitFourConsts {
    /// 40Ca+ S1/2 to P1/2 cooling at a 1.3 MHz trap: branching 1:2 from the
    /// Clebsch-Gordan coefficients of the J=1/2 to J=1/2 transition, total
    /// linewidth 2pi x 20 MHz split as gamma_g + gamma_r per excited level.
    pub fn calcium() -> Self {
        EitFourConsts {
            eta: lamb_dicke(397.0e-9, 40.0, 1.3e6),
            gamma_g: (20.0 / 3.0) / 1.3,
            gamma_r: (40.0 / 3.0) / 1.3,
            delta_t_offset: 8.0,
        }
    }
}

/// Lamb-Dicke parameter `k * sqrt(hbar / (2 m nu))` for a transition at
/// `wavelength` (meters), ion mass in atomic mass units, and trap frequency
/// `nu / 2pi` in Hz.
pub fn lamb_dicke(wavelength: f64, mass_amu: f64, trap_freq_hz: f64) -> f64 {
    const HBAR: f64 = 1.054_571_817e-34;
    const AMU: f64 = 1.660_539_066_60e-27;
    let k = 2.0 * std::f64::consts::PI / wavelength;
    let nu = 2.0 * std::f64::consts::PI * trap_freq_hz;
    k * (HBAR / (2.0 * mass_amu * AMU * nu)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeId {
    Rwsc,
    Swsc,
    Eit3,
    Eit4,
}

impl SchemeId {
    pub fn token(self) -> &'static str {
        match self {
            SchemeId::Rwsc => "rwsc",
            SchemeId::Swsc => "swsc",
            SchemeId::Eit3 => "eit3",
            SchemeId::Eit4 => "eit4",
        }
    }

    pub fn internal_dim(self) -> usize {
        match self {
            SchemeId::Rwsc | SchemeId::Swsc => 2,
            SchemeId::Eit3 => 3,
            SchemeId::Eit4 => 4,
        }
    }

    /// Control parameter names, in the order used by parameter vectors.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            SchemeId::Rwsc | SchemeId::Swsc => &["delta", "omega"],
            SchemeId::Eit3 => &["delta", "omega_g", "omega_r"],
            SchemeId::Eit4 => &["delta_g", "delta_r", "omega_g", "omega_r"],
        }
    }

    /// Characteristic magnitude per parameter, used to precondition the
    /// optimizer: EIT detunings run to order 100 while Rabi frequencies and
    /// sideband detunings stay of order one.
    pub fn param_scales(self) -> &'static [f64] {
        match self {
            SchemeId::Rwsc | SchemeId::Swsc => &[1.0, 1.0],
            SchemeId::Eit3 => &[10.0, 1.0, 1.0],
            SchemeId::Eit4 => &[10.0, 10.0, 1.0, 1.0],
        }
    }
}

/// A cooling scheme together with its physical constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    Rwsc(SidebandConsts),
    Swsc(SidebandConsts),
    Eit3(EitThreeConsts),
    Eit4(EitFourConsts),
}

impl Scheme {
    pub fn rwsc_default() -> Self {
        Scheme::Rwsc(SidebandConsts { eta: 0.1, gamma: 0.1 })
    }

    pub fn swsc_default() -> Self {
        Scheme::Swsc(SidebandConsts { eta: 0.08, gamma: 0.1 })
    }

    pub fn eit3_default() -> Self {
        Scheme::Eit3(EitThreeConsts::counter_propagating())
    }

    pub fn eit4_default() -> Self {
        Scheme::Eit4(EitFourConsts::calcium())
    }

    pub fn id(&self) -> SchemeId {
        match self {
            Scheme::Rwsc(_) => SchemeId::Rwsc,
            Scheme::Swsc(_) => SchemeId::Swsc,
            Scheme::Eit3(_) => SchemeId::Eit3,
            Scheme::Eit4(_) => SchemeId::Eit4,
        }
    }

    pub fn internal_dim(&self) -> usize {
        self.id().internal_dim()
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        self.id().param_names()
    }

    pub fn param_count(&self) -> usize {
        self.param_names().len()
    }
}

/// Ordered control parameters for one scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlParams {
    pub values: Vec<f64>,
}

impl ControlParams {
    pub fn new(values: Vec<f64>) -> Self {
        ControlParams { values }
    }

    /// Builds the ordered vector from (name, value) pairs; every scheme
    /// parameter must appear exactly once.
    pub fn from_named(id: SchemeId, pairs: &[(&str, f64)]) -> Result<Self> {
        let names = id.param_names();
        let mut values = vec![f64::NAN; names.len()];
        for (name, value) in pairs {
            let slot = names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::InvalidParam(format!("unknown parameter {name:?} for {}", id.token())))?;
            if !values[slot].is_nan() {
                return Err(Error::InvalidParam(format!("duplicate parameter {name:?}")));
            }
            values[slot] = *value;
        }
        if let Some(k) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::InvalidParam(format!("missing parameter {:?}", names[k])));
        }
        Ok(ControlParams { values })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// `exp(i s X)` with `X = a + a^dagger`, via the eigenbasis of X.
fn phase_exp(s: f64, d: usize) -> Result<CMat> {
    let (lam, u) = eigh(&position_op(d))?;
    let mut scaled = u.clone();
    for k in 0..d {
        let ph = Complex64::from_polar(1.0, s * lam[k]);
        for r in 0..d {
            scaled[(r, k)] *= ph;
        }
    }
    Ok(matmul(&scaled, &dagger(&u)))
}

/// `sin(s X)`, the node-placed standing wave profile.
fn sin_x(s: f64, d: usize) -> Result<CMat> {
    let (lam, u) = eigh(&position_op(d))?;
    let mut scaled = u.clone();
    for k in 0..d {
        let v = Complex64::new((s * lam[k]).sin(), 0.0);
        for r in 0..d {
            scaled[(r, k)] *= v;
        }
    }
    Ok(matmul(&scaled, &dagger(&u)))
}

/// `0.5 * (raising + raising^dagger)`: a coupling term at unit Rabi
/// frequency, given its raising half.
fn coupling_from_raising(raising: &CMat) -> CMat {
    let mut h = dagger(raising);
    h.zip_mut_with(raising, |o, &z| *o += z);
    h.mapv_inplace(|z| z * 0.5);
    h
}

fn projector(n: usize, level: usize, d: usize) -> CMat {
    crate::linalg::kron(&level_op(n, level, level), &identity(d))
}

/// Constant Hamiltonian term and one derivative term per parameter, in
/// `param_names` order. Every parameter multiplies its term linearly.
pub fn hamiltonian_terms(scheme: &Scheme, space: &SpaceSpec) -> Result<(CMat, Vec<CMat>)> {
    if space.internal_dim != scheme.internal_dim() {
        return Err(Error::InvalidParam(format!(
            "{} needs {} internal levels, space has {}",
            scheme.id().token(),
            scheme.internal_dim(),
            space.internal_dim
        )));
    }
    let d = space.fock_dim;
    let kron = crate::linalg::kron;
    let trap = |n: usize| kron(&identity(n), &number_op(d));
    match scheme {
        Scheme::Rwsc(c) => {
            let h0 = trap(2);
            let mut d_delta = projector(2, LEVEL_E, d);
            d_delta.mapv_inplace(|z| -z);
            let raising = kron(&level_op(2, LEVEL_E, LEVEL_G), &phase_exp(-c.eta, d)?);
            Ok((h0, vec![d_delta, coupling_from_raising(&raising)]))
        }
        Scheme::Swsc(c) => {
            let h0 = trap(2);
            let mut d_delta = projector(2, LEVEL_E, d);
            d_delta.mapv_inplace(|z| -z);
            let mut sigma_x = level_op(2, LEVEL_E, LEVEL_G);
            sigma_x[(LEVEL_G, LEVEL_E)] = Complex64::new(1.0, 0.0);
            let mut coupling = kron(&sigma_x, &sin_x(c.eta, d)?);
            coupling.mapv_inplace(|z| z * 0.5);
            Ok((h0, vec![d_delta, coupling]))
        }
        Scheme::Eit3(c) => {
            let h0 = trap(3);
            let mut d_delta = projector(3, LEVEL_E, d);
            d_delta.mapv_inplace(|z| -z);
            let raise_g = kron(&level_op(3, LEVEL_E, LEVEL_G), &phase_exp(c.eta_g, d)?);
            let raise_r = kron(&level_op(3, LEVEL_E, LEVEL_R), &phase_exp(c.eta_r, d)?);
            Ok((
                h0,
                vec![d_delta, coupling_from_raising(&raise_g), coupling_from_raising(&raise_r)],
            ))
        }
        Scheme::Eit4(c) => {
            let mut h0 = trap(4);
            h0.scaled_add(Complex64::new(-c.delta_t_offset, 0.0), &projector(4, LEVEL_T, d));
            let pe = projector(4, LEVEL_E, d);
            let pr = projector(4, LEVEL_R, d);
            let pt = projector(4, LEVEL_T, d);
            let mut d_dg = pe;
            d_dg.scaled_add(Complex64::new(1.0, 0.0), &pr);
            d_dg.scaled_add(Complex64::new(2.0, 0.0), &pt);
            d_dg.mapv_inplace(|z| -z);
            let mut d_dr = pr;
            d_dr.scaled_add(Complex64::new(1.0, 0.0), &pt);
            let s = std::f64::consts::FRAC_1_SQRT_2 * c.eta;
            let lower_ge = kron(&level_op(4, LEVEL_G, LEVEL_E), &phase_exp(s, d)?);
            let lower_rt = kron(&level_op(4, LEVEL_R, LEVEL_T), &phase_exp(s, d)?);
            let lower_re = kron(&level_op(4, LEVEL_R, LEVEL_E), &phase_exp(-s, d)?);
            let mut d_og = coupling_from_raising(&dagger(&lower_ge));
            d_og.zip_mut_with(&coupling_from_raising(&dagger(&lower_rt)), |o, &z| *o += z);
            let d_or = coupling_from_raising(&dagger(&lower_re));
            Ok((h0, vec![d_dg, d_dr, d_og, d_or]))
        }
    }
}

/// Spontaneous-emission channels of a scheme; parameter-independent.
pub fn recoil_channels(scheme: &Scheme) -> Vec<RecoilChannel> {
    match scheme {
        Scheme::Rwsc(c) | Scheme::Swsc(c) => vec![RecoilChannel {
            lower: LEVEL_G,
            upper: LEVEL_E,
            rate: c.gamma,
            lamb_dicke: c.eta,
            pattern: DipolePattern::Parallel,
        }],
        Scheme::Eit3(c) => vec![
            RecoilChannel {
                lower: LEVEL_G,
                upper: LEVEL_E,
                rate: c.gamma_g,
                lamb_dicke: c.recoil_g.lamb_dicke,
                pattern: c.recoil_g.pattern,
            },
            RecoilChannel {
                lower: LEVEL_R,
                upper: LEVEL_E,
                rate: c.gamma_r,
                lamb_dicke: c.recoil_r.lamb_dicke,
                pattern: c.recoil_r.pattern,
            },
        ],
        Scheme::Eit4(c) => vec![
            RecoilChannel {
                lower: LEVEL_G,
                upper: LEVEL_E,
                rate: c.gamma_g,
                lamb_dicke: c.eta,
                pattern: DipolePattern::Parallel,
            },
            RecoilChannel {
                lower: LEVEL_R,
                upper: LEVEL_E,
                rate: c.gamma_r,
                lamb_dicke: c.eta,
                pattern: DipolePattern::Perpendicular,
            },
            RecoilChannel {
                lower: LEVEL_G,
                upper: LEVEL_T,
                rate: c.gamma_r,
                lamb_dicke: c.eta,
                pattern: DipolePattern::Perpendicular,
            },
            RecoilChannel {
                lower: LEVEL_R,
                upper: LEVEL_T,
                rate: c.gamma_g,
                lamb_dicke: c.eta,
                pattern: DipolePattern::Parallel,
            },
        ],
    }
}

/// A scheme bound to a Fock truncation, with its drift and parameter
/// generators assembled once and reused across parameter points.
#[derive(Debug, Clone)]
pub struct SchemeModel {
    scheme: Scheme,
    space: SpaceSpec,
    drift: Superoperator,
    generators: Vec<Superoperator>,
}

impl SchemeModel {
    pub fn new(scheme: Scheme, fock_dim: usize) -> Result<Self> {
        let space = SpaceSpec::new(scheme.internal_dim(), fock_dim)?;
        let (h0, h_terms) = hamiltonian_terms(&scheme, &space)?;
        let mut drift = hamiltonian_part(&h0, &space)?;
        for ch in recoil_channels(&scheme) {
            let diss = recoil_dissipator(&ch, &space)?;
            drift.add_scaled(1.0, &diss);
        }
        let generators = h_terms
            .iter()
            .map(|h| hamiltonian_part(h, &space))
            .collect::<Result<Vec<_>>>()?;
        Ok(SchemeModel { scheme, space, drift, generators })
    }

    pub fn scheme(&self) -> &Scheme {
        &self.scheme
    }

    pub fn space(&self) -> SpaceSpec {
        self.space
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        self.scheme.param_names()
    }

    pub fn param_count(&self) -> usize {
        self.generators.len()
    }

    pub fn drift(&self) -> &Superoperator {
        &self.drift
    }

    /// Exact parameter derivatives of the Lindbladian; constant in the
    /// parameters because every coupling is linear.
    pub fn generators(&self) -> &[Superoperator] {
        &self.generators
    }

    /// Lindbladian at the given parameter vector.
    pub fn assemble(&self, params: &[f64]) -> Result<Superoperator> {
        if params.len() != self.generators.len() {
            return Err(Error::InvalidParam(format!(
                "{} takes {} parameters, got {}",
                self.scheme.id().token(),
                self.generators.len(),
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("parameters must be finite".into()));
        }
        let mut l = self.drift.clone();
        for (value, gen) in params.iter().zip(&self.generators) {
            l.add_scaled(*value, gen);
        }
        Ok(l)
    }
}

/// One-shot Lindbladian assembly for a parameter point.
pub fn build(scheme: &Scheme, params: &[f64], space: &SpaceSpec) -> Result<Superoperator> {
    if space.internal_dim != scheme.internal_dim() {
        return Err(Error::InvalidParam(format!(
            "{} needs {} internal levels, space has {}",
            scheme.id().token(),
            scheme.internal_dim(),
            space.internal_dim
        )));
    }
    SchemeModel::new(*scheme, space.fock_dim)?.assemble(params)
}

/// Named parameter derivatives of the Lindbladian. Parameter-independent;
/// see [`SchemeModel::generators`].
pub fn derivative_generators(
    scheme: &Scheme,
    space: &SpaceSpec,
) -> Result<Vec<(&'static str, Superoperator)>> {
    if space.internal_dim != scheme.internal_dim() {
        return Err(Error::InvalidParam(format!(
            "{} needs {} internal levels, space has {}",
            scheme.id().token(),
            scheme.internal_dim(),
            space.internal_dim
        )));
    }
    let model = SchemeModel::new(*scheme, space.fock_dim)?;
    Ok(model
        .param_names()
        .iter()
        .copied()
        .zip(model.generators.iter().cloned())
        .collect())
}

/// Perturbative steady-state prediction for running-wave sideband cooling.
/// The Rabi frequency cancels in the ratio; an answer exists only in the
/// cooling regime (red-sideband rate exceeding the blue).
pub fn rwsc_steady_nbar(c: &SidebandConsts, delta: f64, omega: f64) -> Result<f64> {
    let scatter = |shift: f64| -> f64 {
        c.gamma / ((delta + shift).powi(2) + c.gamma.powi(2) / 4.0)
            + 0.4 * c.gamma / (delta.powi(2) + c.gamma.powi(2) / 4.0)
    };
    let pref = (c.eta * omega / 2.0).powi(2);
    steady_ratio(pref * scatter(-1.0), pref * scatter(1.0))
}

/// Node-placed standing-wave analogue: the carrier and blue off-resonant
/// scattering terms drop out.
pub fn swsc_steady_nbar(c: &SidebandConsts, delta: f64, omega: f64) -> Result<f64> {
    let pref = (c.eta * omega / 2.0).powi(2);
    let a = |shift: f64| pref * c.gamma / ((delta + shift).powi(2) + c.gamma.powi(2) / 4.0);
    steady_ratio(a(-1.0), a(1.0))
}

/// Weak-coupling steady state of the Lambda scheme. Valid as a reference
/// curve near the dark-resonance condition; derived assuming a weak g-leg.
pub fn eit_steady_nbar(c: &EitThreeConsts, delta: f64, omega_g: f64, omega_r: f64) -> Result<f64> {
    let gamma = c.total_gamma();
    let gn2 = (gamma * 1.0).powi(2);
    let a = |sign: f64| {
        let det = (omega_g.powi(2) + omega_r.powi(2)) / 4.0 - (1.0 - sign * delta);
        (omega_g.powi(2) / gamma) * gn2 / (gn2 + 4.0 * det.powi(2))
    };
    steady_ratio(a(1.0), a(-1.0))
}

fn steady_ratio(a_plus: f64, a_minus: f64) -> Result<f64> {
    let denom = a_minus - a_plus;
    if !(denom > 0.0) || a_plus < 0.0 {
        return Err(Error::InvalidState(format!(
            "no cooling: heating coefficient {a_plus:.3e} >= cooling coefficient {a_minus:.3e}"
        )));
    }
    Ok(a_plus / denom)
}

/// Residual of the power-broadened red-sideband resonance condition
/// `sqrt(delta^2 + omega^2) = nu`; zero on the resonance line.
pub fn shifted_resonance(delta: f64, omega: f64, nu: f64) -> f64 {
    delta.hypot(omega) - nu
}

/// AC Stark shift of the internal bright state of the Lambda scheme.
pub fn ac_stark(delta: f64, omega_g: f64, omega_r: f64) -> f64 {
    0.5 * (-delta + (omega_g.powi(2) + omega_r.powi(2) + delta.powi(2)).sqrt())
}
