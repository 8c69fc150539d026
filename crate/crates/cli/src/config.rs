//! Experiment configuration: TOML schema, validation, and resolution into
//! core types.
//!
//! Configs are strict: unknown keys are rejected so a typo cannot silently
//! fall back to a default. Frequencies are in units of the trap frequency
//! unless the scheme block carries `nu_mhz`, in which case the rates of the
//! four-level scheme are read in MHz and converted on load.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use coolopt_core::schemes::{lamb_dicke, RecoilSpec, LEVEL_E, LEVEL_G, LEVEL_R, LEVEL_T};
use coolopt_core::{DipolePattern, EitFourConsts, EitThreeConsts, Scheme, SchemeId, SidebandConsts};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: ExperimentSection,
    pub scheme: SchemeSection,
    pub space: SpaceSection,
    #[serde(default)]
    pub initial: InitialSection,
    pub optimize: Option<OptimizeSection>,
    pub scan1d: Option<Scan1dSection>,
    pub scan2d: Option<Scan2dSection>,
    pub evolve: Option<EvolveSection>,
    pub steady: Option<SteadySection>,
    pub gradcheck: Option<GradcheckSection>,
    pub table1: Option<Table1Section>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub mode: String,
    /// Output file stem; artifacts are `<stem>.csv`, `<stem>.manifest.toml`,
    /// and on numerical failure `<stem>.FAILED`.
    pub output: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub kind: String,
    pub eta: Option<f64>,
    pub gamma: Option<f64>,
    pub eta_g: Option<f64>,
    pub eta_r: Option<f64>,
    pub gamma_g: Option<f64>,
    pub gamma_r: Option<f64>,
    pub delta_t_offset: Option<f64>,
    /// Trap frequency in MHz; when present, `gamma_g`, `gamma_r`, and
    /// `delta_t_offset` are read in MHz and divided by this value.
    pub nu_mhz: Option<f64>,
    pub wavelength_nm: Option<f64>,
    pub mass_amu: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSection {
    pub fock_dim: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub nbar: f64,
    pub level: Option<String>,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection { nbar: 1.0, level: None }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    pub horizon: f64,
    pub guess: Option<Vec<f64>>,
    pub starts: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub fixed: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub steps: Option<usize>,
    pub values: Option<Vec<f64>>,
}

impl GridSection {
    pub fn expand(&self, label: &str) -> Result<Vec<f64>> {
        match (&self.values, self.from, self.to, self.steps) {
            (Some(v), None, None, None) => {
                if v.is_empty() {
                    bail!("{label}: `values` must not be empty");
                }
                Ok(v.clone())
            }
            (None, Some(from), Some(to), Some(steps)) => {
                if steps == 0 {
                    bail!("{label}: `steps` must be at least 1");
                }
                if steps == 1 {
                    if from != to {
                        bail!("{label}: a single-step grid needs `from` == `to`");
                    }
                    return Ok(vec![from]);
                }
                let h = (to - from) / (steps - 1) as f64;
                Ok((0..steps).map(|k| from + h * k as f64).collect())
            }
            _ => bail!("{label}: give either `values` or all of `from`, `to`, `steps`"),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scan1dSection {
    pub parameter: String,
    pub grid: GridSection,
    pub horizons: Vec<f64>,
    pub guess: Option<Vec<f64>>,
    #[serde(default)]
    pub fixed: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scan2dSection {
    pub p1: String,
    pub p2: String,
    pub grid1: GridSection,
    pub grid2: GridSection,
    pub horizon: f64,
    #[serde(default)]
    pub fixed: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSection {
    pub params: Vec<f64>,
    pub t_final: f64,
    pub samples: usize,
    pub fit_window_start: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadySection {
    pub params: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckSection {
    pub horizon: f64,
    pub points: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Section {
    pub horizons: Option<Vec<f64>>,
    pub include_reduced: Option<bool>,
    pub evolve_to: Option<f64>,
    pub samples: Option<usize>,
}

/// Execution mode with all values resolved and unit conversion applied.
#[derive(Debug, Clone)]
pub enum Mode {
    Optimize {
        horizon: f64,
        guess: Option<Vec<f64>>,
        starts: Option<Vec<Vec<f64>>>,
        fixed: Vec<(String, f64)>,
    },
    Scan1d {
        parameter: String,
        grid: Vec<f64>,
        horizons: Vec<f64>,
        guess: Option<Vec<f64>>,
        fixed: Vec<(String, f64)>,
    },
    Scan2d {
        p1: String,
        p2: String,
        grid1: Vec<f64>,
        grid2: Vec<f64>,
        horizon: f64,
        fixed: Vec<(String, f64)>,
    },
    Evolve {
        params: Vec<f64>,
        t_final: f64,
        samples: usize,
        fit_window_start: Option<f64>,
    },
    Steady {
        params: Vec<f64>,
    },
    Gradcheck {
        horizon: f64,
        points: Vec<Vec<f64>>,
    },
    Table1 {
        horizons: Vec<f64>,
        include_reduced: bool,
        evolve_to: f64,
        samples: usize,
    },
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Optimize { .. } => "optimize",
            Mode::Scan1d { .. } => "scan1d",
            Mode::Scan2d { .. } => "scan2d",
            Mode::Evolve { .. } => "evolve",
            Mode::Steady { .. } => "steady",
            Mode::Gradcheck { .. } => "gradcheck",
            Mode::Table1 { .. } => "table1",
        }
    }

    /// True when the mode evaluates independent grid points that run
    /// concurrently; false when the computation is one sequential chain.
    pub fn parallel_points(&self) -> bool {
        matches!(self, Mode::Scan2d { .. })
    }
}

/// A fully validated experiment, ready to execute.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub scheme: Scheme,
    pub fock_dim: usize,
    pub nbar0: f64,
    pub initial_level: usize,
    pub mode: Mode,
    pub output_stem: String,
}

pub fn load(path: &Path) -> Result<Experiment> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let file: ConfigFile = toml::from_str(&text)
        .with_context(|| format!("invalid config {}", path.display()))?;
    resolve(&file).with_context(|| format!("invalid config {}", path.display()))
}

fn resolve(file: &ConfigFile) -> Result<Experiment> {
    let scheme = resolve_scheme(&file.scheme)?;
    let id = scheme.id();

    if file.space.fock_dim < 2 {
        bail!("[space] fock_dim must be at least 2, got {}", file.space.fock_dim);
    }
    if !(file.initial.nbar.is_finite() && file.initial.nbar >= 0.0) {
        bail!("[initial] nbar must be a finite non-negative number");
    }
    let initial_level = resolve_level(file.initial.level.as_deref().unwrap_or("g"), id)?;

    if file.experiment.output.is_empty() {
        bail!("[experiment] output must not be empty");
    }

    let mode = resolve_mode(file, id)?;
    Ok(Experiment {
        scheme,
        fock_dim: file.space.fock_dim,
        nbar0: file.initial.nbar,
        initial_level,
        mode,
        output_stem: file.experiment.output.clone(),
    })
}

fn require(value: Option<f64>, kind: &str, field: &str) -> Result<f64> {
    value.ok_or_else(|| anyhow!("[scheme] kind = {kind:?} requires field `{field}`"))
}

fn forbid(value: Option<f64>, kind: &str, field: &str) -> Result<()> {
    if value.is_some() {
        bail!("[scheme] field `{field}` does not apply to kind {kind:?}");
    }
    Ok(())
}

fn resolve_scheme(s: &SchemeSection) -> Result<Scheme> {
    let kind = s.kind.as_str();
    match kind {
        "rwsc" | "swsc" => {
            for (v, f) in [
                (s.eta_g, "eta_g"),
                (s.eta_r, "eta_r"),
                (s.gamma_g, "gamma_g"),
                (s.gamma_r, "gamma_r"),
                (s.delta_t_offset, "delta_t_offset"),
                (s.nu_mhz, "nu_mhz"),
                (s.wavelength_nm, "wavelength_nm"),
                (s.mass_amu, "mass_amu"),
            ] {
                forbid(v, kind, f)?;
            }
            let eta = require(s.eta, kind, "eta")?;
            let gamma = require(s.gamma, kind, "gamma")?;
            if eta <= 0.0 {
                bail!("[scheme] eta must be positive, got {eta}");
            }
            if gamma < 0.0 {
                bail!("[scheme] gamma must be non-negative, got {gamma}");
            }
            let consts = SidebandConsts { eta, gamma };
            Ok(if kind == "rwsc" { Scheme::Rwsc(consts) } else { Scheme::Swsc(consts) })
        }
        "eit3" => {
            for (v, f) in [
                (s.eta, "eta"),
                (s.gamma, "gamma"),
                (s.delta_t_offset, "delta_t_offset"),
                (s.nu_mhz, "nu_mhz"),
                (s.wavelength_nm, "wavelength_nm"),
                (s.mass_amu, "mass_amu"),
            ] {
                forbid(v, kind, f)?;
            }
            let eta_g = require(s.eta_g, kind, "eta_g")?;
            let eta_r = require(s.eta_r, kind, "eta_r")?;
            let gamma_g = require(s.gamma_g, kind, "gamma_g")?;
            let gamma_r = require(s.gamma_r, kind, "gamma_r")?;
            if gamma_g < 0.0 || gamma_r < 0.0 {
                bail!("[scheme] decay rates must be non-negative");
            }
            // Counter-propagating geometry: each decay path recoils along
            // its beam with the parallel dipole pattern.
            Ok(Scheme::Eit3(EitThreeConsts {
                eta_g,
                eta_r,
                gamma_g,
                gamma_r,
                recoil_g: RecoilSpec { lamb_dicke: eta_g, pattern: DipolePattern::Parallel },
                recoil_r: RecoilSpec { lamb_dicke: eta_r, pattern: DipolePattern::Parallel },
            }))
        }
        "eit4" => {
            for (v, f) in [
                (s.gamma, "gamma"),
                (s.eta_g, "eta_g"),
                (s.eta_r, "eta_r"),
            ] {
                forbid(v, kind, f)?;
            }
            let scale = match s.nu_mhz {
                Some(nu) if nu > 0.0 => nu,
                Some(nu) => bail!("[scheme] nu_mhz must be positive, got {nu}"),
                None => 1.0,
            };
            let eta = match (s.eta, s.wavelength_nm, s.mass_amu, s.nu_mhz) {
                (Some(e), None, None, _) => e,
                (None, Some(wl), Some(m), Some(nu)) => {
                    if wl <= 0.0 || m <= 0.0 {
                        bail!("[scheme] wavelength_nm and mass_amu must be positive");
                    }
                    lamb_dicke(wl * 1e-9, m, nu * 1e6)
                }
                (None, _, _, None) => bail!(
                    "[scheme] kind = \"eit4\" needs `eta`, or `wavelength_nm` + `mass_amu` \
                     together with `nu_mhz`"
                ),
                _ => bail!(
                    "[scheme] give either `eta` or the pair `wavelength_nm` + `mass_amu`, \
                     not both"
                ),
            };
            let gamma_g = require(s.gamma_g, kind, "gamma_g")? / scale;
            let gamma_r = require(s.gamma_r, kind, "gamma_r")? / scale;
            let delta_t_offset = require(s.delta_t_offset, kind, "delta_t_offset")? / scale;
            if eta <= 0.0 {
                bail!("[scheme] eta must be positive, got {eta}");
            }
            if gamma_g < 0.0 || gamma_r < 0.0 {
                bail!("[scheme] decay rates must be non-negative");
            }
            Ok(Scheme::Eit4(EitFourConsts { eta, gamma_g, gamma_r, delta_t_offset }))
        }
        other => bail!("[scheme] unknown kind {other:?}; expected rwsc, swsc, eit3, or eit4"),
    }
}

fn resolve_level(name: &str, id: SchemeId) -> Result<usize> {
    let level = match name {
        "g" => LEVEL_G,
        "e" => LEVEL_E,
        "r" => LEVEL_R,
        "t" => LEVEL_T,
        other => bail!("[initial] unknown level {other:?}; expected g, e, r, or t"),
    };
    if level >= id.internal_dim() {
        bail!("[initial] level {name:?} does not exist in scheme {}", id.token());
    }
    Ok(level)
}

fn check_param_names<'a>(
    names: impl IntoIterator<Item = &'a str>,
    id: SchemeId,
    where_: &str,
) -> Result<()> {
    let known = id.param_names();
    for name in names {
        if !known.contains(&name) {
            bail!(
                "{where_}: unknown parameter {name:?} for scheme {}; expected one of {known:?}",
                id.token()
            );
        }
    }
    Ok(())
}

fn fixed_vec(map: &BTreeMap<String, f64>, id: SchemeId, where_: &str) -> Result<Vec<(String, f64)>> {
    check_param_names(map.keys().map(|s| s.as_str()), id, where_)?;
    Ok(map.iter().map(|(k, v)| (k.clone(), *v)).collect())
}

fn check_vector(v: &[f64], expected: usize, where_: &str) -> Result<()> {
    if v.len() != expected {
        bail!("{where_}: expected {expected} values, got {}", v.len());
    }
    if v.iter().any(|x| !x.is_finite()) {
        bail!("{where_}: values must be finite");
    }
    Ok(())
}

fn check_horizon(h: f64, where_: &str) -> Result<()> {
    if !(h.is_finite() && h > 0.0) {
        bail!("{where_}: horizon must be a positive number, got {h}");
    }
    Ok(())
}

fn resolve_mode(file: &ConfigFile, id: SchemeId) -> Result<Mode> {
    let mode_name = file.experiment.mode.as_str();
    let n_params = id.param_names().len();

    // Exactly the block matching the mode must be present.
    let blocks: [(&str, bool); 7] = [
        ("optimize", file.optimize.is_some()),
        ("scan1d", file.scan1d.is_some()),
        ("scan2d", file.scan2d.is_some()),
        ("evolve", file.evolve.is_some()),
        ("steady", file.steady.is_some()),
        ("gradcheck", file.gradcheck.is_some()),
        ("table1", file.table1.is_some()),
    ];
    if !blocks.iter().any(|(name, _)| *name == mode_name) {
        bail!(
            "[experiment] unknown mode {mode_name:?}; expected one of optimize, scan1d, \
             scan2d, evolve, steady, gradcheck, table1"
        );
    }
    for (name, present) in blocks {
        if name == mode_name && !present {
            bail!("[experiment] mode = {mode_name:?} but the [{name}] block is missing");
        }
        if name != mode_name && present {
            bail!("[{name}] block present but mode = {mode_name:?}");
        }
    }

    match mode_name {
        "optimize" => {
            let s = file.optimize.as_ref().unwrap();
            check_horizon(s.horizon, "[optimize]")?;
            let fixed = fixed_vec(&s.fixed, id, "[optimize] fixed")?;
            let n_free = n_params - fixed.len();
            if n_free == 0 {
                bail!("[optimize] all parameters are fixed; nothing to optimize");
            }
            if let Some(g) = &s.guess {
                check_vector(g, n_free, "[optimize] guess (free parameters, scheme order)")?;
            }
            if let Some(starts) = &s.starts {
                if starts.is_empty() {
                    bail!("[optimize] starts must not be empty when present");
                }
                for (i, st) in starts.iter().enumerate() {
                    check_vector(st, n_free, &format!("[optimize] starts[{i}]"))?;
                }
            }
            Ok(Mode::Optimize {
                horizon: s.horizon,
                guess: s.guess.clone(),
                starts: s.starts.clone(),
                fixed,
            })
        }
        "scan1d" => {
            let s = file.scan1d.as_ref().unwrap();
            check_param_names([s.parameter.as_str()], id, "[scan1d]")?;
            let fixed = fixed_vec(&s.fixed, id, "[scan1d] fixed")?;
            if fixed.iter().any(|(n, _)| *n == s.parameter) {
                bail!("[scan1d] parameter {:?} is also listed in `fixed`", s.parameter);
            }
            let grid = s.grid.expand("[scan1d] grid")?;
            if s.horizons.is_empty() {
                bail!("[scan1d] horizons must not be empty");
            }
            for &h in &s.horizons {
                check_horizon(h, "[scan1d]")?;
            }
            let n_free = n_params - fixed.len();
            if let Some(g) = &s.guess {
                check_vector(g, n_free, "[scan1d] guess (free parameters, scheme order)")?;
            }
            Ok(Mode::Scan1d {
                parameter: s.parameter.clone(),
                grid,
                horizons: s.horizons.clone(),
                guess: s.guess.clone(),
                fixed,
            })
        }
        "scan2d" => {
            let s = file.scan2d.as_ref().unwrap();
            check_param_names([s.p1.as_str(), s.p2.as_str()], id, "[scan2d]")?;
            if s.p1 == s.p2 {
                bail!("[scan2d] p1 and p2 must differ");
            }
            let fixed = fixed_vec(&s.fixed, id, "[scan2d] fixed")?;
            for (n, _) in &fixed {
                if *n == s.p1 || *n == s.p2 {
                    bail!("[scan2d] scanned parameter {n:?} is also listed in `fixed`");
                }
            }
            if fixed.len() + 2 != n_params {
                bail!(
                    "[scan2d] the parameters other than p1 and p2 must all be fixed; \
                     scheme {} has parameters {:?}",
                    id.token(),
                    id.param_names()
                );
            }
            check_horizon(s.horizon, "[scan2d]")?;
            Ok(Mode::Scan2d {
                p1: s.p1.clone(),
                p2: s.p2.clone(),
                grid1: s.grid1.expand("[scan2d] grid1")?,
                grid2: s.grid2.expand("[scan2d] grid2")?,
                horizon: s.horizon,
                fixed,
            })
        }
        "evolve" => {
            let s = file.evolve.as_ref().unwrap();
            check_vector(&s.params, n_params, "[evolve] params (scheme order)")?;
            if !(s.t_final.is_finite() && s.t_final > 0.0) {
                bail!("[evolve] t_final must be positive, got {}", s.t_final);
            }
            if s.samples < 2 {
                bail!("[evolve] samples must be at least 2, got {}", s.samples);
            }
            Ok(Mode::Evolve {
                params: s.params.clone(),
                t_final: s.t_final,
                samples: s.samples,
                fit_window_start: s.fit_window_start,
            })
        }
        "steady" => {
            let s = file.steady.as_ref().unwrap();
            check_vector(&s.params, n_params, "[steady] params (scheme order)")?;
            Ok(Mode::Steady { params: s.params.clone() })
        }
        "gradcheck" => {
            let s = file.gradcheck.as_ref().unwrap();
            check_horizon(s.horizon, "[gradcheck]")?;
            let points = match &s.points {
                Some(pts) => {
                    if pts.is_empty() {
                        bail!("[gradcheck] points must not be empty when present");
                    }
                    for (i, p) in pts.iter().enumerate() {
                        check_vector(p, n_params, &format!("[gradcheck] points[{i}]"))?;
                    }
                    pts.clone()
                }
                None => vec![coolopt_core::control::default_initial_guess(id)],
            };
            Ok(Mode::Gradcheck { horizon: s.horizon, points })
        }
        "table1" => {
            let s = file.table1.as_ref().unwrap();
            if id != SchemeId::Eit4 {
                bail!("[table1] mode requires scheme kind \"eit4\", got {:?}", id.token());
            }
            let horizons = s.horizons.clone().unwrap_or_else(|| vec![300.0, 700.0, 1200.0]);
            if horizons.is_empty() {
                bail!("[table1] horizons must not be empty");
            }
            for &h in &horizons {
                check_horizon(h, "[table1]")?;
            }
            let evolve_to = s.evolve_to.unwrap_or(1200.0);
            if !(evolve_to.is_finite() && evolve_to > 0.0) {
                bail!("[table1] evolve_to must be positive, got {evolve_to}");
            }
            let samples = s.samples.unwrap_or(241);
            if samples < 2 {
                bail!("[table1] samples must be at least 2, got {samples}");
            }
            Ok(Mode::Table1 {
                horizons,
                include_reduced: s.include_reduced.unwrap_or(true),
                evolve_to,
                samples,
            })
        }
        _ => unreachable!("mode name checked above"),
    }
}
