//! Execution of each experiment mode against the core library, plus the
//! run manifest tying every artifact back to its inputs.

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use toml::value::Table;
use toml::Value;

use coolopt_core::hilbert::initial_state;
use coolopt_core::schemes::{LEVEL_E, LEVEL_G, LEVEL_R, LEVEL_T};
use coolopt_core::{
    fit_rate, fit_rate_from, minimize, multistart, scan1d, scan2d, steady_state, trajectory,
    ControlProblem, EitThreeConsts, OptimOptions, OptimResult, Scheme, SchemeId, SchemeModel,
};

use crate::config::{Experiment, Mode};
use crate::output::{float_array, string_array, table, Artifacts, Cell};

/// Runs the experiment, writing CSV artifacts and the manifest. The
/// returned string is a one-line human summary for stdout.
pub fn execute(
    exp: &Experiment,
    artifacts: &mut Artifacts,
    config_text: &str,
    threads: usize,
) -> Result<String> {
    let started_unix =
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();

    let (result, summary) = match &exp.mode {
        Mode::Optimize { horizon, guess, starts, fixed } => {
            run_optimize(exp, artifacts, *horizon, guess.as_deref(), starts.as_deref(), fixed)?
        }
        Mode::Scan1d { parameter, grid, horizons, guess, fixed } => {
            run_scan1d(exp, artifacts, parameter, grid, horizons, guess.as_deref(), fixed)?
        }
        Mode::Scan2d { p1, p2, grid1, grid2, horizon, fixed } => {
            run_scan2d(exp, artifacts, p1, p2, grid1, grid2, *horizon, fixed)?
        }
        Mode::Evolve { params, t_final, samples, fit_window_start } => {
            run_evolve(exp, artifacts, params, *t_final, *samples, *fit_window_start)?
        }
        Mode::Steady { params } => run_steady(exp, artifacts, params)?,
        Mode::Gradcheck { horizon, points } => run_gradcheck(exp, artifacts, *horizon, points)?,
        Mode::Table1 { horizons, include_reduced, evolve_to, samples } => {
            run_table1(exp, artifacts, horizons, *include_reduced, *evolve_to, *samples)?
        }
    };

    let manifest = build_manifest(exp, artifacts, config_text, threads, started_unix, clock, result);
    artifacts.write_manifest(&manifest)?;
    Ok(summary)
}

fn scheme_table(scheme: &Scheme) -> Table {
    match scheme {
        Scheme::Rwsc(c) | Scheme::Swsc(c) => table(vec![
            ("kind", Value::String(scheme.id().token().to_string())),
            ("eta", Value::Float(c.eta)),
            ("gamma", Value::Float(c.gamma)),
        ]),
        Scheme::Eit3(c) => table(vec![
            ("kind", Value::String("eit3".into())),
            ("eta_g", Value::Float(c.eta_g)),
            ("eta_r", Value::Float(c.eta_r)),
            ("gamma_g", Value::Float(c.gamma_g)),
            ("gamma_r", Value::Float(c.gamma_r)),
        ]),
        Scheme::Eit4(c) => table(vec![
            ("kind", Value::String("eit4".into())),
            ("eta", Value::Float(c.eta)),
            ("gamma_g", Value::Float(c.gamma_g)),
            ("gamma_r", Value::Float(c.gamma_r)),
            ("delta_t_offset", Value::Float(c.delta_t_offset)),
        ]),
    }
}

fn level_token(level: usize) -> &'static str {
    match level {
        LEVEL_G => "g",
        LEVEL_E => "e",
        LEVEL_R => "r",
        LEVEL_T => "t",
        _ => "?",
    }
}

fn build_manifest(
    exp: &Experiment,
    artifacts: &Artifacts,
    config_text: &str,
    threads: usize,
    started_unix: u64,
    clock: Instant,
    result: Table,
) -> Table {
    let id = exp.scheme.id();
    let n = id.internal_dim() * exp.fock_dim;
    table(vec![
        (
            "run",
            Value::Table(table(vec![
                ("mode", Value::String(exp.mode.name().to_string())),
                ("package", Value::String(env!("CARGO_PKG_NAME").to_string())),
                ("version", Value::String(env!("CARGO_PKG_VERSION").to_string())),
                ("threads", Value::Integer(threads as i64)),
                ("started_unix", Value::Integer(started_unix as i64)),
                ("elapsed_seconds", Value::Float(clock.elapsed().as_secs_f64())),
            ])),
        ),
        ("scheme", Value::Table(scheme_table(&exp.scheme))),
        (
            "space",
            Value::Table(table(vec![
                ("internal_dim", Value::Integer(id.internal_dim() as i64)),
                ("fock_dim", Value::Integer(exp.fock_dim as i64)),
                ("superoperator_dim", Value::Integer((n * n) as i64)),
            ])),
        ),
        (
            "initial",
            Value::Table(table(vec![
                ("nbar", Value::Float(exp.nbar0)),
                ("level", Value::String(level_token(exp.initial_level).to_string())),
            ])),
        ),
        ("result", Value::Table(result)),
        (
            "artifacts",
            Value::Table(table(vec![(
                "files",
                string_array(&artifacts.written().to_vec()),
            )])),
        ),
        (
            "source",
            Value::Table(table(vec![("config", Value::String(config_text.to_string()))])),
        ),
    ])
}

fn build_model(exp: &Experiment) -> Result<SchemeModel> {
    SchemeModel::new(exp.scheme, exp.fock_dim).map_err(|e| anyhow!(e))
}

/// Problem over the non-fixed parameters, guess defaulting to the
/// documented per-scheme start restricted to the free slots.
fn build_problem(
    exp: &Experiment,
    horizon: f64,
    guess: Option<&[f64]>,
    fixed: &[(String, f64)],
) -> Result<ControlProblem> {
    let model = build_model(exp)?;
    let rho0 = initial_state(exp.initial_level, exp.nbar0, &model.space())
        .map_err(|e| anyhow!(e))?;
    let names = model.param_names();
    let fixed_ref: Vec<(&str, f64)> = fixed.iter().map(|(n, v)| (n.as_str(), *v)).collect();
    let free: Vec<&str> = names
        .iter()
        .copied()
        .filter(|n| !fixed.iter().any(|(f, _)| f == n))
        .collect();
    let guess: Vec<f64> = match guess {
        Some(g) => g.to_vec(),
        None => {
            let full = coolopt_core::control::default_initial_guess(exp.scheme.id());
            names
                .iter()
                .zip(&full)
                .filter(|(n, _)| free.contains(n))
                .map(|(_, v)| *v)
                .collect()
        }
    };
    ControlProblem::new(model, rho0, horizon, &free, &fixed_ref, guess).map_err(|e| anyhow!(e))
}

fn optim_result_table(r: &OptimResult) -> Table {
    let mut params = Table::new();
    for (name, value) in &r.params {
        params.insert(name.clone(), Value::Float(*value));
    }
    let mut t = table(vec![
        ("params", Value::Table(params)),
        ("nbar_final", Value::Float(r.loss)),
        ("gradient_norm", Value::Float(r.gradient_norm)),
        ("iterations", Value::Integer(r.iterations as i64)),
        ("converged", Value::Boolean(r.converged)),
    ]);
    if let Some(note) = &r.note {
        t.insert("note".into(), Value::String(note.clone()));
    }
    t
}

fn run_optimize(
    exp: &Experiment,
    artifacts: &mut Artifacts,
    horizon: f64,
    guess: Option<&[f64]>,
    starts: Option<&[Vec<f64>]>,
    fixed: &[(String, f64)],
) -> Result<(Table, String)> {
    let problem = build_problem(exp, horizon, guess, fixed)?;
    let opts = OptimOptions::default();
    let (best, runs) = match starts {
        Some(starts) => {
            let outcome = multistart(&problem, starts, &opts).map_err(|e| anyhow!(e))?;
            (outcome.best, Some(outcome.runs))
        }
        None => (minimize(&problem, &opts).map_err(|e| anyhow!(e))?, None),
    };

    let mut header: Vec<&str> = best.params.iter().map(|(n, _)| n.as_str()).collect();
    header.extend(["nbar_T", "grad_norm", "iters"]);
    let mut row: Vec<Cell> = best.params.iter().map(|(_, v)| Cell::Num(*v)).collect();
    row.extend([Cell::Num(best.loss), Cell::Num(best.gradient_norm), Cell::Int(best.iterations as i64)]);
    artifacts.write_csv(None, &header, &[row])?;

    let mut result = table(vec![("horizon", Value::Float(horizon))]);
    result.extend(optim_result_table(&best));
    if let Some(runs) = runs {
        let summaries: Vec<Value> = runs
            .iter()
            .map(|r| {
                Value::Table(table(vec![
                    ("loss", Value::Float(r.loss)),
                    ("converged", Value::Boolean(r.converged)),
                    ("iterations", Value::Integer(r.iterations as i64)),
                ]))
            })
            .collect();
        result.insert("starts".into(), Value::Array(summaries));
    }
    let params: Vec<String> =
        best.params.iter().map(|(n, v)| format!("{n} = {v:.6}")).collect();
    let summary = format!(
        "optimum nbar_T = {:.6} at {} after {} iterations (converged: {})",
        best.loss,
        params.join(", "),
        best.iterations,
        best.converged
    );
    Ok((result, summary))
}

fn horizon_tag(h: f64) -> String {
    format!("T{h}")
}

fn run_scan1d(
    exp: &Experiment,
    artifacts: &mut Artifacts,
    parameter: &str,
    grid: &[f64],
    horizons: &[f64],
    guess: Option<&[f64]>,
    fixed: &[(String, f64)],
) -> Result<(Table, String)> {
    let opts = OptimOptions::default();
    let mut per_horizon = Vec::new();
    let mut total_failed = 0usize;
    let mut best_line = String::new();
    for &horizon in horizons {
        let problem = build_problem(exp, horizon, guess, fixed)?;
        let inner_names: Vec<String> = problem
            .free_names()
            .iter()
            .filter(|n| **n != parameter)
            .map(|n| n.to_string())
            .collect();
        let rows = scan1d(&problem, parameter, grid, &opts).map_err(|e| anyhow!(e))?;

        let mut header = vec!["scan_value"];
        header.extend(inner_names.iter().map(|s| s.as_str()));
        header.extend(["nbar_T", "converged"]);
        let csv_rows: Vec<Vec<Cell>> = rows
            .iter()
            .map(|r| {
                let mut row = vec![Cell::Num(r.value)];
                row.extend(r.inner.iter().map(|v| Cell::Num(*v)));
                row.extend([Cell::Num(r.loss), Cell::Bool(r.converged)]);
                row
            })
            .collect();
        let tag = if horizons.len() > 1 { Some(horizon_tag(horizon)) } else { None };
        artifacts.write_csv(tag.as_deref(), &header, &csv_rows)?;

        let failed = rows.iter().filter(|r| r.error.is_some()).count();
        total_failed += failed;
        let best = rows
            .iter()
            .filter(|r| r.error.is_none() && r.loss.is_finite())
            .min_by(|a, b| a.loss.total_cmp(&b.loss));
        let mut t = table(vec![
            ("horizon", Value::Float(horizon)),
            ("points", Value::Integer(rows.len() as i64)),
            ("failed_points", Value::Integer(failed as i64)),
        ]);
        if let Some(b) = best {
            t.insert(
                "minimum".into(),
                Value::Table(table(vec![
                    ("scan_value", Value::Float(b.value)),
                    ("inner", float_array(&b.inner)),
                    ("nbar_T", Value::Float(b.loss)),
                ])),
            );
            best_line = format!("minimum nbar_T = {:.6} at {parameter} = {}", b.loss, b.value);
        }
        per_horizon.push(Value::Table(t));
        if failed == rows.len() {
            let result =
                table(vec![("parameter", Value::String(parameter.to_string())), ("horizons", Value::Array(per_horizon))]);
            let manifest_note = result;
            // Keep what was written; the run itself is a failure.
            let _ = manifest_note;
            bail!("every point of the scan at horizon {horizon} failed");
        }
    }
    let result = table(vec![
        ("parameter", Value::String(parameter.to_string())),
        ("grid_points", Value::Integer(grid.len() as i64)),
        ("failed_points", Value::Integer(total_failed as i64)),
        ("horizons", Value::Array(per_horizon)),
    ]);
    let summary = format!(
        "scanned {parameter} over {} points x {} horizon(s); last {best_line}",
        grid.len(),
        horizons.len()
    );
    Ok((result, summary))
}

fn run_scan2d(
    exp: &Experiment,
    artifacts: &mut Artifacts,
    p1: &str,
    p2: &str,
    grid1: &[f64],
    grid2: &[f64],
    horizon: f64,
    fixed: &[(String, f64)],
) -> Result<(Table, String)> {
    let problem = build_problem(exp, horizon, None, fixed)?;
    let cells = scan2d(&problem, p1, grid1, p2, grid2).map_err(|e| anyhow!(e))?;
    let rows: Vec<Vec<Cell>> = cells
        .iter()
        .map(|c| vec![Cell::Num(c.p1), Cell::Num(c.p2), Cell::Num(c.loss)])
        .collect();
    artifacts.write_csv(None, &["p1", "p2", "nbar_T"], &rows)?;

    let failed = cells.iter().filter(|c| c.error.is_some()).count();
    if failed == cells.len() {
        bail!("every cell of the 2-D scan failed");
    }
    let best = cells
        .iter()
        .filter(|c| c.error.is_none() && c.loss.is_finite())
        .min_by(|a, b| a.loss.total_cmp(&b.loss))
        .expect("at least one cell succeeded");
    let result = table(vec![
        ("p1", Value::String(p1.to_string())),
        ("p2", Value::String(p2.to_string())),
        ("horizon", Value::Float(horizon)),
        ("cells", Value::Integer(cells.len() as i64)),
        ("failed_cells", Value::Integer(failed as i64)),
        (
            "minimum",
            Value::Table(table(vec![
                ("p1", Value::Float(best.p1)),
                ("p2", Value::Float(best.p2)),
                ("nbar_T", Value::Float(best.loss)),
            ])),
        ),
    ]);
    let summary = format!(
        "evaluated {} cells; minimum nbar_T = {:.6} at ({p1}, {p2}) = ({}, {})",
        cells.len(),
        best.loss,
        best.p1,
        best.p2
    );
    Ok((result, summary))
}

fn run_evolve(
    exp: &Experiment,
    artifacts: &mut Artifacts,
    params: &[f64],
    t_final: f64,
    samples: usize,
    fit_window_start: Option<f64>,
) -> Result<(Table, String)> {
    let model = build_model(exp)?;
    let rho0 = initial_state(exp.initial_level, exp.nbar0, &model.space())
        .map_err(|e| anyhow!(e))?;
    let l = model.assemble(params).map_err(|e| anyhow!(e))?;
    let traj = trajectory(&l, &rho0, t_final, samples).map_err(|e| anyhow!(e))?;

    let rows: Vec<Vec<Cell>> = traj
        .times
        .iter()
        .zip(&traj.nbar)
        .map(|(t, n)| vec![Cell::Num(*t), Cell::Num(*n)])
        .collect();
    artifacts.write_csv(None, &["t", "nbar"], &rows)?;

    let final_nbar = *traj.nbar.last().expect("trajectory has samples");
    let mut result = table(vec![
        ("params", float_array(params)),
        ("t_final", Value::Float(t_final)),
        ("samples", Value::Integer(samples as i64)),
        ("nbar_final", Value::Float(final_nbar)),
    ]);
    // The exponential-decay fit is informative, not load-bearing: record
    // the failure and keep the trajectory artifact.
    let fit = match fit_window_start {
        Some(w) => fit_rate_from(&traj, w),
        None => fit_rate(&traj),
    };
    match fit {
        Ok(f) => {
            result.insert(
                "fit".into(),
                Value::Table(table(vec![
                    ("rate", Value::Float(f.w)),
                    ("nbar_infinity", Value::Float(f.nbar_inf)),
                    ("amplitude", Value::Float(f.amplitude)),
                    ("residual", Value::Float(f.residual)),
                    ("cooling", Value::Boolean(f.cooling)),
                    ("window_start", Value::Float(f.window_start)),
                ])),
            );
        }
        Err(e) => {
            result.insert("fit_note".into(), Value::String(e.to_string()));
        }
    }
    let summary = format!("evolved to t = {t_final}; final nbar = {final_nbar:.6}");
    Ok((result, summary))
}

/// Residual above this marks the steady-state solve as failed; the
/// Lindbladian then has no trustworthy stationary point (for instance with
/// all decay rates zero).
const STEADY_RESIDUAL_TOL: f64 = 1e-6;

fn run_steady(
    exp: &Experiment,
    artifacts: &mut Artifacts,
    params: &[f64],
) -> Result<(Table, String)> {
    let model = build_model(exp)?;
    let l = model.assemble(params).map_err(|e| anyhow!(e))?;
    let (rho, residual) = steady_state(&l).map_err(|e| anyhow!(e))?;
    let nbar = coolopt_core::dynamics::mean_phonon(&rho, &model.space()).map_err(|e| anyhow!(e))?;
    if !(residual.is_finite() && residual <= STEADY_RESIDUAL_TOL) {
        bail!("steady-state residual {residual:.3e} exceeds {STEADY_RESIDUAL_TOL:.0e}");
    }
    artifacts.write_csv(
        None,
        &["nbar_st", "residual"],
        &[vec![Cell::Num(nbar), Cell::Num(residual)]],
    )?;
    let result = table(vec![
        ("params", float_array(params)),
        ("nbar_st", Value::Float(nbar)),
        ("residual", Value::Float(residual)),
    ]);
    Ok((result, format!("steady state nbar = {nbar:.6} (residual {residual:.2e})")))
}

/// Central differences at two step sizes combined by Richardson
/// extrapolation. The step is tied to the horizon because the loss
/// oscillates on the scale of its inverse.
fn richardson_grad(problem: &ControlProblem, x: &[f64]) -> Result<Vec<f64>> {
    let h = 0.01 / problem.horizon.max(1.0);
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let central = |step: f64| -> Result<f64> {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += step;
            xm[i] -= step;
            let fp = problem.loss(&xp).map_err(|e| anyhow!(e))?;
            let fm = problem.loss(&xm).map_err(|e| anyhow!(e))?;
            Ok((fp - fm) / (2.0 * step))
        };
        let coarse = central(h)?;
        let fine = central(h / 2.0)?;
        grad[i] = (4.0 * fine - coarse) / 3.0;
    }
    Ok(grad)
}

/// Gradient contract for this build: analytic and finite-difference
/// gradients must agree to this relative tolerance.
const GRADCHECK_TOL: f64 = 1e-6;

fn run_gradcheck(
    exp: &Experiment,
    artifacts: &mut Artifacts,
    horizon: f64,
    points: &[Vec<f64>],
) -> Result<(Table, String)> {
    let problem = build_problem(exp, horizon, None, &[])?;
    let names = problem.free_names();

    let mut rows = Vec::new();
    let mut max_err = 0.0f64;
    for (k, x) in points.iter().enumerate() {
        let (_, analytic) = problem.grad(x).map_err(|e| anyhow!(e))?;
        let numeric = richardson_grad(&problem, x)?;
        let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let err = analytic
            .iter()
            .zip(&numeric)
            .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()))
            / scale;
        max_err = max_err.max(err);
        let mut row = vec![Cell::Int(k as i64)];
        row.extend(x.iter().map(|v| Cell::Num(*v)));
        row.push(Cell::Num(err));
        rows.push(row);
    }
    let mut header = vec!["point"];
    header.extend(names.iter().copied());
    header.push("rel_err");
    artifacts.write_csv(None, &header, &rows)?;

    let result = table(vec![
        ("horizon", Value::Float(horizon)),
        ("points", Value::Integer(points.len() as i64)),
        ("max_rel_err", Value::Float(max_err)),
        ("tolerance", Value::Float(GRADCHECK_TOL)),
    ]);
    if max_err > GRADCHECK_TOL {
        artifacts.write_manifest(&table(vec![("result", Value::Table(result))]))?;
        bail!("gradient check failed: max relative error {max_err:.3e} exceeds {GRADCHECK_TOL:.0e}");
    }
    let summary =
        format!("gradient check over {} point(s): max relative error {max_err:.3e}", points.len());
    Ok((result, summary))
}

const TABLE1_HEADER: [&str; 7] =
    ["T", "omega_g", "omega_r", "delta_g", "delta_r", "W", "nbar_1200"];

struct TableRow {
    horizon: f64,
    omega_g: f64,
    omega_r: f64,
    delta_g: f64,
    delta_r: f64,
    rate: f64,
    late_nbar: f64,
    reduced: bool,
    optim: Table,
}

impl TableRow {
    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Num(self.horizon),
            Cell::Num(self.omega_g),
            Cell::Num(self.omega_r),
            Cell::Num(self.delta_g),
            Cell::Num(self.delta_r),
            Cell::Num(self.rate),
            Cell::Num(self.late_nbar),
        ]
    }
}

/// The four-level recipe: optimize at each horizon (warm-starting from the
/// previous optimum), then evolve the four-level model to `evolve_to` at
/// that optimum for the rate fit and the late occupation. The optional
/// reduced row optimizes the three-level restriction at the last horizon
/// and evaluates its parameters in the four-level model.
fn run_table1(
    exp: &Experiment,
    artifacts: &mut Artifacts,
    horizons: &[f64],
    include_reduced: bool,
    evolve_to: f64,
    samples: usize,
) -> Result<(Table, String)> {
    let Scheme::Eit4(consts) = exp.scheme else {
        bail!("table1 mode requires the four-level scheme");
    };
    let model = build_model(exp)?;
    let rho0 = initial_state(exp.initial_level, exp.nbar0, &model.space())
        .map_err(|e| anyhow!(e))?;
    let opts = OptimOptions::default();

    let mut rows: Vec<TableRow> = Vec::new();
    let flush = |artifacts: &mut Artifacts, rows: &[TableRow]| -> Result<()> {
        let cells: Vec<Vec<Cell>> = rows.iter().map(TableRow::cells).collect();
        artifacts.write_csv(None, &TABLE1_HEADER, &cells)?;
        Ok(())
    };

    let mut guess = coolopt_core::control::default_initial_guess(SchemeId::Eit4);
    for &horizon in horizons {
        let problem =
            ControlProblem::all_free(model.clone(), rho0.clone(), horizon, guess.clone())
                .map_err(|e| anyhow!(e))?;
        let res = minimize(&problem, &opts).map_err(|e| anyhow!(e))?;
        let value = |name: &str| res.value(name).expect("scheme parameter present");
        let optimum =
            vec![value("delta_g"), value("delta_r"), value("omega_g"), value("omega_r")];
        guess = optimum.clone();

        let l = model.assemble(&optimum).map_err(|e| anyhow!(e))?;
        let traj = trajectory(&l, &rho0, evolve_to, samples).map_err(|e| anyhow!(e))?;
        let fit = fit_rate(&traj).map_err(|e| anyhow!(e))?;
        rows.push(TableRow {
            horizon,
            omega_g: value("omega_g").abs(),
            omega_r: value("omega_r").abs(),
            delta_g: value("delta_g"),
            delta_r: value("delta_r"),
            rate: fit.w,
            late_nbar: *traj.nbar.last().expect("trajectory has samples"),
            reduced: false,
            optim: optim_result_table(&res),
        });
        flush(artifacts, &rows)?;
    }

    if include_reduced {
        let last_horizon = *horizons.last().expect("horizons checked non-empty");
        let consts3 = EitThreeConsts::from_four_level(&consts);
        let model3 =
            SchemeModel::new(Scheme::Eit3(consts3), exp.fock_dim).map_err(|e| anyhow!(e))?;
        let rho3 = initial_state(exp.initial_level, exp.nbar0, &model3.space())
            .map_err(|e| anyhow!(e))?;
        let guess3 = vec![guess[0], guess[2], guess[3]];
        let problem3 = ControlProblem::all_free(model3, rho3, last_horizon, guess3)
            .map_err(|e| anyhow!(e))?;
        let res3 = minimize(&problem3, &opts).map_err(|e| anyhow!(e))?;
        let value = |name: &str| res3.value(name).expect("scheme parameter present");
        let (delta3, og3, or3) = (value("delta"), value("omega_g"), value("omega_r"));

        // Evaluate the reduced optimum in the full four-level model, with
        // both detunings set to the single three-level detuning.
        let l = model.assemble(&[delta3, delta3, og3, or3]).map_err(|e| anyhow!(e))?;
        let traj = trajectory(&l, &rho0, evolve_to, samples).map_err(|e| anyhow!(e))?;
        let fit = fit_rate(&traj).map_err(|e| anyhow!(e))?;
        rows.push(TableRow {
            horizon: last_horizon,
            omega_g: og3.abs(),
            omega_r: or3.abs(),
            delta_g: delta3,
            delta_r: delta3,
            rate: fit.w,
            late_nbar: *traj.nbar.last().expect("trajectory has samples"),
            reduced: true,
            optim: optim_result_table(&res3),
        });
        flush(artifacts, &rows)?;
    }

    let row_tables: Vec<Value> = rows
        .iter()
        .map(|r| {
            let mut t = table(vec![
                ("T", Value::Float(r.horizon)),
                ("omega_g", Value::Float(r.omega_g)),
                ("omega_r", Value::Float(r.omega_r)),
                ("delta_g", Value::Float(r.delta_g)),
                ("delta_r", Value::Float(r.delta_r)),
                ("W", Value::Float(r.rate)),
                ("nbar_1200", Value::Float(r.late_nbar)),
                ("reduced_model", Value::Boolean(r.reduced)),
            ]);
            t.insert("optimization".into(), Value::Table(r.optim.clone()));
            Value::Table(t)
        })
        .collect();
    let result = table(vec![
        ("evolve_to", Value::Float(evolve_to)),
        ("rows", Value::Array(row_tables)),
    ]);
    let summary = format!("computed {} table row(s); see the CSV for the values", rows.len());
    Ok((result, summary))
}
