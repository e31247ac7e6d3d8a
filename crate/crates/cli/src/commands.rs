//! The four subcommands. Each `*_report` function is pure given its config;
//! the `cmd_*` wrappers load the config, write the report and print a
//! one-line summary to stderr.

use modlindley::engine::MapKind;
use modlindley::mcsim::{simulate, SimPlan, SimulationEstimate};
use modlindley::models::{ModelConfig, SolvedModel};
use modlindley::numlin::{self, vec_norm_inf, CMatrix};
use modlindley::{Warning, C64};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::report::*;
use crate::{CliError, Outcome, RunArgs};

/// Anchor values must match to this absolute accuracy.
pub const ANCHOR_BOUND: f64 = 1e-8;
/// A comparison passes when every |z| is at most this.
pub const Z_BOUND: f64 = 3.0;
/// The functional-equation residual may be at most this multiple of `tol`.
pub const RESIDUAL_FACTOR: f64 = 10.0;

fn solver(e: modlindley::Error) -> CliError {
    CliError::from_model(e)
}

/// Solve the main model, optionally scaling the unknowns by `1 + perturbation`.
pub fn solve_model(cfg: &RunConfig, perturbation: Option<f64>) -> Result<SolvedModel, CliError> {
    let solved = cfg.model.solve(&cfg.solver.options()).map_err(solver)?;
    match perturbation {
        Some(f) => {
            let u = &solved.solution.u * C64::new(1.0 + f, 0.0);
            solved.with_unknowns(u).map_err(solver)
        }
        None => Ok(solved),
    }
}

fn evaluate_grid(solved: &SolvedModel, grid: &[f64]) -> Result<Vec<Vec<C64>>, CliError> {
    grid.par_iter()
        .map(|&s| {
            solved
                .evaluate_real(s)
                .map(|z| z.iter().cloned().collect())
                .map_err(solver)
        })
        .collect()
}

fn diagnostics(solved: &SolvedModel, grid: &[f64]) -> Diagnostics {
    let per_point: Vec<(Option<f64>, Option<f64>)> = grid
        .par_iter()
        .map(|&s| {
            let s = C64::new(s, 0.0);
            (
                solved.residual(s).ok(),
                solved.solution.trace(s).ok().map(|t| t.tail_norm),
            )
        })
        .collect();
    let residuals: Vec<PointValue> = grid
        .iter()
        .zip(&per_point)
        .map(|(&point, p)| PointValue { point, value: p.0 })
        .collect();
    let tail_norms = grid
        .iter()
        .zip(&per_point)
        .map(|(&point, p)| PointValue { point, value: p.1 })
        .collect();
    let max_residual = residuals
        .iter()
        .filter_map(|r| r.value)
        .fold(0.0, f64::max);
    Diagnostics {
        residuals,
        max_residual,
        constraint_residual: solved.resolution.residual,
        condition: solved.resolution.condition,
        tail_norms,
        spectra: solved
            .spectra
            .iter()
            .map(|(name, values)| NamedValues {
                name: name.clone(),
                values: values.clone(),
            })
            .collect(),
        warnings: solved.warnings.clone(),
    }
}

fn anchor_check(solved: &SolvedModel) -> Result<AnchorCheck, CliError> {
    let got = solved.anchor_value().map_err(solver)?;
    let want = solved
        .expected_anchor()
        .expect("every model kind has an anchor");
    let max_error = vec_norm_inf(&(got - want));
    Ok(AnchorCheck {
        point: solved.anchor_point(),
        max_error,
        bound: ANCHOR_BOUND,
        status: if max_error <= ANCHOR_BOUND { "OK" } else { "FAIL" }.to_string(),
    })
}

pub fn solve_report(cfg: &RunConfig, perturbation: Option<f64>) -> Result<SolveReport, CliError> {
    let solved = solve_model(cfg, perturbation)?;
    let grid = cfg.grid_points()?;
    let values = evaluate_grid(&solved, &grid)?;
    let rows = grid
        .iter()
        .zip(&values)
        .flat_map(|(&point, z)| {
            z.iter().enumerate().map(move |(state, v)| Row {
                point,
                state,
                analytic_re: Some(v.re),
                analytic_im: Some(v.im),
                sim_mean: None,
                sim_se: None,
                z_score: None,
            })
        })
        .collect();
    let moments = if solved.kind().is_stationary() {
        (0..solved.states())
            .map(|j| StateMoments {
                state: j,
                first: solved.moment(j, 1).ok(),
                second: solved.moment(j, 2).ok(),
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(SolveReport {
        kind: solved.kind(),
        tol: cfg.solver.tol,
        max_order: cfg.solver.max_order,
        perturbation,
        rows,
        anchor: anchor_check(&solved)?,
        unknowns: solved
            .unknowns
            .iter()
            .map(|(name, v)| NamedValues {
                name: name.clone(),
                values: v.iter().cloned().collect(),
            })
            .collect(),
        boundary_atoms: solved
            .boundary_atoms()
            .map_err(solver)?
            .map(|v| v.iter().map(|x| x.re).collect()),
        moments,
        diagnostics: diagnostics(&solved, &grid),
    })
}

pub fn run_simulation(cfg: &RunConfig, grid: Vec<f64>) -> Result<SimulationEstimate, CliError> {
    let plan = SimPlan::new(cfg.model.clone(), grid)
        .with_replications(cfg.sim.replications)
        .with_steps(cfg.sim.steps)
        .with_seed(cfg.sim.seed);
    simulate(&plan).map_err(solver)
}

pub fn simulate_report(cfg: &RunConfig) -> Result<SimulateReport, CliError> {
    let est = run_simulation(cfg, cfg.grid_points()?)?;
    let mut rows = Vec::new();
    for (p, &point) in est.grid.iter().enumerate() {
        for (state, stat) in est.transform[p].iter().enumerate() {
            rows.push(Row {
                point,
                state,
                analytic_re: None,
                analytic_im: None,
                sim_mean: Some(stat.mean),
                sim_se: Some(stat.std_error),
                z_score: None,
            });
        }
    }
    Ok(SimulateReport {
        kind: est.kind,
        replications: cfg.sim.replications,
        steps: cfg.sim.steps,
        seed: cfg.sim.seed,
        rows,
        state_frequency: est.state_frequency,
        atoms: est.atoms,
        first_moment: est.first_moment,
        second_moment: est.second_moment,
        drift: est.drift,
        warnings: est.warnings,
    })
}

fn reference_diff(reference: &ModelConfig, cfg: &RunConfig, grid: &[f64], values: &[Vec<C64>]) -> Result<f64, CliError> {
    let other = reference.solve(&cfg.solver.options()).map_err(solver)?;
    if other.states() != values.first().map_or(0, Vec::len) {
        return Err(CliError::Config(
            "`reference`: state count differs from `model`".into(),
        ));
    }
    let theirs = evaluate_grid(&other, grid)?;
    Ok(values
        .iter()
        .zip(&theirs)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
        .fold(0.0, f64::max))
}

pub fn compare_report(cfg: &RunConfig, perturbation: Option<f64>) -> Result<CompareReport, CliError> {
    let solved = solve_model(cfg, perturbation)?;
    let grid = cfg.grid_points()?;
    let values = evaluate_grid(&solved, &grid)?;
    let est = run_simulation(cfg, grid.clone())?;

    let mut rows = Vec::new();
    let mut max_abs_z: f64 = 0.0;
    let mut cells_above_3 = 0;
    for (p, &point) in grid.iter().enumerate() {
        for (state, v) in values[p].iter().enumerate() {
            let stat = est.transform[p][state];
            let z = stat.z_score(v.re);
            max_abs_z = max_abs_z.max(z.abs());
            if z.abs() > Z_BOUND {
                cells_above_3 += 1;
            }
            rows.push(Row {
                point,
                state,
                analytic_re: Some(v.re),
                analytic_im: Some(v.im),
                sim_mean: Some(stat.mean),
                sim_se: Some(stat.std_error),
                z_score: Some(z),
            });
        }
    }

    let atoms = match solved.boundary_atoms().map_err(solver)? {
        Some(v) if !est.atoms.is_empty() => v
            .iter()
            .zip(&est.atoms)
            .enumerate()
            .map(|(state, (x, sim))| AtomRow {
                state,
                analytic: x.re,
                sim: *sim,
                z_score: sim.z_score(x.re),
            })
            .collect(),
        _ => Vec::new(),
    };

    let mut diag = diagnostics(&solved, &grid);
    diag.warnings.extend(est.warnings.iter().cloned());
    let residual_bound = RESIDUAL_FACTOR * cfg.solver.tol;
    let (reference_max_diff, reference_bound) = match &cfg.reference {
        Some(reference) => (
            Some(reference_diff(reference, cfg, &grid, &values)?),
            Some(cfg.solver.tol),
        ),
        None => (None, None),
    };
    // On a pole the equation's coefficients are singular and no residual
    // exists; those points are reported as null and the rest must pass.
    let residuals_known = diag.residuals.iter().any(|r| r.value.is_some());
    let pass = max_abs_z <= Z_BOUND
        && residuals_known
        && diag.max_residual <= residual_bound
        && match (reference_max_diff, reference_bound) {
            (Some(d), Some(b)) => d <= b,
            _ => true,
        };
    Ok(CompareReport {
        kind: solved.kind(),
        replications: cfg.sim.replications,
        seed: cfg.sim.seed,
        perturbation,
        summary: CompareSummary {
            cells: rows.len(),
            max_abs_z,
            cells_above_3,
            z_bound: Z_BOUND,
            max_residual: diag.max_residual,
            residual_bound,
            reference_max_diff,
            reference_bound,
            pass,
        },
        rows,
        atoms,
        diagnostics: diag,
    })
}

fn spectrum_entries(quantity: &str, m: &CMatrix, structural_zero: bool) -> Result<Vec<SpectralEntry>, CliError> {
    let spec = numlin::eig(m).map_err(solver)?;
    let zero = 1e-10 * numlin::norm_inf(m).max(1.0);
    Ok(spec
        .values
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            let verdict = if structural_zero && value.norm() <= zero {
                "structural"
            } else if value.re > 0.0 {
                "OK"
            } else {
                "VIOLATION"
            };
            SpectralEntry {
                quantity: quantity.to_string(),
                index,
                value,
                left_vector: spec
                    .left_vectors
                    .as_ref()
                    .map(|l| l[index].iter().cloned().collect()),
                verdict: verdict.to_string(),
            }
        })
        .collect())
}

fn scalar_entries(quantity: &str, values: impl IntoIterator<Item = C64>, verdict: &str) -> Vec<SpectralEntry> {
    values
        .into_iter()
        .enumerate()
        .map(|(index, value)| SpectralEntry {
            quantity: quantity.to_string(),
            index,
            value,
            left_vector: None,
            verdict: verdict.to_string(),
        })
        .collect()
}

fn lambda_matrix(lambda: &[f64]) -> CMatrix {
    numlin::diag(lambda.iter().map(|&l| C64::new(l, 0.0)))
}

/// Spectral quantities of the model, each with a location verdict, followed
/// by the contraction moduli (or shifts) of the maps and the pole set.
pub fn diagnose_report(cfg: &RunConfig) -> Result<DiagnoseReport, CliError> {
    let real = |rows: &[Vec<f64>]| numlin::real_matrix(rows).map_err(solver);
    let mut entries = Vec::new();
    match &cfg.model {
        ModelConfig::TransientAr(t) => {
            let q = real(&t.generator)?;
            numlin::check_generator(&q).map_err(solver)?;
            let m = lambda_matrix(&t.lambda) - q.transpose();
            let nu = spectrum_entries("nu", &m, false)?;
            let eta = C64::new(t.eta, 0.0);
            let mu = nu.iter().map(|e| SpectralEntry {
                quantity: "mu".into(),
                value: e.value + eta,
                verdict: if (e.value + eta).re > 0.0 { "OK" } else { "VIOLATION" }.into(),
                ..e.clone()
            });
            let mu: Vec<SpectralEntry> = mu.collect();
            entries.extend(nu);
            entries.extend(mu);
        }
        ModelConfig::WaitDependent(w) => {
            let p = real(&w.transition)?;
            numlin::check_stochastic(&p).map_err(solver)?;
            let n = p.nrows();
            let m = lambda_matrix(&w.lambda) * (CMatrix::identity(n, n) - p.transpose());
            let gamma = spectrum_entries("gamma", &m, true)?;
            let zeros = gamma.iter().filter(|e| e.verdict == "structural").count();
            entries.extend(gamma.into_iter().map(|mut e| {
                if e.verdict == "structural" && zeros != 1 {
                    e.verdict = "VIOLATION".into();
                }
                e
            }));
        }
        _ => {}
    }

    let mut build_error = None;
    match cfg.model.build() {
        Ok(built) => {
            let maps = built.system.maps();
            match built.system.map_kind() {
                MapKind::Contraction => entries.extend(scalar_entries(
                    "contraction_modulus",
                    maps.iter().map(|m| C64::new(m.a.norm(), 0.0)),
                    "OK",
                )),
                MapKind::Shift => entries.extend(scalar_entries("shift", maps.iter().map(|m| m.c), "OK")),
            }
            entries.extend(scalar_entries("pole", built.system.poles().iter().cloned(), "excluded"));
            if let Some(pi) = &built.stationary {
                entries.extend(scalar_entries("pi", pi.iter().cloned(), "OK"));
            }
        }
        Err(e) => match CliError::from_model(e) {
            CliError::Solver(e) => build_error = Some(e.to_string()),
            config => return Err(config),
        },
    }
    let ok = build_error.is_none() && entries.iter().all(|e| e.verdict != "VIOLATION");
    Ok(DiagnoseReport {
        kind: cfg.model.kind(),
        entries,
        ok,
        build_error,
    })
}

fn emit<R: Report>(report: &R, cfg: &RunConfig) -> Result<(), CliError> {
    report.emit(cfg.output.format, cfg.output.path.as_deref())
}

fn warn_all(warnings: &[Warning]) {
    for w in warnings {
        eprintln!("warning: {w:?}");
    }
}

pub fn cmd_solve(args: &RunArgs) -> Result<Outcome, CliError> {
    let cfg = args.load()?;
    let report = solve_report(&cfg, args.inject_unknown_perturbation)?;
    emit(&report, &cfg)?;
    warn_all(&report.diagnostics.warnings);
    eprintln!(
        "solve {}: anchor {} (error {:.2e}), max residual {:.2e}",
        report.kind,
        report.anchor.status,
        report.anchor.max_error,
        report.diagnostics.max_residual
    );
    Ok(Outcome::Success)
}

pub fn cmd_simulate(args: &RunArgs) -> Result<Outcome, CliError> {
    let cfg = args.load()?;
    let report = simulate_report(&cfg)?;
    emit(&report, &cfg)?;
    warn_all(&report.warnings);
    eprintln!(
        "simulate {}: {} replications, {} steps, seed {}",
        report.kind,
        report.replications,
        report.steps,
        report.seed
    );
    Ok(Outcome::Success)
}

pub fn cmd_compare(args: &RunArgs) -> Result<Outcome, CliError> {
    let cfg = args.load()?;
    let report = compare_report(&cfg, args.inject_unknown_perturbation)?;
    emit(&report, &cfg)?;
    warn_all(&report.diagnostics.warnings);
    let s = &report.summary;
    eprintln!(
        "compare {}: max|z| {:.3} over {} cells, residual {:.2e} (bound {:.1e}){}: {}",
        report.kind,
        s.max_abs_z,
        s.cells,
        s.max_residual,
        s.residual_bound,
        s.reference_max_diff
            .map(|d| format!(", reference diff {d:.2e}"))
            .unwrap_or_default(),
        if s.pass { "PASS" } else { "FAIL" }
    );
    Ok(if s.pass {
        Outcome::Success
    } else {
        Outcome::ComparisonFailed
    })
}

pub fn cmd_diagnose(args: &RunArgs) -> Result<Outcome, CliError> {
    let cfg = args.load()?;
    let report = diagnose_report(&cfg)?;
    emit(&report, &cfg)?;
    if let Some(e) = &report.build_error {
        eprintln!("warning: model does not assemble: {e}");
    }
    eprintln!(
        "diagnose {}: {}",
        report.kind,
        if report.ok { "OK" } else { "VIOLATION" }
    );
    Ok(Outcome::Success)
}
