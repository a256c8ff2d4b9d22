//! The commands behind the `hjlab` binary.
//!
//! Every command resolves its parameters (flags, then the problem's experiment
//! block, then defaults) into a complete [`Experiment`], runs, and returns an
//! [`Outcome`]: a JSON report, optional CSV tables and a timing sidecar. The
//! report echoes the problem with the resolved experiment as its only block, so
//! running the command again on that echo reproduces the report bit for bit.
//! Wall-clock timings and thread counts live only in the sidecar.

use std::fmt::Write as _;
use std::path::{Path as FsPath, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use crate::ci::{ci_derivative, hj_residual, GradientSource};
use crate::dynamics::sample_bundle;
use crate::error::{config, Error, Result};
use crate::game::{refinement_study, solve_game, TreeOptions, DEFAULT_NODE_BUDGET};
use crate::hamiltonian::{game_hamiltonian, isaacs_gap, l1_distance, steklov_smooth, Side};
use crate::lk::comparison_check;
use crate::minimax::{
    chain_check, classify, combine, default_s_set, sample_points, BundleConfig, ClassifyConfig,
};
use crate::path::Path;
use crate::problem::{CommandName, Experiment, Problem, ProblemFile};
use crate::regularization::PathDictionary;
use crate::verdict::Verdict;

/// Exit code for success or a passing verdict.
pub const EXIT_OK: i32 = 0;
/// Exit code for a failing verdict.
pub const EXIT_VERDICT_FAILED: i32 = 1;
/// Exit code for invalid input or configuration.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for an exhausted node budget.
pub const EXIT_RESOURCE: i32 = 3;

/// Command-line overrides. `None` defers to the problem file, then to defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunFlags {
    pub steps: Option<usize>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub budget: Option<u64>,
    pub threads: Option<usize>,
}

/// A CSV table produced by a command.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub csv: String,
}

/// Result of [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub command: CommandName,
    pub exit_code: i32,
    pub report: Value,
    pub tables: Vec<Table>,
    pub timings: Value,
}

/// Exit code for a library error.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Resource { .. } => EXIT_RESOURCE,
        _ => EXIT_CONFIG,
    }
}

const DEFAULT_REFINE_STEPS: [usize; 3] = [2, 4, 8];
const DEFAULT_SMOOTH_K: [u32; 3] = [2, 4, 8];
const DEFAULT_SAMPLES: usize = 8;
const DEFAULT_BUNDLE_SIZE: usize = 16;
const DEFAULT_COMPARE_SAMPLES: usize = 200;
const DEFAULT_COMPARE_TOL: f64 = 1e-9;
const BOUNDARY_TOL: f64 = 1e-9;
const MAX_CHAIN_STAGES: usize = 4;

fn unit_directions(n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = sign;
            out.push(e);
        }
    }
    out
}

/// Resolve the parameters of `command` into a complete experiment and the
/// problem file that echoes it.
pub fn resolve(file: &ProblemFile, command: CommandName, flags: &RunFlags) -> Result<(ProblemFile, Experiment)> {
    let mut resolved = file.with_dt(flags.dt.unwrap_or(file.dt));
    let problem = resolved.compile()?;
    let cells = problem.grid.last_index() - problem.grid.node_index(problem.t0)?;
    let mut e = file.experiment(command).cloned().unwrap_or(Experiment {
        command,
        ..Experiment::default()
    });
    e.seed = Some(flags.seed.or(e.seed).unwrap_or(0));
    e.tol = flags.tol.or(e.tol);
    e.budget = Some(flags.budget.or(e.budget).unwrap_or(DEFAULT_NODE_BUDGET));
    if flags.steps.is_some() {
        e.steps = flags.steps;
    }
    let n = file.n;
    match command {
        CommandName::SolveGame => {
            e.steps = Some(e.steps.unwrap_or(cells));
        }
        CommandName::Refine => {
            if let Some(s) = flags.steps {
                e.steps_list = Some(vec![s]);
            }
            e.steps_list = Some(e.steps_list.unwrap_or_else(|| DEFAULT_REFINE_STEPS.to_vec()));
        }
        CommandName::CheckMinimax => {
            e.steps = Some(e.steps.unwrap_or(cells.min(MAX_CHAIN_STAGES)));
            e.samples = Some(e.samples.unwrap_or(DEFAULT_SAMPLES));
            e.bundle_size = Some(e.bundle_size.unwrap_or(DEFAULT_BUNDLE_SIZE));
            let seed = e.seed.unwrap_or(0);
            e.directions = Some(e.directions.unwrap_or_else(|| default_s_set(n, seed)));
        }
        CommandName::Smooth => {
            e.k = Some(e.k.unwrap_or_else(|| DEFAULT_SMOOTH_K.to_vec()));
            e.bundle_size = Some(e.bundle_size.unwrap_or(DEFAULT_BUNDLE_SIZE));
            e.directions = Some(e.directions.unwrap_or_else(|| unit_directions(n)));
        }
        CommandName::CiDeriv => {
            let room = file.horizon - problem.t0;
            e.probe_step = Some(e.probe_step.unwrap_or((1e-4 * file.horizon).min(room)));
            e.directions = Some(e.directions.unwrap_or_else(|| unit_directions(n)));
        }
        CommandName::Compare => {
            e.samples = Some(e.samples.unwrap_or(DEFAULT_COMPARE_SAMPLES));
            e.tol = Some(e.tol.unwrap_or(DEFAULT_COMPARE_TOL));
            let seed = e.seed.unwrap_or(0);
            e.directions = Some(e.directions.unwrap_or_else(|| default_s_set(n, seed)));
        }
    }
    if let Some(dirs) = &e.directions {
        if let Some(bad) = dirs.iter().position(|s| s.len() != n) {
            return Err(config(format!("experiments: direction {bad} must have {n} components")));
        }
    }
    resolved.experiments = vec![e.clone()];
    Ok((resolved, e))
}

/// Run `command`. `against` is the second problem of `compare`.
pub fn run(command: CommandName, file: &ProblemFile, against: Option<&ProblemFile>, flags: &RunFlags) -> Outcome {
    let clock = Instant::now();
    let result = crate::par::with_threads(flags.threads, || execute(command, file, against, flags));
    let timings = json!({
        "command": command.as_str(),
        "wall_seconds": clock.elapsed().as_secs_f64(),
        "threads": flags.threads,
    });
    match result {
        Ok((exit_code, report, tables)) => Outcome {
            command,
            exit_code,
            report,
            tables,
            timings,
        },
        Err(e) => Outcome {
            command,
            exit_code: exit_code_for(&e),
            report: json!({
                "command": command.as_str(),
                "status": "error",
                "error": e.to_string(),
                "details": serde_json::to_value(error_details(&e)).unwrap_or(Value::Null),
            }),
            tables: Vec::new(),
            timings,
        },
    }
}

fn error_details(e: &Error) -> Value {
    match e {
        Error::Resource { budget, required } => json!({"kind": "resource", "budget": budget, "required": required}),
        Error::Config(_) => json!({"kind": "config"}),
        Error::Domain(_) => json!({"kind": "domain"}),
        Error::Integration { cell, time, .. } => json!({"kind": "integration", "cell": cell, "time": time}),
    }
}

type Executed = (i32, Value, Vec<Table>);

fn execute(command: CommandName, file: &ProblemFile, against: Option<&ProblemFile>, flags: &RunFlags) -> Result<Executed> {
    let (resolved, e) = resolve(file, command, flags)?;
    let problem = resolved.compile()?;
    let (passed, result, tables, extra) = match command {
        CommandName::SolveGame => solve(&problem, &e)?,
        CommandName::Refine => refine(&problem, &e)?,
        CommandName::CheckMinimax => check(&problem, &e)?,
        CommandName::Smooth => smooth(&problem, &e)?,
        CommandName::CiDeriv => ci_deriv(&problem, &e)?,
        CommandName::Compare => {
            let other = against.ok_or_else(|| config("compare needs a second problem (--against)"))?;
            let other_resolved = other.with_dt(resolved.dt);
            let other_problem = other_resolved.compile()?;
            let (p, r, t, _) = compare(&problem, &other_problem, &e)?;
            (p, r, t, Some(("against", serde_json::to_value(&other_resolved).map_err(json_error)?)))
        }
    };
    let status = match passed {
        None => "ok",
        Some(true) => "pass",
        Some(false) => "fail",
    };
    let mut report = json!({
        "command": command.as_str(),
        "status": status,
        "seed": e.seed,
        "problem": serde_json::to_value(&resolved).map_err(json_error)?,
        "result": result,
    });
    if let Some((key, value)) = extra {
        report[key] = value;
    }
    let code = if passed == Some(false) { EXIT_VERDICT_FAILED } else { EXIT_OK };
    Ok((code, report, tables))
}

fn json_error(e: serde_json::Error) -> Error {
    config(format!("report serialization: {e}"))
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(json_error)
}

type CommandResult = (Option<bool>, Value, Vec<Table>, Option<(&'static str, Value)>);

fn tree_options(e: &Experiment) -> TreeOptions {
    TreeOptions {
        budget: e.budget.unwrap_or(DEFAULT_NODE_BUDGET),
        ..TreeOptions::default()
    }
}

fn candidate(problem: &Problem, command: CommandName) -> Result<&crate::ci::PathFunctional> {
    problem
        .candidate
        .as_ref()
        .ok_or_else(|| config(format!("{} needs a `candidate` in the problem file", command.as_str())))
}

fn solve(problem: &Problem, e: &Experiment) -> Result<CommandResult> {
    let steps = e.steps.unwrap_or(1);
    let r = solve_game(&problem.game, problem.t0, &problem.x0, steps, &tree_options(e))?;
    let mut result = to_json(&r)?;
    if let Some(phi) = &problem.candidate {
        let exact = phi.eval(problem.t0, &problem.x0);
        result["candidate_value"] = json!(exact);
        result["err_lower"] = json!((r.rho_lower - exact).abs());
        result["err_upper"] = json!((r.rho_upper - exact).abs());
    }
    Ok((None, result, Vec::new(), None))
}

fn refine(problem: &Problem, e: &Experiment) -> Result<CommandResult> {
    let steps = e.steps_list.clone().unwrap_or_default();
    let rows = refinement_study(
        &problem.game,
        problem.t0,
        &problem.x0,
        &steps,
        problem.candidate.as_ref(),
        &tree_options(e),
    )?;
    let mut csv = String::from("steps,dt,rho_lower,rho_upper,gap,nodes,err_lower,err_upper\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.steps,
            r.dt,
            r.rho_lower,
            r.rho_upper,
            r.gap,
            r.nodes,
            opt(r.err_lower),
            opt(r.err_upper)
        );
    }
    Ok((
        None,
        json!({ "rows": to_json(&rows)? }),
        vec![Table {
            name: "refine".into(),
            csv,
        }],
        None,
    ))
}

fn check(problem: &Problem, e: &Experiment) -> Result<CommandResult> {
    let phi = candidate(problem, CommandName::CheckMinimax)?;
    let seed = e.seed.unwrap_or(0);
    let h = game_hamiltonian(&problem.game, Side::Lower)?;
    let c = h.growth_density(problem.grid)?;
    let s_set = e.directions.clone().unwrap_or_default();
    let bundles = BundleConfig {
        count: e.bundle_size.unwrap_or(DEFAULT_BUNDLE_SIZE),
        seed,
        ..BundleConfig::default()
    };
    let (interior, terminal) = sample_points(&problem.x0, &c, e.samples.unwrap_or(DEFAULT_SAMPLES), seed)?;
    let isaacs_sample: Vec<(f64, Path, Vec<f64>)> = interior
        .iter()
        .flat_map(|(t, x)| s_set.iter().map(move |s| (*t, x.clone(), s.clone())))
        .collect();
    let gap = isaacs_gap(&problem.game, &isaacs_sample)?;
    let cfg = ClassifyConfig {
        s_set: s_set.clone(),
        bundles: bundles.clone(),
        tol: e.tol,
        boundary_tol: BOUNDARY_TOL,
    };
    let report = classify(phi, &h, &problem.game.sigma, &interior, &terminal, &cfg)?;

    let stages = e.steps.unwrap_or(1);
    let tol = e.tol.unwrap_or_else(|| report.upper.tol.max(report.lower.tol));
    let mut chains = Vec::new();
    for side in [Side::Upper, Side::Lower] {
        let verdicts = s_set
            .iter()
            .map(|s| chain_check(side, phi, &h, problem.t0, &problem.x0, s, stages, &bundles, tol))
            .collect::<Result<Vec<Verdict>>>()?;
        chains.push(combine(verdicts, tol));
    }
    let passed = report.is_minimax() && chains.iter().all(|v| v.passed);
    let result = json!({
        "hamiltonian": "lower",
        "isaacs_gap": gap,
        "growth_estimated": problem.growth_estimated,
        "upper": to_json(&report.upper)?,
        "lower": to_json(&report.lower)?,
        "boundary": to_json(&report.boundary)?,
        "chain_upper": to_json(&chains[0])?,
        "chain_lower": to_json(&chains[1])?,
        "minimax": passed,
    });
    Ok((Some(passed), result, Vec::new(), None))
}

/// Dictionary of the history and a seeded sample of its characteristic bundle.
fn dictionary(problem: &Problem, h: &crate::hamiltonian::HamiltonianSpec, e: &Experiment) -> Result<PathDictionary> {
    let c = h.growth_density(problem.grid)?;
    let count = e.bundle_size.unwrap_or(DEFAULT_BUNDLE_SIZE);
    let bundle = sample_bundle(
        problem.t0,
        &problem.x0,
        &c,
        &Default::default(),
        count.max(1),
        e.seed.unwrap_or(0),
    )?;
    let mut members = vec![problem.x0.clone()];
    members.extend(bundle.members().iter().map(|m| m.path.clone()));
    PathDictionary::new(members)
}

fn smooth(problem: &Problem, e: &Experiment) -> Result<CommandResult> {
    let h = game_hamiltonian(&problem.game, Side::Lower)?;
    let dict = dictionary(problem, &h, e)?;
    let dirs = e.directions.clone().unwrap_or_default();
    let mut rows = Vec::new();
    let mut csv = String::from("k,l1_distance\n");
    for &k in e.k.as_deref().unwrap_or(&[]) {
        let hk = steklov_smooth(&h, k)?.to_spec();
        let mut worst: f64 = 0.0;
        for s in &dirs {
            worst = worst.max(l1_distance(&h, &hk, &dict, s)?);
        }
        let _ = writeln!(csv, "{k},{worst}");
        rows.push(json!({"k": k, "l1_distance": worst}));
    }
    Ok((
        None,
        json!({ "dictionary_size": dict.len(), "rows": rows }),
        vec![Table {
            name: "smooth".into(),
            csv,
        }],
        None,
    ))
}

fn ci_deriv(problem: &Problem, e: &Experiment) -> Result<CommandResult> {
    let phi = candidate(problem, CommandName::CiDeriv)?;
    let probe = e.probe_step.unwrap_or(1e-4);
    let g = ci_derivative(phi, problem.t0, &problem.x0, probe)?;
    let grads = GradientSource::Numeric { probe_step: probe };
    let mut residuals = Vec::new();
    for side in [Side::Lower, Side::Upper] {
        let h = game_hamiltonian(&problem.game, side)?;
        residuals.push(hj_residual(phi, &grads, &h, problem.t0, &problem.x0)?);
    }
    let result = json!({
        "t": problem.t0,
        "gradient": to_json(&g)?,
        "hj_residual_lower": residuals[0],
        "hj_residual_upper": residuals[1],
    });
    Ok((None, result, Vec::new(), None))
}

fn compare(first: &Problem, second: &Problem, e: &Experiment) -> Result<CommandResult> {
    let phi1 = candidate(first, CommandName::Compare)?;
    let phi2 = candidate(second, CommandName::Compare)?;
    if first.game.n != second.game.n {
        return Err(config("compared problems must share the state dimension"));
    }
    let h1 = game_hamiltonian(&first.game, Side::Lower)?;
    let h2 = game_hamiltonian(&second.game, Side::Lower)?;
    let c1 = h1.growth_density(first.grid)?;
    let c2 = h2.growth_density(first.grid)?;
    let c = c1.add(&c2)?;
    let (points, _) = sample_points(&first.x0, &c, e.samples.unwrap_or(DEFAULT_COMPARE_SAMPLES), e.seed.unwrap_or(0))?;
    let s = e.directions.clone().unwrap_or_default();
    let report = comparison_check(phi1, &h1, phi2, &h2, &points, &s, e.tol.unwrap_or(DEFAULT_COMPARE_TOL));
    let passed = report.comparison.passed;
    let result = json!({
        "comparison": to_json(&report.comparison)?,
        "ordering": to_json(&report.ordering)?,
        "ordering_holds": report.ordering.passed,
    });
    Ok((Some(passed), result, Vec::new(), None))
}

/// Write `<command>.report.json`, `<table>.csv` and `<command>.timings.json`
/// into `dir`, returning the written paths.
pub fn write_artifacts(outcome: &Outcome, dir: &FsPath) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let stem = outcome.command.as_str();
    let mut written = Vec::new();
    let report = dir.join(format!("{stem}.report.json"));
    std::fs::write(&report, render(&outcome.report))?;
    written.push(report);
    for t in &outcome.tables {
        let p = dir.join(format!("{}.csv", t.name));
        std::fs::write(&p, &t.csv)?;
        written.push(p);
    }
    let timings = dir.join(format!("{stem}.timings.json"));
    std::fs::write(&timings, render(&outcome.timings))?;
    written.push(timings);
    Ok(written)
}

/// Pretty JSON with a trailing newline.
pub fn render(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).unwrap_or_else(|_| "null".into());
    s.push('\n');
    s
}
