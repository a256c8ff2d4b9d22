//! Problem files: a JSON description of a game, its initial history, an optional
//! candidate solution and per-command experiment parameters.
//!
//! ```json
//! {
//!   "n": 1, "h": 0.5, "T": 1.0, "dt": 0.25,
//!   "dynamics": ["u1 + v1"],
//!   "chi": "0",
//!   "sigma": "y1(T)",
//!   "controls": {
//!     "p": {"box": {"lo": [-1], "hi": [1], "points": [3]}},
//!     "q": {"finite": [[-1], [0], [1]]}
//!   },
//!   "discontinuities": [],
//!   "initial": {"t0": 0.0, "expr": ["0"]},
//!   "candidate": "y1",
//!   "experiments": [{"command": "solve-game", "steps": 4}]
//! }
//! ```
//!
//! Unknown fields are rejected. [`parse_problem`] checks the whole file,
//! including every expression against the declared dimensions, lags and
//! discontinuities, and reports the offending field.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ci::PathFunctional;
use crate::control::ControlGrid;
use crate::error::{config, Result};
use crate::expr::{compile, Context, Env, Expr, Role};
use crate::game::GameSpec;
use crate::hamiltonian::ScalarTimeFn;
use crate::path::{norm, Grid, Path};

/// Commands the problem file can carry parameters for.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    #[default]
    SolveGame,
    CheckMinimax,
    Smooth,
    CiDeriv,
    Compare,
    Refine,
}

impl CommandName {
    pub const ALL: [CommandName; 6] = [
        CommandName::SolveGame,
        CommandName::CheckMinimax,
        CommandName::Smooth,
        CommandName::CiDeriv,
        CommandName::Compare,
        CommandName::Refine,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CommandName::SolveGame => "solve-game",
            CommandName::CheckMinimax => "check-minimax",
            CommandName::Smooth => "smooth",
            CommandName::CiDeriv => "ci-deriv",
            CommandName::Compare => "compare",
            CommandName::Refine => "refine",
        }
    }
}

/// A control set: a box discretized by per-axis point counts, or a finite list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSpec {
    Box { lo: Vec<f64>, hi: Vec<f64>, points: Vec<usize> },
    Finite(Vec<Vec<f64>>),
}

impl ControlSpec {
    pub fn to_grid(&self) -> Result<ControlGrid> {
        match self {
            ControlSpec::Box { lo, hi, points } => ControlGrid::boxed(lo.clone(), hi.clone(), points),
            ControlSpec::Finite(points) => ControlGrid::finite(points.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Controls {
    pub p: ControlSpec,
    pub q: ControlSpec,
}

/// Initial history on `[−h, t0]`: one expression in `t` per coordinate, or the
/// node values at `−h, −h + dt, …, t0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialHistory {
    #[serde(default)]
    pub t0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<Vec<f64>>>,
}

/// Parameters for one command. Command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub command: CommandName,
    /// Tree steps on `[t0, T]` (solve-game) or chain stages (check-minimax).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// Step counts of a refinement study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_list: Option<Vec<usize>>,
    /// Steklov parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Number of sampled `(t, x)` points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Members per sampled characteristic bundle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundle_size: Option<usize>,
    /// Directions `s`; defaults depend on the command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
}

fn zero_expr() -> String {
    "0".into()
}

/// The problem file as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub n: usize,
    pub h: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    /// `f_i(t, y, u, v)`, one expression per state coordinate.
    pub dynamics: Vec<String>,
    /// Running cost `χ(t, y, u, v)`.
    #[serde(default = "zero_expr")]
    pub chi: String,
    /// Terminal functional `σ(y)` over reads `y_i(T − d)`.
    pub sigma: String,
    pub controls: Controls,
    /// Times where the data may jump in `t`; every `step(t − c)` needs its `c` here.
    #[serde(default)]
    pub discontinuities: Vec<f64>,
    /// Growth density `c_f(t)`; estimated from the dynamics when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<String>,
    /// Lipschitz density `λ(t)` of `f` and `χ` in the path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<String>,
    pub initial: InitialHistory,
    /// Candidate solution `φ(t, x)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub experiments: Vec<Experiment>,
}

/// Parses and fully validates a problem file. Syntax errors carry the line and
/// column reported by the JSON reader, semantic errors the field name.
pub fn parse_problem(text: &str) -> Result<ProblemFile> {
    let file: ProblemFile = serde_json::from_str(text).map_err(|e| config(format!("problem file: {e}")))?;
    file.compile()?;
    Ok(file)
}

/// A compiled problem ready for the library routines.
#[derive(Debug, Clone)]
pub struct Problem {
    pub game: GameSpec,
    pub grid: Grid,
    pub t0: f64,
    pub x0: Path,
    pub candidate: Option<PathFunctional>,
    /// Whether `c_f` was estimated rather than declared.
    pub growth_estimated: bool,
}

fn time_fn(e: Expr, horizon: f64) -> ScalarTimeFn {
    Arc::new(move |t| e.eval(&Env::time(t, horizon)))
}

fn functional(label: String, e: Expr, horizon: f64) -> PathFunctional {
    PathFunctional::new(label, move |t, y| {
        e.eval(&Env {
            t,
            horizon,
            path: Some(y),
            u: &[],
            v: &[],
        })
    })
}

impl ProblemFile {
    /// Validation context for expressions.
    fn context(&self, p: &ControlGrid, q: &ControlGrid) -> Context {
        Context {
            n: self.n,
            p_dim: p.dim(),
            q_dim: q.dim(),
            h: self.h,
            horizon: self.horizon,
            dt: self.dt,
            discontinuities: self.discontinuities.clone(),
        }
    }

    /// The same problem on a different time step.
    pub fn with_dt(&self, dt: f64) -> ProblemFile {
        ProblemFile { dt, ..self.clone() }
    }

    /// Parameters for `command`, if the file carries any.
    pub fn experiment(&self, command: CommandName) -> Option<&Experiment> {
        self.experiments.iter().find(|e| e.command == command)
    }

    pub fn compile(&self) -> Result<Problem> {
        if self.n == 0 {
            return Err(config("n: state dimension must be at least 1"));
        }
        let grid = Grid::new(self.h, self.horizon, self.dt).map_err(|e| config(format!("dt: {e}")))?;
        if self.dynamics.len() != self.n {
            return Err(config(format!(
                "dynamics: expected {} expressions, one per coordinate, got {}",
                self.n,
                self.dynamics.len()
            )));
        }
        for (i, &d) in self.discontinuities.iter().enumerate() {
            if !(d > 0.0 && d < self.horizon) {
                return Err(config(format!("discontinuities[{i}]: {d} must lie in (0, T)")));
            }
        }
        let p = self.controls.p.to_grid().map_err(|e| config(format!("controls.p: {e}")))?;
        let q = self.controls.q.to_grid().map_err(|e| config(format!("controls.q: {e}")))?;
        let ctx = self.context(&p, &q);
        let dynamics: Vec<Expr> = self
            .dynamics
            .iter()
            .enumerate()
            .map(|(i, src)| compile(&format!("dynamics[{i}]"), src, Role::Running, &ctx))
            .collect::<Result<_>>()?;
        let chi = compile("chi", &self.chi, Role::Running, &ctx)?;
        let sigma = compile("sigma", &self.sigma, Role::Terminal, &ctx)?;
        let growth = self
            .growth
            .as_ref()
            .map(|src| compile("growth", src, Role::TimeOnly, &ctx))
            .transpose()?;
        let lipschitz = self
            .lipschitz
            .as_ref()
            .map(|src| compile("lipschitz", src, Role::TimeOnly, &ctx))
            .transpose()?;
        let candidate = self
            .candidate
            .as_ref()
            .map(|src| compile("candidate", src, Role::Candidate, &ctx))
            .transpose()?;

        let t0 = self.initial.t0;
        let start = grid
            .try_node_index(t0)
            .filter(|&i| i >= grid.zero_index() && i < grid.last_index())
            .ok_or_else(|| config(format!("initial.t0: {t0} must be a grid node in [0, T)")))?;
        let x0 = self.initial_path(grid, start, &ctx)?;

        let horizon = self.horizon;
        let f_exprs = Arc::new(dynamics);
        let f = {
            let exprs = f_exprs.clone();
            Arc::new(move |t: f64, y: &Path, u: &[f64], v: &[f64]| {
                let env = Env {
                    t,
                    horizon,
                    path: Some(y),
                    u,
                    v,
                };
                exprs.iter().map(|e| e.eval(&env)).collect::<Vec<f64>>()
            })
        };
        let chi_fn = Arc::new(move |t: f64, y: &Path, u: &[f64], v: &[f64]| {
            chi.eval(&Env {
                t,
                horizon,
                path: Some(y),
                u,
                v,
            })
        });
        let growth_estimated = growth.is_none();
        let c_f = match growth {
            Some(e) => time_fn(e, horizon),
            None => {
                let c = estimate_growth(&f_exprs, grid, &p, &q, self.n);
                Arc::new(move |_| c) as ScalarTimeFn
            }
        };
        let game = GameSpec {
            n: self.n,
            h: self.h,
            horizon,
            f,
            chi: chi_fn,
            sigma: functional(self.sigma.clone(), sigma, horizon),
            p_grid: p,
            q_grid: q,
            c_f,
            lambda: lipschitz.map(|e| time_fn(e, horizon)),
            time_discontinuities: self.discontinuities.clone(),
            label: self.label.clone().unwrap_or_else(|| "problem".into()),
        };
        Ok(Problem {
            game,
            grid,
            t0,
            x0,
            candidate: candidate.map(|e| functional(self.candidate.clone().unwrap_or_default(), e, horizon)),
            growth_estimated,
        })
    }

    fn initial_path(&self, grid: Grid, start: usize, ctx: &Context) -> Result<Path> {
        match (&self.initial.expr, &self.initial.nodes) {
            (Some(exprs), None) => {
                if exprs.len() != self.n {
                    return Err(config(format!(
                        "initial.expr: expected {} expressions, got {}",
                        self.n,
                        exprs.len()
                    )));
                }
                let exprs: Vec<Expr> = exprs
                    .iter()
                    .enumerate()
                    .map(|(i, src)| compile(&format!("initial.expr[{i}]"), src, Role::History, ctx))
                    .collect::<Result<_>>()?;
                let horizon = self.horizon;
                let path = Path::from_fn(grid, self.n, |t| {
                    exprs.iter().map(|e| e.eval(&Env::time(t, horizon))).collect()
                })
                .map_err(|e| config(format!("initial.expr: {e}")))?;
                Ok(path.stopped_at_index(start))
            }
            (None, Some(nodes)) => {
                if nodes.len() != start + 1 {
                    return Err(config(format!(
                        "initial.nodes: expected {} node values on [-h, t0], got {}",
                        start + 1,
                        nodes.len()
                    )));
                }
                let mut values = Vec::with_capacity(grid.len() * self.n);
                for (i, node) in nodes.iter().enumerate() {
                    if node.len() != self.n {
                        return Err(config(format!("initial.nodes[{i}]: expected {} components", self.n)));
                    }
                    values.extend_from_slice(node);
                }
                let last = nodes[start].clone();
                for _ in start + 1..grid.len() {
                    values.extend_from_slice(&last);
                }
                Path::new(grid, self.n, values).map_err(|e| config(format!("initial.nodes: {e}")))
            }
            _ => Err(config("initial: give exactly one of `expr` and `nodes`")),
        }
    }
}

/// Conservative constant `c` with `‖f(t,y,u,v)‖ ≤ c(1 + ‖y‖∞)`, estimated from the
/// value at `y ≡ 0` and difference quotients against constant paths `y ≡ ±r·1`
/// over the control grids and the cell midpoints.
fn estimate_growth(f: &[Expr], grid: Grid, p: &ControlGrid, q: &ControlGrid, n: usize) -> f64 {
    let eval = |t: f64, y: &Path, u: &[f64], v: &[f64]| -> Vec<f64> {
        let env = Env {
            t,
            horizon: grid.horizon(),
            path: Some(y),
            u,
            v,
        };
        f.iter().map(|e| e.eval(&env)).collect()
    };
    let zero = Path::zeros(grid, n);
    let probes: Vec<(Path, f64)> = [1.0, -1.0, 4.0, -4.0]
        .iter()
        .map(|&r| (Path::constant(grid, &vec![r; n]), r.abs()))
        .collect();
    let mut c: f64 = 0.0;
    for j in grid.zero_index()..grid.last_index() {
        let t = 0.5 * (grid.time(j) + grid.time(j + 1));
        for u in p.points() {
            for v in q.points() {
                let f0 = eval(t, &zero, u, v);
                c = c.max(norm(&f0));
                for (y, r) in &probes {
                    let fy = eval(t, y, u, v);
                    let diff: Vec<f64> = fy.iter().zip(&f0).map(|(a, b)| a - b).collect();
                    c = c.max(norm(&diff) / r);
                }
            }
        }
    }
    if c.is_finite() {
        c
    } else {
        f64::MAX
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::game::{solve_game, TreeOptions};
    use crate::hamiltonian::{game_hamiltonian, Side};

    const CANCELLATION: &str = r#"{
        "n": 1, "h": 0.5, "T": 1.0, "dt": 0.25,
        "dynamics": ["u1 + v1"],
        "chi": "0",
        "sigma": "y1(T)",
        "controls": {
            "p": {"box": {"lo": [-1], "hi": [1], "points": [3]}},
            "q": {"box": {"lo": [-1], "hi": [1], "points": [3]}}
        },
        "initial": {"t0": 0.0, "expr": ["0"]}
    }"#;

    fn with(field: &str, value: &str) -> String {
        let mut v: serde_json::Value = serde_json::from_str(CANCELLATION).unwrap();
        v[field] = serde_json::from_str(value).unwrap();
        v.to_string()
    }

    fn message(e: Error) -> String {
        match e {
            Error::Config(m) => m,
            other => panic!("expected a configuration error, got {other:?}"),
        }
    }

    #[test]
    fn cancellation_file_parses_and_round_trips() {
        let file = parse_problem(CANCELLATION).unwrap();
        let text = serde_json::to_string_pretty(&file).unwrap();
        assert_eq!(parse_problem(&text).unwrap(), file);
        let problem = file.compile().unwrap();
        let r = solve_game(&problem.game, 0.0, &problem.x0, 4, &TreeOptions::default()).unwrap();
        assert_eq!((r.rho_lower, r.rho_upper), (0.0, 0.0));
        assert!(problem.growth_estimated);
        assert_eq!((problem.game.c_f)(0.3), 2.0);
    }

    #[test]
    fn unknown_field_is_reported_with_position() {
        let text = CANCELLATION.replace("\"chi\"", "\"cost\"");
        let m = message(parse_problem(&text).unwrap_err());
        assert!(m.contains("unknown field `cost`") && m.contains("line"), "{m}");
    }

    #[test]
    fn off_grid_lag_is_named() {
        let m = message(parse_problem(&with("dynamics", r#"["u1 + v1 + y1(t - 0.3)"]"#)).unwrap_err());
        assert!(m.starts_with("dynamics[0]") && m.contains("lag 0.3"), "{m}");
    }

    #[test]
    fn malformed_and_unguarded_expressions_are_rejected() {
        let m = message(parse_problem(&with("chi", r#""1 / (2 - 2)""#)).unwrap_err());
        assert!(m.starts_with("chi") && m.contains("division"), "{m}");
        let m = message(parse_problem(&with("sigma", r#""y1(T) +""#)).unwrap_err());
        assert!(m.starts_with("sigma") && m.contains("column"), "{m}");
        let m = message(parse_problem(&with("sigma", r#""y1""#)).unwrap_err());
        assert!(m.starts_with("sigma"), "{m}");
    }

    #[test]
    fn step_discontinuity_reaches_the_hamiltonian() {
        let text = with("dynamics", r#"["(1 - step(t - 0.5)) * u1 + v1"]"#);
        assert!(parse_problem(&text).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["discontinuities"] = serde_json::json!([0.5]);
        let problem = parse_problem(&v.to_string()).unwrap().compile().unwrap();
        let h = game_hamiltonian(&problem.game, Side::Lower).unwrap();
        assert_eq!(h.discontinuity_times(), &[0.5]);
        // before ½ the minimizer cancels, afterwards only v acts
        assert_eq!(h.eval(0.25, &problem.x0, &[1.0]), 0.0);
        assert_eq!(h.eval(0.75, &problem.x0, &[1.0]), 1.0);
    }

    #[test]
    fn node_history_and_finite_controls() {
        let mut v: serde_json::Value = serde_json::from_str(CANCELLATION).unwrap();
        v["initial"] = serde_json::json!({"t0": 0.25, "nodes": [[0.0], [0.5], [1.0], [2.0]]});
        v["controls"]["q"] = serde_json::json!({"finite": [[-1.0], [1.0]]});
        let problem = parse_problem(&v.to_string()).unwrap().compile().unwrap();
        assert_eq!(problem.t0, 0.25);
        assert_eq!(problem.x0.eval(1.0), vec![2.0]);
        assert_eq!(problem.x0.eval(-0.25), vec![0.5]);
        v["initial"] = serde_json::json!({"t0": 0.25, "nodes": [[0.0]]});
        assert!(message(parse_problem(&v.to_string()).unwrap_err()).starts_with("initial.nodes"));
    }

    #[test]
    fn candidate_and_sigma_are_non_anticipative() {
        let mut v: serde_json::Value = serde_json::from_str(CANCELLATION).unwrap();
        v["sigma"] = serde_json::json!("y1(T) + y1(T - 0.5)");
        v["candidate"] = serde_json::json!("y1 + y1(T - 0.5)");
        v["initial"] = serde_json::json!({"t0": 0.75, "expr": ["t"]});
        let problem = parse_problem(&v.to_string()).unwrap().compile().unwrap();
        let phi = problem.candidate.unwrap();
        assert_eq!(phi.eval(0.75, &problem.x0), 1.25);
        assert_eq!(problem.game.sigma.eval(1.0, &problem.x0), 1.25);
    }

    #[test]
    fn experiments_round_trip() {
        let mut v: serde_json::Value = serde_json::from_str(CANCELLATION).unwrap();
        v["experiments"] = serde_json::json!([
            {"command": "refine", "steps_list": [2, 4, 8]},
            {"command": "smooth", "k": [2, 4], "directions": [[1.0]]}
        ]);
        let file = parse_problem(&v.to_string()).unwrap();
        assert_eq!(file.experiment(CommandName::Refine).unwrap().steps_list, Some(vec![2, 4, 8]));
        assert!(file.experiment(CommandName::Compare).is_none());
        let again = parse_problem(&serde_json::to_string(&file).unwrap()).unwrap();
        assert_eq!(again, file);
        v["experiments"] = serde_json::json!([{"command": "refine", "steps": 2, "colour": 1}]);
        assert!(parse_problem(&v.to_string()).is_err());
    }
}
