//! Discretized lower and upper values of the zero-sum time-delay game by exact
//! scenario-tree backward induction, with step-feedback policies.
//!
//! On each cell the leader announces a control and the responder reacts: in the
//! lower game the maximizer `v` leads and the minimizer `u` responds (the
//! stepwise counterpart of `max_v min_u`), in the upper game the roles swap.
//! Children reached by bit-identical state increments are evaluated once, which is
//! exact and keeps separable games far below the worst-case node count.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ci::PathFunctional;
use crate::control::{ControlGrid, ControlSignal};
use crate::dynamics::{check_derivative, integrate, DynamicsFn};
use crate::error::{config, Error, Result};
use crate::hamiltonian::{solve_matrix, ScalarTimeFn, Side};
use crate::path::{Grid, Path};

/// Running cost `χ(τ, y(·∧τ), u, v)`.
pub type CostFn = Arc<dyn Fn(f64, &Path, &[f64], &[f64]) -> f64 + Send + Sync>;

/// Default cap on expanded tree nodes.
pub const DEFAULT_NODE_BUDGET: u64 = 5_000_000;

/// A zero-sum game: dynamics, running cost, terminal functional and control grids.
///
/// `c_f` bounds the dynamics, `‖f(τ,y,u,v)‖ ≤ c_f(τ)(1 + ‖y(·∧τ)‖∞)`; `lambda`
/// is an optional Lipschitz density of `f` and `χ` in the path variable.
#[derive(Clone)]
pub struct GameSpec {
    pub n: usize,
    pub h: f64,
    pub horizon: f64,
    pub f: DynamicsFn,
    pub chi: CostFn,
    pub sigma: PathFunctional,
    pub p_grid: ControlGrid,
    pub q_grid: ControlGrid,
    pub c_f: ScalarTimeFn,
    pub lambda: Option<ScalarTimeFn>,
    pub time_discontinuities: Vec<f64>,
    pub label: String,
}

impl fmt::Debug for GameSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameSpec")
            .field("label", &self.label)
            .field("n", &self.n)
            .field("h", &self.h)
            .field("horizon", &self.horizon)
            .field("p_grid", &self.p_grid.len())
            .field("q_grid", &self.q_grid.len())
            .field("time_discontinuities", &self.time_discontinuities)
            .finish()
    }
}

impl GameSpec {
    /// Grid with `steps` cells on `[t, T]`.
    pub fn grid_for(&self, t: f64, steps: usize) -> Result<Grid> {
        if steps == 0 {
            return Err(config("steps must be at least 1"));
        }
        if !(t >= 0.0 && t < self.horizon) {
            return Err(config(format!("start time {t} outside [0, {})", self.horizon)));
        }
        Grid::new(self.h, self.horizon, (self.horizon - t) / steps as f64)
    }

    /// The game with `σ` and `χ` negated and the players' roles swapped.
    pub fn mirrored(&self) -> GameSpec {
        let (f, chi, sigma) = (self.f.clone(), self.chi.clone(), self.sigma.clone());
        GameSpec {
            f: Arc::new(move |t, y, u, v| f(t, y, v, u)),
            chi: Arc::new(move |t, y, u, v| -chi(t, y, v, u)),
            sigma: PathFunctional::new(format!("-({})", sigma.label()), move |t, y| -sigma.eval(t, y)),
            p_grid: self.q_grid.clone(),
            q_grid: self.p_grid.clone(),
            label: format!("mirror of {}", self.label),
            ..self.clone()
        }
    }
}

/// Options for the tree search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeOptions {
    pub budget: u64,
    /// Worker threads; `None` uses the ambient pool.
    pub threads: Option<usize>,
    /// Keep the full responder policy (forces a sequential search).
    pub record_policy: bool,
}

impl Default for TreeOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_NODE_BUDGET,
            threads: None,
            record_policy: false,
        }
    }
}

/// Which player a policy belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Player {
    /// The minimizer, choosing `u ∈ P`.
    First,
    /// The maximizer, choosing `v ∈ Q`.
    Second,
}

/// One expanded decision node of the tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNode {
    pub stage: usize,
    /// Leader's optimal action index.
    pub leader: usize,
    /// Responder's action index for each leader action.
    pub replies: Vec<usize>,
    /// Distinct-child index for each `(u, v)` pair, row-major in `u`.
    pub child_of: Vec<usize>,
    /// Arena id of each distinct child (`None` below the last stage).
    pub children: Vec<Option<usize>>,
}

/// Step-feedback responder policy over the reachable tree (node 0 is the root).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackPolicy {
    pub side: Side,
    pub responder: Player,
    pub grid: Grid,
    pub start: usize,
    pub nodes: Vec<PolicyNode>,
}

impl FeedbackPolicy {
    /// Responder's control indices against a pure opponent sequence.
    /// Returns `(u indices, v indices)` per stage.
    pub fn replay(&self, opponent: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
        let stages = self.grid.last_index() - self.start;
        if opponent.len() != stages {
            return Err(config(format!("opponent sequence needs {stages} actions")));
        }
        let (mut us, mut vs) = (Vec::new(), Vec::new());
        let mut id = Some(0);
        for &a in opponent {
            let node = &self.nodes[id.ok_or_else(|| config("policy tree ended early"))?];
            let reply = *node
                .replies
                .get(a)
                .ok_or_else(|| config(format!("opponent action {a} out of range")))?;
            let (u, v) = match self.responder {
                Player::First => (reply, a),
                Player::Second => (a, reply),
            };
            let nq = match self.responder {
                Player::First => node.replies.len(),
                Player::Second => node.child_of.len() / node.replies.len(),
            };
            id = node.children[node.child_of[u * nq + v]];
            us.push(u);
            vs.push(v);
        }
        Ok((us, vs))
    }
}

/// Value of one side of the game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeValue {
    pub side: Side,
    pub value: f64,
    pub nodes: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub policy: Option<FeedbackPolicy>,
}

/// Both discretized values at one step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameValueReport {
    pub steps: usize,
    pub dt: f64,
    pub rho_lower: f64,
    pub rho_upper: f64,
    pub gap: f64,
    pub nodes_lower: u64,
    pub nodes_upper: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub policies: Option<(FeedbackPolicy, FeedbackPolicy)>,
}

struct Search<'a> {
    game: &'a GameSpec,
    side: Side,
    grid: Grid,
    end: usize,
    budget: u64,
    required: u64,
    counter: AtomicU64,
}

/// Levels of the tree expanded in parallel below the root.
const PARALLEL_LEVELS: u32 = 2;

impl Search<'_> {
    fn expand(
        &self,
        j: usize,
        buf: &mut Path,
        arena: &mut Option<Vec<PolicyNode>>,
        par_levels: u32,
    ) -> Result<(f64, Option<usize>)> {
        if self.counter.fetch_add(1, Ordering::Relaxed) + 1 > self.budget {
            return Err(Error::Resource {
                budget: self.budget,
                required: self.required,
            });
        }
        let game = self.game;
        if j == self.end {
            return Ok((game.sigma.eval(self.grid.horizon(), buf), None));
        }
        let tau = self.grid.time(j);
        let dt = self.grid.dt();
        let (ps, qs) = (game.p_grid.points(), game.q_grid.points());
        let (np, nq) = (ps.len(), qs.len());
        let mut costs = Vec::with_capacity(np * nq);
        let mut child_of = Vec::with_capacity(np * nq);
        let mut increments: Vec<Vec<f64>> = Vec::new();
        let mut keys: Vec<Vec<u64>> = Vec::new();
        let cell = j - self.grid.zero_index();
        for p in ps {
            for q in qs {
                let d = (game.f)(tau, buf, p, q);
                check_derivative(&d, game.n, cell, tau)?;
                let c = (game.chi)(tau, buf, p, q);
                if !c.is_finite() {
                    return Err(Error::Integration {
                        cell,
                        time: tau,
                        message: format!("non-finite running cost {c}"),
                    });
                }
                costs.push(c);
                let key: Vec<u64> = d.iter().map(|v| (v + 0.0).to_bits()).collect();
                match keys.iter().position(|k| *k == key) {
                    Some(idx) => child_of.push(idx),
                    None => {
                        child_of.push(keys.len());
                        keys.push(key);
                        increments.push(d);
                    }
                }
            }
        }
        let here = buf.node(j).to_vec();
        let next_state = |d: &[f64]| -> Vec<f64> {
            here.iter().zip(d).map(|(a, b)| a + dt * b).collect()
        };

        let slot = arena.as_mut().map(|a| {
            a.push(PolicyNode {
                stage: 0,
                leader: 0,
                replies: Vec::new(),
                child_of: Vec::new(),
                children: Vec::new(),
            });
            a.len() - 1
        });

        let mut child_values = Vec::with_capacity(increments.len());
        let mut child_ids = Vec::with_capacity(increments.len());
        if par_levels > 0 && arena.is_none() && increments.len() > 1 {
            let results = crate::par::map_indexed(increments.len(), |c| {
                let mut local = buf.clone();
                local.set_tail(j + 1, &next_state(&increments[c]));
                self.expand(j + 1, &mut local, &mut None, par_levels - 1)
            });
            for r in results {
                let (v, id) = r?;
                child_values.push(v);
                child_ids.push(id);
            }
        } else {
            for d in &increments {
                buf.set_tail(j + 1, &next_state(d));
                let (v, id) = self.expand(j + 1, buf, arena, 0)?;
                child_values.push(v);
                child_ids.push(id);
            }
            buf.set_tail(j + 1, &here);
        }

        let table: Vec<f64> = (0..np * nq)
            .map(|pair| -costs[pair] * dt + child_values[child_of[pair]])
            .collect();
        let (value, iu, iv) = solve_matrix(&table, np, nq, self.side);

        if let (Some(a), Some(slot)) = (arena.as_mut(), slot) {
            let (leader, replies) = match self.side {
                Side::Lower => (iv, (0..nq).map(|k| argmin_column(&table, np, nq, k)).collect()),
                Side::Upper => (iu, (0..np).map(|i| argmax_row(&table, nq, i)).collect()),
            };
            a[slot] = PolicyNode {
                stage: j,
                leader,
                replies,
                child_of,
                children: child_ids,
            };
        }
        Ok((value, slot))
    }
}

fn argmin_column(table: &[f64], rows: usize, cols: usize, k: usize) -> usize {
    let mut best = (f64::INFINITY, 0);
    for i in 0..rows {
        if table[i * cols + k] < best.0 {
            best = (table[i * cols + k], i);
        }
    }
    best.1
}

fn argmax_row(table: &[f64], cols: usize, i: usize) -> usize {
    let mut best = (f64::NEG_INFINITY, 0);
    for k in 0..cols {
        if table[i * cols + k] > best.0 {
            best = (table[i * cols + k], k);
        }
    }
    best.1
}

fn worst_case_nodes(branching: u64, steps: usize) -> u64 {
    let mut total: u64 = 1;
    let mut level: u64 = 1;
    for _ in 0..steps {
        level = level.saturating_mul(branching);
        total = total.saturating_add(level);
    }
    total
}

/// History `x` restricted to `[−h, t]` on the tree grid.
fn tree_start(game: &GameSpec, t: f64, x: &Path, steps: usize) -> Result<(Grid, usize, Path)> {
    let grid = game.grid_for(t, steps)?;
    if x.dim() != game.n {
        return Err(config(format!("history has dimension {}, game has {}", x.dim(), game.n)));
    }
    if game.p_grid.is_empty() || game.q_grid.is_empty() {
        return Err(config("empty control grid"));
    }
    let x = if *x.grid() == grid { x.clone() } else { x.resample(grid)? };
    let start = grid.node_index(t)?;
    Ok((grid, start, x.stopped_at_index(start)))
}

fn value_tree(
    game: &GameSpec,
    side: Side,
    t: f64,
    x: &Path,
    steps: usize,
    opts: &TreeOptions,
) -> Result<TreeValue> {
    let (grid, start, mut buf) = tree_start(game, t, x, steps)?;
    let branching = (game.p_grid.len() * game.q_grid.len()) as u64;
    let search = Search {
        game,
        side,
        grid,
        end: grid.last_index(),
        budget: opts.budget,
        required: worst_case_nodes(branching, steps),
        counter: AtomicU64::new(0),
    };
    let mut arena = opts.record_policy.then(Vec::new);
    let par = if opts.record_policy { 0 } else { PARALLEL_LEVELS };
    let (value, _) = crate::par::with_threads(opts.threads, || {
        search.expand(start, &mut buf, &mut arena, par)
    })?;
    let policy = arena.map(|mut nodes| {
        for node in &mut nodes {
            node.stage -= start;
        }
        FeedbackPolicy {
            side,
            responder: match side {
                Side::Lower => Player::First,
                Side::Upper => Player::Second,
            },
            grid,
            start,
            nodes,
        }
    });
    Ok(TreeValue {
        side,
        value,
        nodes: search.counter.load(Ordering::Relaxed),
        policy,
    })
}

/// Lower value: per step `max_v min_u [−χ dt + V_{j+1}]`, minimizer responding.
pub fn lower_value_tree(game: &GameSpec, t: f64, x: &Path, steps: usize, opts: &TreeOptions) -> Result<TreeValue> {
    value_tree(game, Side::Lower, t, x, steps, opts)
}

/// Upper value: per step `min_u max_v [−χ dt + V_{j+1}]`, maximizer responding.
pub fn upper_value_tree(game: &GameSpec, t: f64, x: &Path, steps: usize, opts: &TreeOptions) -> Result<TreeValue> {
    value_tree(game, Side::Upper, t, x, steps, opts)
}

/// Both values and their gap.
pub fn solve_game(game: &GameSpec, t: f64, x: &Path, steps: usize, opts: &TreeOptions) -> Result<GameValueReport> {
    let lower = lower_value_tree(game, t, x, steps, opts)?;
    let upper = upper_value_tree(game, t, x, steps, opts)?;
    let dt = game.grid_for(t, steps)?.dt();
    Ok(GameValueReport {
        steps,
        dt,
        rho_lower: lower.value,
        rho_upper: upper.value,
        gap: upper.value - lower.value,
        nodes_lower: lower.nodes,
        nodes_upper: upper.nodes,
        policies: lower.policy.zip(upper.policy),
    })
}

/// `σ(y) − Σ χ(τ_j, y(·∧τ_j), u_j, v_j) dt` along the Euler motion driven by `u`, `v`.
pub fn evaluate_cost(game: &GameSpec, t: f64, x: &Path, u: &ControlSignal, v: &ControlSignal) -> Result<f64> {
    let y = integrate(&game.f, t, x, u, v)?;
    let grid = *x.grid();
    let start = grid.node_index(t)?;
    let dt = grid.dt();
    let mut running = 0.0;
    for j in start..grid.last_index() {
        let tau = grid.time(j);
        let ys = y.stopped_at_index(j);
        running += (game.chi)(tau, &ys, u.at_node(j), v.at_node(j)) * dt;
    }
    Ok(game.sigma.eval(grid.horizon(), &y) - running)
}

/// Replay a recorded policy against a pure opponent sequence and return the cost.
pub fn replay_cost(game: &GameSpec, policy: &FeedbackPolicy, x: &Path, opponent: &[usize]) -> Result<f64> {
    let (us, vs) = policy.replay(opponent)?;
    let grid = policy.grid;
    let x = if *x.grid() == grid { x.clone() } else { x.resample(grid)? };
    let t = grid.time(policy.start);
    let pu: Vec<Vec<f64>> = us.iter().map(|&i| game.p_grid.points()[i].clone()).collect();
    let pv: Vec<Vec<f64>> = vs.iter().map(|&i| game.q_grid.points()[i].clone()).collect();
    let u = ControlSignal::new(&grid, game.p_grid.set(), t, pu)?;
    let v = ControlSignal::new(&grid, game.q_grid.set(), t, pv)?;
    evaluate_cost(game, t, &x, &u, &v)
}

/// One row of a refinement study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementRow {
    pub steps: usize,
    pub dt: f64,
    pub rho_lower: f64,
    pub rho_upper: f64,
    pub gap: f64,
    pub nodes: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub err_lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub err_upper: Option<f64>,
    /// Wall-clock seconds; kept out of serialized reports so they stay reproducible.
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Solve the game for each entry of `steps_list`, comparing with an optional
/// closed-form solution `φ(t, x)`.
pub fn refinement_study(
    game: &GameSpec,
    t: f64,
    x: &Path,
    steps_list: &[usize],
    closed_form: Option<&PathFunctional>,
    opts: &TreeOptions,
) -> Result<Vec<RefinementRow>> {
    let exact = closed_form.map(|phi| phi.eval(t, x));
    steps_list
        .iter()
        .map(|&steps| {
            let clock = Instant::now();
            let r = solve_game(game, t, x, steps, opts)?;
            Ok(RefinementRow {
                steps,
                dt: r.dt,
                rho_lower: r.rho_lower,
                rho_upper: r.rho_upper,
                gap: r.gap,
                nodes: r.nodes_lower + r.nodes_upper,
                err_lower: exact.map(|e| (r.rho_lower - e).abs()),
                err_upper: exact.map(|e| (r.rho_upper - e).abs()),
                wall_seconds: clock.elapsed().as_secs_f64(),
            })
        })
        .collect()
}
