//! Hamiltonians `H(t, x(·), s)`: user-defined ones, the lower/upper Hamiltonians
//! of a game, and their Steklov averages in time.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::game::GameSpec;
use crate::path::{dot, Grid, Path, TimeDensity};
use crate::regularization::PathDictionary;
use crate::verdict::{Verdict, Witness, Worst};

pub type HamiltonianFn = Arc<dyn Fn(f64, &Path, &[f64]) -> f64 + Send + Sync>;

/// Scalar function of time (densities such as `c_H`, `λ_H`).
pub type ScalarTimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Default number of midpoint cells per Steklov window or integration piece.
pub const DEFAULT_QUADRATURE_CELLS: usize = 64;

/// Which of the two game Hamiltonians (or values).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `max_v min_u`.
    Lower,
    /// `min_u max_v`.
    Upper,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Lower => write!(f, "lower"),
            Side::Upper => write!(f, "upper"),
        }
    }
}

/// A Hamiltonian together with its growth density `c_H`, an optional Lipschitz
/// density `λ_H` in the path variable, and its declared time structure.
///
/// `discontinuity_times` are the times where continuity in `t` may fail;
/// `kinks` are additional times where the time profile changes form. Both
/// split integration cells so piecewise-linear-in-time profiles integrate exactly.
#[derive(Clone)]
pub struct HamiltonianSpec {
    eval: HamiltonianFn,
    horizon: f64,
    growth: ScalarTimeFn,
    lipschitz: Option<ScalarTimeFn>,
    discontinuity_times: Vec<f64>,
    kinks: Vec<f64>,
    label: String,
}

impl fmt::Debug for HamiltonianSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianSpec")
            .field("label", &self.label)
            .field("horizon", &self.horizon)
            .field("discontinuity_times", &self.discontinuity_times)
            .field("kinks", &self.kinks)
            .finish()
    }
}

impl HamiltonianSpec {
    pub fn new(
        label: impl Into<String>,
        horizon: f64,
        growth: ScalarTimeFn,
        eval: impl Fn(f64, &Path, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            eval: Arc::new(eval),
            horizon,
            growth,
            lipschitz: None,
            discontinuity_times: Vec::new(),
            kinks: Vec::new(),
            label: label.into(),
        }
    }

    /// `H ≡ 0`.
    pub fn zero(horizon: f64) -> Self {
        Self::new("zero", horizon, Arc::new(|_| 0.0), |_, _, _| 0.0)
            .with_lipschitz(Arc::new(|_| 0.0))
    }

    pub fn with_lipschitz(mut self, lambda: ScalarTimeFn) -> Self {
        self.lipschitz = Some(lambda);
        self
    }

    pub fn with_discontinuities(mut self, times: Vec<f64>) -> Self {
        self.discontinuity_times = sorted_inside(times, self.horizon);
        self
    }

    pub fn with_kinks(mut self, times: Vec<f64>) -> Self {
        self.kinks = sorted_inside(times, self.horizon);
        self
    }

    pub fn eval(&self, t: f64, x: &Path, s: &[f64]) -> f64 {
        (self.eval)(t, x, s)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn growth_at(&self, t: f64) -> f64 {
        (self.growth)(t)
    }

    pub fn growth_fn(&self) -> &ScalarTimeFn {
        &self.growth
    }

    pub fn lipschitz_fn(&self) -> Option<&ScalarTimeFn> {
        self.lipschitz.as_ref()
    }

    /// `c_H` as a cell density on `grid` (cell-midpoint samples).
    pub fn growth_density(&self, grid: Grid) -> Result<TimeDensity> {
        TimeDensity::from_fn(grid, |t| (self.growth)(t))
    }

    pub fn discontinuity_times(&self) -> &[f64] {
        &self.discontinuity_times
    }

    /// Discontinuities and kinks, sorted and deduplicated.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self
            .discontinuity_times
            .iter()
            .chain(&self.kinks)
            .copied()
            .collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }
}

fn sorted_inside(mut times: Vec<f64>, horizon: f64) -> Vec<f64> {
    times.retain(|t| *t > 0.0 && *t < horizon);
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

/// Exhaustive max-min (lower) or min-max (upper) of `⟨s, f⟩ − χ` over the control
/// grids. Ties resolve to the lowest index. Returns the value and the indices
/// `(u, v)` of the optimal pair.
pub fn game_minimax(game: &GameSpec, side: Side, tau: f64, x: &Path, s: &[f64]) -> (f64, usize, usize) {
    let ps = game.p_grid.points();
    let qs = game.q_grid.points();
    let table: Vec<f64> = ps
        .iter()
        .flat_map(|p| {
            qs.iter()
                .map(move |q| dot(s, &(game.f)(tau, x, p, q)) - (game.chi)(tau, x, p, q))
        })
        .collect();
    let nq = qs.len();
    solve_matrix(&table, ps.len(), nq, side)
}

/// Pure max-min / min-max of a row-major `rows × cols` table where rows are the
/// minimizer's actions and columns the maximizer's.
pub(crate) fn solve_matrix(table: &[f64], rows: usize, cols: usize, side: Side) -> (f64, usize, usize) {
    match side {
        Side::Lower => {
            let mut best = (f64::NEG_INFINITY, 0, 0);
            for k in 0..cols {
                let (mut m, mut arg) = (f64::INFINITY, 0);
                for i in 0..rows {
                    let v = table[i * cols + k];
                    if v < m {
                        m = v;
                        arg = i;
                    }
                }
                if m > best.0 {
                    best = (m, arg, k);
                }
            }
            best
        }
        Side::Upper => {
            let mut best = (f64::INFINITY, 0, 0);
            for i in 0..rows {
                let (mut m, mut arg) = (f64::NEG_INFINITY, 0);
                for k in 0..cols {
                    let v = table[i * cols + k];
                    if v > m {
                        m = v;
                        arg = k;
                    }
                }
                if m < best.0 {
                    best = (m, i, arg);
                }
            }
            best
        }
    }
}

/// `H^-` (lower) or `H^+` (upper) of a game. On declared discontinuity times the
/// value is 0. The path is stopped at `τ` before `f` and `χ` see it.
pub fn game_hamiltonian(game: &GameSpec, side: Side) -> Result<HamiltonianSpec> {
    if game.p_grid.is_empty() || game.q_grid.is_empty() {
        return Err(config("empty control grid"));
    }
    let g = game.clone();
    let bad = game.time_discontinuities.clone();
    let mut spec = HamiltonianSpec::new(
        format!("{side} hamiltonian of {}", game.label),
        game.horizon,
        game.c_f.clone(),
        move |tau, x, s| {
            if bad.contains(&tau) {
                return 0.0;
            }
            let xs = x.stopped_at(tau);
            game_minimax(&g, side, tau, &xs, s).0
        },
    )
    .with_discontinuities(game.time_discontinuities.clone());
    if let Some(lambda) = &game.lambda {
        spec = spec.with_lipschitz(lambda.clone());
    }
    Ok(spec)
}

/// `max` over the sample of `H^+ − H^-`.
pub fn isaacs_gap(game: &GameSpec, sample: &[(f64, Path, Vec<f64>)]) -> Result<f64> {
    if sample.is_empty() {
        return Err(config("isaacs gap needs a non-empty sample"));
    }
    let mut gap = f64::NEG_INFINITY;
    for (t, x, s) in sample {
        let xs = x.stopped_at(*t);
        let lo = game_minimax(game, Side::Lower, *t, &xs, s).0;
        let hi = game_minimax(game, Side::Upper, *t, &xs, s).0;
        gap = gap.max(hi - lo);
    }
    Ok(gap)
}

/// Composite midpoint rule on `[a, b]` split at `breaks`, with `cells` subcells
/// per window of length `window` (at least one per piece).
fn piecewise_midpoint(
    a: f64,
    b: f64,
    breaks: &[f64],
    cells: usize,
    window: f64,
    f: impl Fn(f64) -> f64,
) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut knots = vec![a];
    knots.extend(breaks.iter().copied().filter(|t| *t > a && *t < b));
    knots.push(b);
    let mut total = 0.0;
    for w in knots.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let len = hi - lo;
        let m = ((cells as f64 * len / window).ceil() as usize).max(1);
        let step = len / m as f64;
        let mut piece = 0.0;
        for i in 0..m {
            piece += f(lo + (i as f64 + 0.5) * step);
        }
        total += piece * step;
    }
    total
}

/// Steklov average `H_k(t,x,s) = (k/2) ∫_{t−1/k}^{t+1/k} H(τ, x(·∧t), s) dτ` with
/// `H := 0` outside `[0, T]`.
#[derive(Clone, Debug)]
pub struct SmoothedHamiltonian {
    base: HamiltonianSpec,
    k: u32,
    cells: usize,
}

/// Steklov smoothing with the default quadrature density.
pub fn steklov_smooth(h: &HamiltonianSpec, k: u32) -> Result<SmoothedHamiltonian> {
    SmoothedHamiltonian::new(h.clone(), k, DEFAULT_QUADRATURE_CELLS)
}

impl SmoothedHamiltonian {
    pub fn new(base: HamiltonianSpec, k: u32, cells: usize) -> Result<Self> {
        if k == 0 {
            return Err(config("steklov index k must be at least 1"));
        }
        if cells == 0 {
            return Err(config("quadrature cell count must be positive"));
        }
        Ok(Self { base, k, cells })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn base(&self) -> &HamiltonianSpec {
        &self.base
    }

    fn half_width(&self) -> f64 {
        1.0 / self.k as f64
    }

    /// Window average of a scalar function of time under the zero extension.
    fn average(&self, t: f64, f: impl Fn(f64) -> f64) -> f64 {
        let r = self.half_width();
        let breaks = self.base.breakpoints();
        let integral = piecewise_midpoint(
            (t - r).max(0.0),
            (t + r).min(self.base.horizon),
            &breaks,
            self.cells,
            2.0 * r,
            f,
        );
        0.5 * self.k as f64 * integral
    }

    pub fn eval(&self, t: f64, x: &Path, s: &[f64]) -> f64 {
        let xs = x.stopped_at(t);
        self.average(t, |tau| self.base.eval(tau, &xs, s))
    }

    /// `max_t (k/2) ∫ λ_H` over the window, the Lipschitz constant of `H_k` in
    /// the path variable.
    pub fn lipschitz_bound(&self) -> Option<f64> {
        let lambda = self.base.lipschitz.clone()?;
        let horizon = self.base.horizon;
        let mut probes: Vec<f64> = (0..=1000).map(|i| horizon * i as f64 / 1000.0).collect();
        let r = self.half_width();
        for b in self.base.breakpoints() {
            probes.extend([b - r, b + r, b]);
        }
        Some(
            probes
                .into_iter()
                .filter(|t| *t >= 0.0 && *t <= horizon)
                .map(|t| self.average(t, |tau| lambda(tau)))
                .fold(0.0, f64::max),
        )
    }

    /// Times where `H_k` changes form: base breakpoints shifted by `±1/k`, and the
    /// edges `1/k`, `T − 1/k` of the zero extension.
    pub fn kinks(&self) -> Vec<f64> {
        let r = self.half_width();
        let mut out = vec![r, self.base.horizon - r];
        for b in self.base.breakpoints() {
            out.extend([b - r, b + r]);
        }
        out
    }

    /// The smoothed Hamiltonian as a time-continuous [`HamiltonianSpec`].
    pub fn to_spec(&self) -> HamiltonianSpec {
        let me = self.clone();
        let growth_src = self.clone();
        let growth: ScalarTimeFn =
            Arc::new(move |t| growth_src.average(t, |tau| growth_src.base.growth_at(tau)));
        let mut spec = HamiltonianSpec::new(
            format!("steklov k={} of {}", self.k, self.base.label),
            self.base.horizon,
            growth,
            move |t, x, s| me.eval(t, x, s),
        )
        .with_kinks(self.kinks());
        if let Some(lambda) = self.base.lipschitz.clone() {
            let src = self.clone();
            spec = spec.with_lipschitz(Arc::new(move |t| src.average(t, |tau| lambda(tau))));
        }
        spec
    }
}

/// `max_{y ∈ dict} ∫_0^T |H1(t,y,s) − H2(t,y,s)| dt`, by composite midpoint over
/// the merged time partition of both Hamiltonians.
pub fn l1_distance(
    h1: &HamiltonianSpec,
    h2: &HamiltonianSpec,
    dict: &PathDictionary,
    s: &[f64],
) -> Result<f64> {
    l1_distance_with(h1, h2, dict, s, DEFAULT_QUADRATURE_CELLS)
}

pub fn l1_distance_with(
    h1: &HamiltonianSpec,
    h2: &HamiltonianSpec,
    dict: &PathDictionary,
    s: &[f64],
    cells: usize,
) -> Result<f64> {
    let horizon = h1.horizon.min(h2.horizon);
    l1_distance_on(h1, h2, dict, s, 0.0, horizon, cells)
}

/// [`l1_distance_with`] restricted to the time window `[a, b] ⊆ [0, T]`.
pub fn l1_distance_on(
    h1: &HamiltonianSpec,
    h2: &HamiltonianSpec,
    dict: &PathDictionary,
    s: &[f64],
    a: f64,
    b: f64,
    cells: usize,
) -> Result<f64> {
    let horizon = h1.horizon.min(h2.horizon);
    if !(0.0 <= a && a <= b && b <= horizon) {
        return Err(domain(format!("window [{a}, {b}] outside [0, {horizon}]")));
    }
    let mut breaks = h1.breakpoints();
    breaks.extend(h2.breakpoints());
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let per_path = crate::par::map_indexed(dict.members().len(), |i| {
        let y = &dict.members()[i];
        piecewise_midpoint(a, b, &breaks, cells, horizon, |t| (h1.eval(t, y, s) - h2.eval(t, y, s)).abs())
    });
    Ok(per_path.into_iter().fold(0.0, f64::max))
}

/// Exact check of `H(t, x, s) = H(t, x(·∧t), s)` on every sample.
pub fn check_nonanticipation(h: &HamiltonianSpec, sample: &[(f64, Path, Vec<f64>)]) -> Verdict {
    let mut worst = Worst::new();
    for (t, x, s) in sample {
        let full = h.eval(*t, x, s);
        let stopped = h.eval(*t, &x.stopped_at(*t), s);
        let diff = (full - stopped).abs();
        let margin = if diff == 0.0 { 0.0 } else { -diff.max(f64::MIN_POSITIVE) };
        worst.offer(margin, || Witness {
            s: s.clone(),
            tau: *t,
            path: x.clone(),
        });
    }
    worst.finish(0.0)
}

/// Sampled check of the growth condition
/// `|H(t,x,s1) − H(t,x,s2)| ≤ c_H(t)(1 + ‖x(·∧t)‖∞)‖s1 − s2‖`.
pub fn check_growth(h: &HamiltonianSpec, sample: &[(f64, Path, Vec<f64>, Vec<f64>)]) -> Verdict {
    let mut worst = Worst::new();
    for (t, x, s1, s2) in sample {
        let lhs = (h.eval(*t, x, s1) - h.eval(*t, x, s2)).abs();
        let ds: Vec<f64> = s1.iter().zip(s2).map(|(a, b)| a - b).collect();
        let rhs = h.growth_at(*t) * (1.0 + x.sup_norm_unchecked(*t)) * crate::path::norm(&ds);
        worst.offer(rhs - lhs, || Witness {
            s: s1.clone(),
            tau: *t,
            path: x.clone(),
        });
    }
    worst.finish(1e-12)
}
