//! Approximation constructions for measurable-in-time data: interpolation across
//! the gaps of a good time set, and McShane–Whitney extension from a finite path
//! dictionary.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::DynamicsFn;
use crate::error::{config, Result};
use crate::game::{CostFn, GameSpec};
use crate::hamiltonian::ScalarTimeFn;
use crate::path::{Grid, Path};

/// Finite union of disjoint closed intervals of `[0, T]` containing `0` and `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodTimeSet {
    horizon: f64,
    intervals: Vec<(f64, f64)>,
}

impl GoodTimeSet {
    /// The whole interval `[0, T]`.
    pub fn full(horizon: f64) -> Self {
        Self {
            horizon,
            intervals: vec![(0.0, horizon)],
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    /// Open gaps between consecutive intervals.
    pub fn gaps(&self) -> Vec<(f64, f64)> {
        self.intervals.windows(2).map(|w| (w[0].1, w[1].0)).collect()
    }

    /// Lebesgue measure of `[0, T] \ F`.
    pub fn deficit(&self) -> f64 {
        self.gaps().iter().map(|(a, b)| b - a).sum()
    }

    pub fn contains(&self, t: f64) -> bool {
        self.intervals.iter().any(|(a, b)| t >= *a && t <= *b)
    }

    /// The gap containing `t`, if any.
    pub fn gap_of(&self, t: f64) -> Option<(f64, f64)> {
        self.gaps().into_iter().find(|(a, b)| t > *a && t < *b)
    }
}

/// Complement in `[0, T]` of the open `radius`-balls around `times`, together with
/// the endpoints `0` and `T`. Overlapping balls merge into one gap.
pub fn good_set_from_discontinuities(times: &[f64], radius: f64, horizon: f64) -> Result<GoodTimeSet> {
    if !(radius > 0.0) {
        return Err(config("gap radius must be positive"));
    }
    if let Some(t) = times.iter().find(|t| !(**t > 0.0 && **t < horizon)) {
        return Err(config(format!("discontinuity time {t} outside (0, {horizon})")));
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut gaps: Vec<(f64, f64)> = Vec::new();
    for t in sorted {
        let (a, b) = ((t - radius).max(0.0), (t + radius).min(horizon));
        match gaps.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => gaps.push((a, b)),
        }
    }
    let mut intervals = Vec::with_capacity(gaps.len() + 1);
    let mut left = 0.0;
    for (a, b) in gaps {
        intervals.push((left, a));
        left = b;
    }
    intervals.push((left, horizon));
    Ok(GoodTimeSet { horizon, intervals })
}

fn blend_weight(set: &GoodTimeSet, tau: f64) -> Option<(f64, f64, f64)> {
    set.gap_of(tau).map(|(a, b)| (a, b, (tau - a) / (b - a)))
}

/// Dynamics equal to `f` on the good set and linearly blended across each gap:
/// `((b−τ) f(a, y) + (τ−a) f(b, y(·∧τ))) / (b−a)`.
pub fn time_regularize(f: &DynamicsFn, set: &GoodTimeSet) -> DynamicsFn {
    let f = f.clone();
    let set = set.clone();
    Arc::new(move |tau, y, u, v| match blend_weight(&set, tau) {
        None => f(tau, y, u, v),
        Some((a, b, w)) => {
            let left = f(a, y, u, v);
            let right = f(b, y, u, v);
            left.iter().zip(&right).map(|(l, r)| (1.0 - w) * l + w * r).collect()
        }
    })
}

/// Running cost blended across the gaps like [`time_regularize`].
pub fn time_regularize_cost(chi: &CostFn, set: &GoodTimeSet) -> CostFn {
    let chi = chi.clone();
    let set = set.clone();
    Arc::new(move |tau, y, u, v| match blend_weight(&set, tau) {
        None => chi(tau, y, u, v),
        Some((a, b, w)) => (1.0 - w) * chi(a, y, u, v) + w * chi(b, y, u, v),
    })
}

/// The game with time-regularized dynamics and cost. The growth density becomes
/// the larger of the endpoint values on each gap, and the declared
/// discontinuities inside gaps are dropped.
pub fn time_regularize_game(game: &GameSpec, set: &GoodTimeSet) -> GameSpec {
    let c_f = game.c_f.clone();
    let s = set.clone();
    let growth: ScalarTimeFn = Arc::new(move |tau| match s.gap_of(tau) {
        None => c_f(tau),
        Some((a, b)) => c_f(a).max(c_f(b)).max(c_f(tau)),
    });
    GameSpec {
        f: time_regularize(&game.f, set),
        chi: time_regularize_cost(&game.chi, set),
        c_f: growth,
        time_discontinuities: game
            .time_discontinuities
            .iter()
            .copied()
            .filter(|t| set.contains(*t))
            .collect(),
        label: format!("{} (time-regularized)", game.label),
        ..game.clone()
    }
}

/// Finite stand-in for a compact set of paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathDictionary {
    members: Vec<Path>,
}

impl PathDictionary {
    pub fn new(members: Vec<Path>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(config("path dictionary must be non-empty"));
        };
        let (grid, dim) = (*first.grid(), first.dim());
        if members.iter().any(|m| *m.grid() != grid || m.dim() != dim) {
            return Err(config("dictionary members must share grid and dimension"));
        }
        Ok(Self { members })
    }

    pub fn single(path: Path) -> Self {
        Self { members: vec![path] }
    }

    pub fn members(&self) -> &[Path] {
        &self.members
    }

    pub fn grid(&self) -> &Grid {
        self.members[0].grid()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Largest ratio `|f(z₁) − f(z₂)| / ‖z₁(·∧τ) − z₂(·∧τ)‖∞` over dictionary pairs.
pub fn estimate_lipschitz(f: &dyn Fn(&Path) -> f64, dict: &PathDictionary, tau: f64) -> Result<f64> {
    let values: Vec<f64> = dict.members.iter().map(f).collect();
    let mut best: f64 = 0.0;
    for i in 0..dict.len() {
        for j in i + 1..dict.len() {
            let d = dict.members[i].stopped_distance(&dict.members[j], tau)?;
            if d > 0.0 {
                best = best.max((values[i] - values[j]).abs() / d);
            }
        }
    }
    Ok(best)
}

/// Relative slack on the dictionary consistency check.
const CONSISTENCY_SLACK: f64 = 1e-12;

/// `y ↦ max_z f(z) − λ‖z(·∧τ) − y(·∧τ)‖∞` over a Lipschitz-consistent dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct McShaneExtension {
    dict: PathDictionary,
    values: Vec<f64>,
    lambda: f64,
    tau: f64,
}

impl McShaneExtension {
    /// Evaluate `f` on the members and check `|f(z₁) − f(z₂)| ≤ λ‖z₁ − z₂‖` at `τ`.
    pub fn new(f: &dyn Fn(&Path) -> f64, dict: &PathDictionary, lambda: f64, tau: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(config("Lipschitz constant must be non-negative"));
        }
        let values: Vec<f64> = dict.members.iter().map(f).collect();
        for i in 0..dict.len() {
            for j in i + 1..dict.len() {
                let d = dict.members[i].stopped_distance(&dict.members[j], tau)?;
                let gap = (values[i] - values[j]).abs();
                if gap > lambda * d * (1.0 + CONSISTENCY_SLACK) + CONSISTENCY_SLACK {
                    return Err(config(format!(
                        "dictionary members {i} and {j} violate the Lipschitz bound: |Δf| = {gap} > {lambda} · {d}"
                    )));
                }
            }
        }
        Ok(Self {
            dict: dict.clone(),
            values,
            lambda,
            tau,
        })
    }

    pub fn eval(&self, y: &Path) -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        for (z, v) in self.dict.members.iter().zip(&self.values) {
            best = best.max(v - self.lambda * z.stopped_distance(y, self.tau)?);
        }
        Ok(best)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// One-shot McShane–Whitney extension of `f` from the dictionary to `y`.
pub fn mcshane_extend(
    f: &dyn Fn(&Path) -> f64,
    dict: &PathDictionary,
    lambda: f64,
    tau: f64,
    y: &Path,
) -> Result<f64> {
    McShaneExtension::new(f, dict, lambda, tau)?.eval(y)
}

/// `λ* = (1 + √n) λ_{f,χ}`.
pub fn lambda_star(n: usize, lambda_fchi: f64) -> f64 {
    (1.0 + (n as f64).sqrt()) * lambda_fchi
}

/// `c* = (c_f + λ*)(1 + ‖x‖∞)`.
pub fn c_star(c_f: f64, lambda_star: f64, x_sup: f64) -> f64 {
    (c_f + lambda_star) * (1.0 + x_sup)
}

/// Componentwise McShane–Whitney extension of the dynamics from the dictionary:
/// `f̄_i(τ, y, u, v) = max_z f_i(τ, z, u, v) − λ(τ)‖z(·∧τ) − y(·∧τ)‖∞`.
///
/// Consistency of the dictionary is the caller's responsibility (see
/// [`McShaneExtension::new`]); paths off the dictionary grid are resampled.
pub fn extend_dynamics(f: &DynamicsFn, dict: &PathDictionary, lambda: ScalarTimeFn) -> DynamicsFn {
    let f = f.clone();
    let dict = dict.clone();
    Arc::new(move |tau, y, u, v| {
        let grid = *dict.grid();
        let y = if *y.grid() == grid {
            y.clone()
        } else {
            match y.resample(grid) {
                Ok(p) => p.stopped_at(tau),
                Err(_) => return vec![f64::NAN; y.dim()],
            }
        };
        let lam = lambda(tau);
        let mut out = vec![f64::NEG_INFINITY; y.dim()];
        for z in dict.members() {
            let zs = z.stopped_at(tau);
            let fz = f(tau, &zs, u, v);
            let d = zs.stopped_distance(&y, tau).unwrap_or(f64::INFINITY);
            for (o, fi) in out.iter_mut().zip(&fz) {
                *o = o.max(fi - lam * d);
            }
        }
        out
    })
}
