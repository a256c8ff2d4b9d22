//! Piecewise-linear paths on a uniform grid over `[-h, T]` and piecewise-constant
//! time densities on `[0, T]`.
//!
//! A [`Path`] stores one vector per grid node and is evaluated by linear
//! interpolation. Stopping a path at time `t` freezes it at its value `x(t)` on
//! `(t, T]`. Stops at grid nodes are represented by rewriting the tail nodes; stops
//! between nodes additionally remember the stop time so that interpolation inside
//! the stopped cell stays exact.

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};

/// Relative tolerance used to decide whether a time sits on a grid node.
const NODE_TOL: f64 = 1e-9;

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Euclidean inner product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Uniform grid `-h = τ_0 < … < τ_M = T` whose step divides both `h` and `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    h: f64,
    horizon: f64,
    dt: f64,
    lag_cells: usize,
    cells: usize,
}

fn whole_multiple(len: f64, dt: f64, what: &str) -> Result<usize> {
    let ratio = len / dt;
    let rounded = ratio.round();
    if (ratio - rounded).abs() > NODE_TOL * rounded.max(1.0) {
        return Err(config(format!(
            "step {dt} does not divide {what} = {len}"
        )));
    }
    Ok(rounded as usize)
}

impl Grid {
    pub fn new(h: f64, horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(config(format!("horizon must be positive, got {horizon}")));
        }
        if !(h >= 0.0) || !h.is_finite() {
            return Err(config(format!("delay must be non-negative, got {h}")));
        }
        if !(dt > 0.0) || dt > horizon {
            return Err(config(format!("step must lie in (0, T], got {dt}")));
        }
        let lag_cells = whole_multiple(h, dt, "h")?;
        let cells = whole_multiple(horizon, dt, "T")?;
        Ok(Self {
            h,
            horizon,
            dt,
            lag_cells,
            cells,
        })
    }

    /// Same delay and horizon with the step divided by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(config("refinement factor must be positive"));
        }
        Self::new(self.h, self.horizon, self.dt / factor as f64)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of cells in `[0, T]`.
    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Number of cells in `[-h, 0]`.
    pub fn lag_cells(&self) -> usize {
        self.lag_cells
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.lag_cells + self.cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the node `τ = 0`.
    pub fn zero_index(&self) -> usize {
        self.lag_cells
    }

    pub fn last_index(&self) -> usize {
        self.lag_cells + self.cells
    }

    /// Time of node `i`.
    pub fn time(&self, i: usize) -> f64 {
        if i == 0 {
            -self.h
        } else if i >= self.last_index() {
            self.horizon
        } else {
            (i as f64 - self.lag_cells as f64) * self.dt
        }
    }

    pub fn node_times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    pub fn contains(&self, t: f64) -> bool {
        let slack = NODE_TOL * (1.0 + self.horizon + self.h);
        t >= -self.h - slack && t <= self.horizon + slack
    }

    /// Position of `t` in units of cells from `-h`, with near-node snapping.
    fn position(&self, t: f64) -> (usize, f64) {
        let p = (t + self.h) / self.dt;
        let r = p.round();
        if (p - r).abs() <= NODE_TOL * r.max(1.0) {
            let i = (r.max(0.0) as usize).min(self.last_index());
            (i, 0.0)
        } else {
            let i = (p.floor().max(0.0) as usize).min(self.last_index());
            (i, p - i as f64)
        }
    }

    /// Index of the node at `t`, failing if `t` is not a node.
    pub fn node_index(&self, t: f64) -> Result<usize> {
        if !self.contains(t) {
            return Err(domain(format!(
                "time {t} outside [{}, {}]",
                -self.h, self.horizon
            )));
        }
        let (i, frac) = self.position(t);
        if frac == 0.0 {
            Ok(i)
        } else {
            Err(domain(format!("time {t} is not a grid node (dt = {})", self.dt)))
        }
    }

    /// Node index of `t` if it is a node.
    pub fn try_node_index(&self, t: f64) -> Option<usize> {
        self.node_index(t).ok()
    }

    /// Largest node index with time `<= t`.
    pub fn floor_index(&self, t: f64) -> usize {
        self.position(t).0
    }

    /// Smallest node index with time `>= t`.
    pub fn ceil_index(&self, t: f64) -> usize {
        let (i, frac) = self.position(t);
        if frac == 0.0 {
            i
        } else {
            (i + 1).min(self.last_index())
        }
    }

    /// Index `j` of the cell `[j dt, (j+1) dt)` of `[0, T]` containing `t`; `T` maps
    /// to the last cell.
    pub fn cell_of(&self, t: f64) -> usize {
        let i = self.floor_index(t.max(0.0));
        i.saturating_sub(self.lag_cells).min(self.cells - 1)
    }

    /// Snap an arbitrary time to the nearest node.
    pub fn snap(&self, t: f64) -> usize {
        let p = ((t + self.h) / self.dt).round();
        (p.max(0.0) as usize).min(self.last_index())
    }
}

/// Element of `C([-h, T], R^n)` stored by node values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    grid: Grid,
    dim: usize,
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stop: Option<f64>,
}

impl Path {
    pub fn new(grid: Grid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(config("path dimension must be positive"));
        }
        if values.len() != grid.len() * dim {
            return Err(config(format!(
                "expected {} values ({} nodes x {dim}), got {}",
                grid.len() * dim,
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(config("path values must be finite"));
        }
        Ok(Self {
            grid,
            dim,
            values,
            stop: None,
        })
    }

    pub fn from_fn(grid: Grid, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len() * dim);
        for i in 0..grid.len() {
            let v = f(grid.time(i));
            if v.len() != dim {
                return Err(config(format!(
                    "path function returned {} components, expected {dim}",
                    v.len()
                )));
            }
            values.extend(v);
        }
        Self::new(grid, dim, values)
    }

    pub fn constant(grid: Grid, value: &[f64]) -> Self {
        let values = value
            .iter()
            .copied()
            .cycle()
            .take(grid.len() * value.len())
            .collect();
        Self {
            grid,
            dim: value.len(),
            values,
            stop: None,
        }
    }

    pub fn zeros(grid: Grid, dim: usize) -> Self {
        Self::constant(grid, &vec![0.0; dim])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Stop time between nodes, if any.
    pub fn stop_time(&self) -> Option<f64> {
        self.stop
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn node_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Overwrite node `i` and every later node with `value` (stopped semantics).
    pub(crate) fn set_tail(&mut self, i: usize, value: &[f64]) {
        for node in self.values[i * self.dim..].chunks_mut(self.dim) {
            node.copy_from_slice(value);
        }
    }

    /// Value at time `tau` by linear interpolation.
    pub fn eval(&self, tau: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(tau, &mut out);
        out
    }

    pub fn eval_into(&self, tau: f64, out: &mut [f64]) {
        let tau = match self.stop {
            Some(s) => tau.min(s),
            None => tau,
        };
        let tau = tau.clamp(-self.grid.h, self.grid.horizon);
        let (i, mut frac) = self.grid.position(tau);
        if let Some(s) = self.stop {
            // the stopped cell runs from node i to the stop time, where node i + 1 holds x(s)
            let left = self.grid.time(i);
            if frac != 0.0 && s > left && s < self.grid.time(i + 1) {
                frac = ((tau - left) / (s - left)).min(1.0);
            }
        }
        if frac == 0.0 || i == self.grid.last_index() {
            out.copy_from_slice(self.node(i));
        } else {
            let (a, b) = (self.node(i), self.node(i + 1));
            for k in 0..self.dim {
                out[k] = a[k] + frac * (b[k] - a[k]);
            }
        }
    }

    /// `x(·∧t)` for a grid node `t ∈ [0, T]`.
    pub fn stopped(&self, t: f64) -> Result<Path> {
        if !(t >= -NODE_TOL) || t > self.grid.horizon * (1.0 + NODE_TOL) {
            return Err(domain(format!(
                "stop time {t} outside [0, {}]",
                self.grid.horizon
            )));
        }
        let i = self.grid.node_index(t)?;
        Ok(self.stopped_at_index(i))
    }

    pub fn stopped_at_index(&self, i: usize) -> Path {
        let mut out = self.clone();
        if let Some(s) = self.stop {
            if s <= self.grid.time(i) {
                return out;
            }
        }
        let v = self.node(i).to_vec();
        out.set_tail(i, &v);
        out.stop = None;
        out
    }

    /// `x(·∧t)` for any `t ∈ [-h, T]`, including times between nodes.
    pub fn stopped_at(&self, t: f64) -> Path {
        if let Some(i) = self.grid.try_node_index(t) {
            return self.stopped_at_index(i);
        }
        if let Some(s) = self.stop {
            if s <= t {
                return self.clone();
            }
        }
        let v = self.eval(t);
        let mut out = self.clone();
        out.set_tail(self.grid.ceil_index(t), &v);
        out.stop = Some(t);
        out
    }

    /// `max_{τ ≤ upto} ‖x(τ)‖`, exact for piecewise-linear paths.
    pub fn sup_norm(&self, upto: f64) -> Result<f64> {
        if !self.grid.contains(upto) {
            return Err(domain(format!("sup-norm bound {upto} outside the grid")));
        }
        Ok(self.sup_norm_unchecked(upto))
    }

    pub(crate) fn sup_norm_unchecked(&self, upto: f64) -> f64 {
        let u = match self.stop {
            Some(s) => upto.min(s),
            None => upto,
        };
        let (i, frac) = self.grid.position(u);
        let mut m = (0..=i).map(|j| norm(self.node(j))).fold(0.0, f64::max);
        if frac != 0.0 {
            m = m.max(norm(&self.eval(u)));
        }
        m
    }

    /// Max of node norms over nodes `0..=i`.
    pub fn sup_norm_to_index(&self, i: usize) -> f64 {
        (0..=i).map(|j| norm(self.node(j))).fold(0.0, f64::max)
    }

    /// `‖x(·∧τ) − y(·∧τ)‖∞`.
    pub fn stopped_distance(&self, other: &Path, tau: f64) -> Result<f64> {
        if self.grid != other.grid || self.dim != other.dim {
            return Err(config("paths live on different grids"));
        }
        let (i, frac) = self.grid.position(tau);
        let sa = self.stop.unwrap_or(f64::INFINITY);
        let sb = other.stop.unwrap_or(f64::INFINITY);
        let mut m: f64 = 0.0;
        let mut a = vec![0.0; self.dim];
        let mut b = vec![0.0; self.dim];
        for j in 0..=i {
            let tj = self.grid.time(j);
            if tj > sa.min(sb) {
                self.eval_into(tj, &mut a);
                other.eval_into(tj, &mut b);
            } else {
                a.copy_from_slice(self.node(j));
                b.copy_from_slice(other.node(j));
            }
            m = m.max(dist(&a, &b));
        }
        // stops strictly inside the window contribute a breakpoint
        for s in [sa, sb] {
            if s.is_finite() && s < tau {
                self.eval_into(s, &mut a);
                other.eval_into(s, &mut b);
                m = m.max(dist(&a, &b));
            }
        }
        if frac != 0.0 {
            self.eval_into(tau, &mut a);
            other.eval_into(tau, &mut b);
            m = m.max(dist(&a, &b));
        }
        Ok(m)
    }

    /// Node-wise difference `self − other` of two unstopped paths (or paths
    /// stopped at the same time).
    pub fn difference(&self, other: &Path) -> Result<Path> {
        if self.grid != other.grid || self.dim != other.dim {
            return Err(config("paths live on different grids"));
        }
        if self.stop != other.stop {
            return Err(domain("difference of paths with different off-node stops"));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Path {
            grid: self.grid,
            dim: self.dim,
            values,
            stop: self.stop,
        })
    }

    /// Sample this path at the nodes of another grid with the same `h` and `T`.
    pub fn resample(&self, grid: Grid) -> Result<Path> {
        if grid.h != self.grid.h || grid.horizon != self.grid.horizon {
            return Err(config("resampling requires the same delay and horizon"));
        }
        let mut values = Vec::with_capacity(grid.len() * self.dim);
        for i in 0..grid.len() {
            values.extend(self.eval(grid.time(i)));
        }
        Path::new(grid, self.dim, values)
    }

    /// Same function represented on a grid refined by `factor`.
    pub fn refine(&self, factor: usize) -> Result<Path> {
        let mut out = self.resample(self.grid.refined(factor)?)?;
        out.stop = self.stop;
        Ok(out)
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Non-negative piecewise-constant function on the cells of `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeDensity {
    grid: Grid,
    cell_values: Vec<f64>,
}

impl TimeDensity {
    pub fn new(grid: Grid, cell_values: Vec<f64>) -> Result<Self> {
        if cell_values.len() != grid.cells() {
            return Err(config(format!(
                "density needs {} cell values, got {}",
                grid.cells(),
                cell_values.len()
            )));
        }
        if let Some(v) = cell_values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(config(format!("density values must be finite and >= 0, got {v}")));
        }
        Ok(Self { grid, cell_values })
    }

    pub fn constant(grid: Grid, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.cells()])
    }

    pub fn zero(grid: Grid) -> Self {
        Self {
            grid,
            cell_values: vec![0.0; grid.cells()],
        }
    }

    /// Cell values taken from `f` at cell midpoints.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let dt = grid.dt();
        let values = (0..grid.cells())
            .map(|j| f((j as f64 + 0.5) * dt))
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn cell_values(&self) -> &[f64] {
        &self.cell_values
    }

    pub fn cell(&self, j: usize) -> f64 {
        self.cell_values[j]
    }

    /// Value on the cell containing `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        self.cell_values[self.grid.cell_of(t)]
    }

    pub fn max(&self) -> f64 {
        self.cell_values.iter().copied().fold(0.0, f64::max)
    }

    pub fn l1_norm(&self) -> f64 {
        let dt = self.grid.dt();
        self.cell_values.iter().map(|v| v * dt).sum()
    }

    /// `∫_a^b c(τ) dτ` including partial cells.
    pub fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        let horizon = self.grid.horizon();
        let slack = NODE_TOL * (1.0 + horizon);
        if a > b {
            return Err(domain(format!("integration bounds reversed: {a} > {b}")));
        }
        if a < -slack || b > horizon + slack {
            return Err(domain(format!("integration bounds [{a}, {b}] outside [0, {horizon}]")));
        }
        let (a, b) = (a.max(0.0), b.min(horizon));
        let dt = self.grid.dt();
        let first = self.grid.cell_of(a);
        let mut total = 0.0;
        for j in first..self.grid.cells() {
            let lo = (j as f64 * dt).max(a);
            let hi = if j + 1 == self.grid.cells() {
                horizon
            } else {
                (j + 1) as f64 * dt
            }
            .min(b);
            if hi <= lo {
                if lo >= b {
                    break;
                }
                continue;
            }
            total += self.cell_values[j] * (hi - lo);
        }
        Ok(total)
    }

    pub fn add(&self, other: &TimeDensity) -> Result<TimeDensity> {
        if self.grid != other.grid {
            return Err(config("densities live on different grids"));
        }
        let values = self
            .cell_values
            .iter()
            .zip(&other.cell_values)
            .map(|(a, b)| a + b)
            .collect();
        TimeDensity::new(self.grid, values)
    }

    pub fn scale(&self, factor: f64) -> Result<TimeDensity> {
        TimeDensity::new(
            self.grid,
            self.cell_values.iter().map(|v| v * factor).collect(),
        )
    }

    /// Same density on another grid over the same horizon, sampled at cell
    /// midpoints.
    pub fn resample(&self, grid: Grid) -> Result<TimeDensity> {
        TimeDensity::from_fn(grid, |t| self.value_at(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid() -> Grid {
        Grid::new(1.0, 1.0, 0.25).unwrap()
    }

    #[test]
    fn grid_rejects_non_dividing_step() {
        assert!(Grid::new(0.3, 1.0, 0.25).is_err());
        assert!(Grid::new(0.5, 1.0, 0.3).is_err());
        let g = Grid::new(0.5, 1.0, 0.25).unwrap();
        assert_eq!(g.len(), 7);
        assert_eq!(g.time(2), 0.0);
        assert_eq!(g.time(4), 0.5);
        assert_eq!(g.time(6), 1.0);
        assert_eq!(g.node_index(0.5).unwrap(), 4);
        assert!(g.node_index(0.3).is_err());
    }

    #[test]
    fn stop_at_horizon_is_identity() {
        let g = unit_grid();
        let x = Path::from_fn(g, 1, |t| vec![t]).unwrap();
        assert_eq!(x.stopped(1.0).unwrap(), x);
    }

    #[test]
    fn stop_at_zero() {
        let g = unit_grid();
        let x = Path::from_fn(g, 1, |t| vec![t]).unwrap();
        let y = x.stopped(0.0).unwrap();
        for i in 0..g.len() {
            let t = g.time(i);
            assert_eq!(y.node(i)[0], t.min(0.0));
        }
    }

    #[test]
    fn constant_path_is_fixed_by_stopping() {
        let g = unit_grid();
        let x = Path::constant(g, &[2.5, -1.0]);
        for t in [0.0, 0.25, 0.5, 1.0] {
            assert_eq!(x.stopped(t).unwrap(), x);
        }
    }

    #[test]
    fn stop_rejects_out_of_range() {
        let g = unit_grid();
        let x = Path::zeros(g, 1);
        assert!(matches!(x.stopped(-0.5), Err(crate::Error::Domain(_))));
        assert!(x.stopped(1.5).is_err());
        assert!(x.stopped(0.3).is_err());
    }

    #[test]
    fn sup_norm_examples() {
        let g = unit_grid();
        let x = Path::from_fn(g, 1, |t| vec![t]).unwrap();
        assert_eq!(x.sup_norm(1.0).unwrap(), 1.0);
        let c = Path::constant(g, &[3.0, 4.0]);
        assert_eq!(c.sup_norm(0.5).unwrap(), 5.0);
        let g1 = Grid::new(1.0, 1.0, 1.0).unwrap();
        let p = Path::new(g1, 1, vec![0.0, 2.0, 1.0]).unwrap();
        assert_eq!(p.sup_norm(1.0).unwrap(), 2.0);
    }

    #[test]
    fn sup_norm_off_node_includes_interpolated_endpoint() {
        let g1 = Grid::new(1.0, 1.0, 1.0).unwrap();
        let p = Path::new(g1, 1, vec![0.0, 0.0, 4.0]).unwrap();
        assert_eq!(p.sup_norm(0.5).unwrap(), 2.0);
    }

    #[test]
    fn off_node_stop_keeps_interpolation_exact() {
        let g1 = Grid::new(1.0, 1.0, 1.0).unwrap();
        let p = Path::new(g1, 1, vec![0.0, 0.0, 4.0]).unwrap();
        let s = p.stopped_at(0.5);
        assert_eq!(s.eval(0.25)[0], 1.0);
        assert_eq!(s.eval(0.75)[0], 2.0);
        assert_eq!(s.eval(1.0)[0], 2.0);
        assert_eq!(s.sup_norm(1.0).unwrap(), 2.0);
    }

    #[test]
    fn density_integrals() {
        let g = Grid::new(0.0, 1.0, 0.5).unwrap();
        let c = TimeDensity::constant(g, 2.0).unwrap();
        assert_eq!(c.l1_norm(), 2.0);
        assert_eq!(TimeDensity::zero(g).l1_norm(), 0.0);
        let step = TimeDensity::new(g, vec![1.0, 3.0]).unwrap();
        assert_eq!(step.integrate(0.25, 0.75).unwrap(), 1.0);
        assert!(step.integrate(0.75, 0.25).is_err());
    }

    #[test]
    fn density_rejects_negative() {
        let g = Grid::new(0.0, 1.0, 0.5).unwrap();
        assert!(TimeDensity::new(g, vec![1.0, -1.0]).is_err());
    }
}
