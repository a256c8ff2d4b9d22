//! Path functionals, numerical co-invariant derivatives, the functional chain
//! rule, Hamilton–Jacobi residuals and characteristic flows.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::hamiltonian::HamiltonianSpec;
use crate::path::{dot, norm, Path};

type FunctionalFn = Arc<dyn Fn(f64, &Path) -> f64 + Send + Sync>;

/// A non-anticipative functional `φ(t, x(·))`.
#[derive(Clone)]
pub struct PathFunctional {
    eval: FunctionalFn,
    label: String,
}

impl fmt::Debug for PathFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PathFunctional({})", self.label)
    }
}

impl PathFunctional {
    pub fn new(label: impl Into<String>, eval: impl Fn(f64, &Path) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(eval),
            label: label.into(),
        }
    }

    pub fn eval(&self, t: f64, x: &Path) -> f64 {
        (self.eval)(t, x)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `φ + λ·𝟙[t < T]`: the functional shifted at interior times only.
    pub fn shifted_interior(&self, lambda: f64, horizon: f64) -> PathFunctional {
        let base = self.clone();
        PathFunctional::new(format!("{} {:+} inside", self.label, lambda), move |t, x| {
            base.eval(t, x) + if t < horizon { lambda } else { 0.0 }
        })
    }

    /// `φ + c` everywhere.
    pub fn shifted(&self, c: f64) -> PathFunctional {
        let base = self.clone();
        PathFunctional::new(format!("{} {:+}", self.label, c), move |t, x| base.eval(t, x) + c)
    }
}

/// Estimated (or analytic) co-invariant derivatives at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiGradient {
    pub dt_phi: f64,
    pub grad_phi: Vec<f64>,
    pub probe_step: f64,
    /// Discrepancy between the probe and the halved probe (0 for analytic values).
    pub residual_estimate: f64,
}

impl CiGradient {
    pub fn exact(dt_phi: f64, grad_phi: Vec<f64>) -> Self {
        Self {
            dt_phi,
            grad_phi,
            probe_step: 0.0,
            residual_estimate: 0.0,
        }
    }
}

pub type GradientFn = Arc<dyn Fn(f64, &Path) -> CiGradient + Send + Sync>;

/// Where ci-derivatives come from at a call site.
#[derive(Clone)]
pub enum GradientSource {
    Analytic(GradientFn),
    Numeric { probe_step: f64 },
}

impl fmt::Debug for GradientSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GradientSource::Analytic(_) => write!(f, "Analytic"),
            GradientSource::Numeric { probe_step } => write!(f, "Numeric({probe_step})"),
        }
    }
}

impl GradientSource {
    pub fn analytic(f: impl Fn(f64, &Path) -> CiGradient + Send + Sync + 'static) -> Self {
        GradientSource::Analytic(Arc::new(f))
    }

    pub fn gradient(&self, phi: &PathFunctional, t: f64, x: &Path) -> Result<CiGradient> {
        match self {
            GradientSource::Analytic(g) => Ok(g(t, x)),
            GradientSource::Numeric { probe_step } => {
                let room = x.grid().horizon() - t;
                ci_derivative(phi, t, x, probe_step.min(room))
            }
        }
    }
}

/// Extension of `x(·∧t)` moving with unit speed along `direction` (or staying put
/// for `None`), stopped at `t + delta`.
fn probe_path(x: &Path, start: usize, delta: f64, direction: Option<usize>) -> Path {
    let grid = *x.grid();
    let t = grid.time(start);
    let mut y = x.stopped_at_index(start);
    if let Some(axis) = direction {
        let base = x.node(start).to_vec();
        for j in start + 1..grid.len() {
            let node = y.node_mut(j);
            node.copy_from_slice(&base);
            node[axis] += grid.time(j) - t;
        }
    }
    y.stopped_at(t + delta)
}

fn forward_differences(phi: &PathFunctional, start: usize, x: &Path, delta: f64) -> (f64, Vec<f64>) {
    let grid = x.grid();
    let t = grid.time(start);
    // divide by the increment actually representable at t
    let delta = (t + delta) - t;
    let at_t = phi.eval(t, &x.stopped_at_index(start));
    let still = phi.eval(t + delta, &probe_path(x, start, delta, None));
    let grad = (0..x.dim())
        .map(|i| (phi.eval(t + delta, &probe_path(x, start, delta, Some(i))) - still) / delta)
        .collect();
    ((still - at_t) / delta, grad)
}

/// Forward-difference ci-derivatives at a grid node `t < T`: `∂_tφ` along the
/// constant extension, `∇φ` along unit ramps; the residual estimate is the
/// discrepancy against the halved probe.
pub fn ci_derivative(phi: &PathFunctional, t: f64, x: &Path, probe_step: f64) -> Result<CiGradient> {
    let grid = x.grid();
    let start = grid.node_index(t)?;
    if start < grid.zero_index() || start >= grid.last_index() {
        return Err(domain(format!("ci-derivative needs t in [0, T), got {t}")));
    }
    if !(probe_step > 0.0) || t + probe_step > grid.horizon() * (1.0 + 1e-12) {
        return Err(domain(format!("probe step {probe_step} leaves [0, T] from t = {t}")));
    }
    let delta = probe_step.min(grid.horizon() - t);
    let (dt_phi, grad_phi) = forward_differences(phi, start, x, delta);
    let (dt_half, grad_half) = forward_differences(phi, start, x, 0.5 * delta);
    let residual_estimate = grad_phi
        .iter()
        .zip(&grad_half)
        .map(|(a, b)| (a - b).abs())
        .fold((dt_phi - dt_half).abs(), f64::max);
    Ok(CiGradient {
        dt_phi,
        grad_phi,
        probe_step: delta,
        residual_estimate,
    })
}

fn cell_velocity(y: &Path, j: usize) -> Vec<f64> {
    let dt = y.grid().dt();
    y.node(j + 1).iter().zip(y.node(j)).map(|(a, b)| (a - b) / dt).collect()
}

/// `|φ(τ,y) − φ(t,x) − Σ_cells dt (∂_tφ + ⟨∇φ, ẏ⟩)|` with the derivatives taken
/// at the left endpoint of each cell along `y`.
pub fn chain_rule_residual(
    phi: &PathFunctional,
    grads: &GradientSource,
    t: f64,
    x: &Path,
    y: &Path,
    tau: f64,
) -> Result<f64> {
    let grid = *y.grid();
    if x.grid() != &grid {
        return Err(config("history and extension live on different grids"));
    }
    let start = grid.node_index(t)?;
    let end = grid.node_index(tau)?;
    if start < grid.zero_index() || end < start || end > grid.last_index() {
        return Err(domain(format!("invalid chain-rule window [{t}, {tau}]")));
    }
    if (0..=start).any(|i| x.node(i) != y.node(i)) {
        return Err(config("extension does not agree with the history"));
    }
    let dt = grid.dt();
    let mut sum = 0.0;
    for j in start..end {
        let ys = y.stopped_at_index(j);
        let g = grads.gradient(phi, grid.time(j), &ys)?;
        sum += dt * (g.dt_phi + dot(&g.grad_phi, &cell_velocity(y, j)));
    }
    Ok((phi.eval(tau, y) - phi.eval(t, x) - sum).abs())
}

/// Signed residual `∂_tφ + H(t, x, ∇φ)` of the path-dependent HJ equation.
pub fn hj_residual(
    phi: &PathFunctional,
    grads: &GradientSource,
    h: &HamiltonianSpec,
    t: f64,
    x: &Path,
) -> Result<f64> {
    let g = grads.gradient(phi, t, x)?;
    Ok(g.dt_phi + h.eval(t, x, &g.grad_phi))
}

/// Output of [`characteristic_flow`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicFlow {
    pub path: Path,
    /// `φ(τ_j, y) − Σ_{i<j} dt (⟨s, ẏ_i⟩ − H(τ_i, y, s))` at each node from `t`.
    pub ledger: Vec<f64>,
    /// `max_j |ledger_j − ledger_0|`.
    pub drift: f64,
}

/// Integrate `ẏ = (H(∇φ) − H(s)) / ‖∇φ − s‖² · (∇φ − s)` from `(t, x)`. Below the
/// singular threshold `1e−8 (1 + ‖s‖)` the drift is 0.
pub fn characteristic_flow(
    phi: &PathFunctional,
    grads: &GradientSource,
    h: &HamiltonianSpec,
    t: f64,
    x: &Path,
    s: &[f64],
) -> Result<CharacteristicFlow> {
    let grid = *x.grid();
    let start = grid.node_index(t)?;
    if start < grid.zero_index() {
        return Err(domain(format!("flow start {t} is negative")));
    }
    if s.len() != x.dim() {
        return Err(config("direction s has the wrong dimension"));
    }
    let dt = grid.dt();
    let tol_sing = 1e-8 * (1.0 + norm(s));
    let mut y = x.stopped_at_index(start);
    let mut running = 0.0;
    let mut ledger = vec![phi.eval(t, &y)];
    let mut next = vec![0.0; x.dim()];
    for j in start..grid.last_index() {
        let tau = grid.time(j);
        let g = grads.gradient(phi, tau, &y)?;
        let diff: Vec<f64> = g.grad_phi.iter().zip(s).map(|(a, b)| a - b).collect();
        let gap = norm(&diff);
        let h_s = h.eval(tau, &y, s);
        let drift: Vec<f64> = if gap < tol_sing {
            vec![0.0; x.dim()]
        } else {
            let scale = (h.eval(tau, &y, &g.grad_phi) - h_s) / (gap * gap);
            diff.iter().map(|d| scale * d).collect()
        };
        let bound = h.growth_at(tau) * (1.0 + y.sup_norm_to_index(j));
        let speed = norm(&drift);
        if !speed.is_finite() || speed > 1.1 * bound + 1e-12 {
            return Err(Error::Integration {
                cell: j - grid.zero_index(),
                time: tau,
                message: format!("characteristic speed {speed} exceeds growth bound {bound}"),
            });
        }
        running += dt * (dot(s, &drift) - h_s);
        for (k, nk) in next.iter_mut().enumerate() {
            *nk = y.node(j)[k] + dt * drift[k];
        }
        y.set_tail(j + 1, &next);
        ledger.push(phi.eval(grid.time(j + 1), &y) - running);
    }
    let drift = ledger.iter().map(|l| (l - ledger[0]).abs()).fold(0.0, f64::max);
    Ok(CharacteristicFlow { path: y, ledger, drift })
}

/// Sampled non-anticipation check `φ(t, x) = φ(t, x(·∧t))`; returns the largest
/// discrepancy.
pub fn nonanticipation_gap(phi: &PathFunctional, sample: &[(f64, Path)]) -> f64 {
    sample
        .iter()
        .map(|(t, x)| (phi.eval(*t, x) - phi.eval(*t, &x.stopped_at(*t))).abs())
        .fold(0.0, f64::max)
}
