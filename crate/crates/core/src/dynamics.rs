//! Retarded functional differential equations and admissible extension bundles.
//!
//! Motions are built by the explicit recursion
//! `y(τ_{j+1}) = y(τ_j) + dt · f(τ_j, y(·∧τ_j), u_j, v_j)` with the derivative frozen
//! on each cell. Because the step divides the delay, every lagged read `y(τ_j − h)`
//! lands on a node.
//!
//! An [`ExtensionBundle`] is a finite sample of the set of absolutely continuous
//! extensions of `(t, x)` whose derivative obeys `‖ẏ‖ ≤ c(τ)(1 + ‖y(·∧τ)‖∞)`,
//! checked per cell against the sup-norm up to the cell's left endpoint.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::control::ControlSignal;
use crate::error::{config, domain, Error, Result};
use crate::path::{norm, Path, TimeDensity};

/// Right-hand side `f(τ, y(·∧τ), u, v)`. The path passed in is stopped at `τ`.
pub type DynamicsFn = Arc<dyn Fn(f64, &Path, &[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// Relative slack on the per-cell growth check.
const GROWTH_SLACK: f64 = 1e-12;

/// Integrate on `[t, T]` from the history `x` on `[-h, t]`.
pub fn integrate(
    f: &DynamicsFn,
    t: f64,
    x: &Path,
    u: &ControlSignal,
    v: &ControlSignal,
) -> Result<Path> {
    integrate_to(f, t, x.grid().horizon(), x, u, v)
}

/// Integrate on `[t, tau]`; the result is stopped at `tau`.
pub fn integrate_to(
    f: &DynamicsFn,
    t: f64,
    tau: f64,
    x: &Path,
    u: &ControlSignal,
    v: &ControlSignal,
) -> Result<Path> {
    let grid = *x.grid();
    let start = grid.node_index(t)?;
    let end = grid.node_index(tau)?;
    if start < grid.zero_index() || end < start {
        return Err(domain(format!("integration window [{t}, {tau}] is invalid")));
    }
    if u.start() > start || v.start() > start {
        return Err(config("control signals start after the integration window"));
    }
    let mut y = x.stopped_at_index(start);
    let dt = grid.dt();
    let mut next = vec![0.0; x.dim()];
    for j in start..end {
        let tau_j = grid.time(j);
        let d = f(tau_j, &y, u.at_node(j), v.at_node(j));
        check_derivative(&d, x.dim(), j - grid.zero_index(), tau_j)?;
        for (k, nk) in next.iter_mut().enumerate() {
            *nk = y.node(j)[k] + dt * d[k];
        }
        y.set_tail(j + 1, &next);
    }
    Ok(y)
}

pub(crate) fn check_derivative(d: &[f64], dim: usize, cell: usize, time: f64) -> Result<()> {
    if d.len() != dim {
        return Err(Error::Integration {
            cell,
            time,
            message: format!("dynamics returned {} components, expected {dim}", d.len()),
        });
    }
    if let Some(bad) = d.iter().find(|v| !v.is_finite()) {
        return Err(Error::Integration {
            cell,
            time,
            message: format!("non-finite derivative {bad}"),
        });
    }
    Ok(())
}

/// A-priori bound `(1 + ‖x(·∧t)‖∞) exp(∫_t^T c) − 1` on the sup-norm of every
/// member of `Y(t, x; c)`.
pub fn gronwall_bound(x: &Path, t: f64, c: &TimeDensity) -> Result<f64> {
    let base = x.sup_norm(t)?;
    let growth = c.integrate(t, x.grid().horizon())?;
    Ok((1.0 + base) * growth.exp() - 1.0)
}

/// How a bundle member was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberKind {
    Constant,
    Ray { axis: usize, sign: i8, scale: f64 },
    Random { index: usize },
    Custom,
}

/// One admissible extension with its per-cell derivatives on `[t, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMember {
    pub path: Path,
    pub derivatives: Vec<Vec<f64>>,
    pub kind: MemberKind,
}

/// Distribution of the random members' cell derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomKind {
    /// Uniform in the admissible ball.
    Ball,
    /// Uniform on the boundary sphere (saturated, bang-bang).
    Sphere,
    /// Ball for even member indices, sphere for odd ones.
    Mixed,
}

/// Sampler settings for [`sample_bundle`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleScheme {
    /// Fractions of the saturated speed used for the `±e_i` ray members.
    pub ray_scales: Vec<f64>,
    pub random: RandomKind,
}

impl Default for BundleScheme {
    fn default() -> Self {
        Self {
            ray_scales: vec![1.0, 0.5, 0.25],
            random: RandomKind::Mixed,
        }
    }
}

/// Finite sample of `Y(t, x; c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionBundle {
    t: f64,
    start: usize,
    base: Path,
    density: TimeDensity,
    members: Vec<BundleMember>,
}

impl ExtensionBundle {
    /// Bundle holding only the constant extension `x(·∧t)`.
    pub fn constant_only(t: f64, x: &Path, c: &TimeDensity) -> Result<Self> {
        check_density_grid(x, c)?;
        let start = x.grid().node_index(t)?;
        if start < x.grid().zero_index() {
            return Err(domain(format!("bundle base time {t} is negative")));
        }
        let base = x.stopped_at_index(start);
        let cells = x.grid().last_index() - start;
        let member = BundleMember {
            path: base.clone(),
            derivatives: vec![vec![0.0; x.dim()]; cells],
            kind: MemberKind::Constant,
        };
        Ok(Self {
            t,
            start,
            base,
            density: c.clone(),
            members: vec![member],
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Node index of the base time.
    pub fn start(&self) -> usize {
        self.start
    }

    pub fn base(&self) -> &Path {
        &self.base
    }

    pub fn density(&self) -> &TimeDensity {
        &self.density
    }

    pub fn members(&self) -> &[BundleMember] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Add an extension after checking membership.
    pub fn push_path(&mut self, path: Path) -> Result<()> {
        let member = member_from_path(self.start, &self.base, &self.density, path)?;
        self.members.push(member);
        Ok(())
    }

    /// Keep only the first `n` members.
    pub fn truncated(&self, n: usize) -> Self {
        let mut out = self.clone();
        out.members.truncate(n.max(1));
        out
    }

    /// Check both membership conditions for every member.
    pub fn validate(&self) -> Result<()> {
        for (k, m) in self.members.iter().enumerate() {
            check_member(self.start, &self.base, &self.density, &m.path)
                .map_err(|e| config(format!("bundle member {k}: {e}")))?;
        }
        Ok(())
    }
}

fn check_density_grid(x: &Path, c: &TimeDensity) -> Result<()> {
    if x.grid() != c.grid() {
        return Err(config("density and path grids differ"));
    }
    Ok(())
}

/// Verify `y(·∧t) = x(·∧t)` and the discrete growth condition on every cell.
pub fn check_member(start: usize, base: &Path, c: &TimeDensity, y: &Path) -> Result<()> {
    let grid = base.grid();
    if y.grid() != grid || y.dim() != base.dim() {
        return Err(config("member lives on a different grid"));
    }
    for i in 0..=start {
        if y.node(i) != base.node(i) {
            return Err(config(format!("member differs from the history at node {i}")));
        }
    }
    let dt = grid.dt();
    let mut sup = y.sup_norm_to_index(start);
    for j in start..grid.last_index() {
        let speed = norm(
            &y.node(j + 1)
                .iter()
                .zip(y.node(j))
                .map(|(a, b)| (a - b) / dt)
                .collect::<Vec<_>>(),
        );
        let bound = c.cell(j - grid.zero_index()) * (1.0 + sup);
        if speed > bound * (1.0 + GROWTH_SLACK) + GROWTH_SLACK {
            return Err(config(format!(
                "speed {speed} exceeds growth bound {bound} on cell starting at t = {}",
                grid.time(j)
            )));
        }
        sup = sup.max(norm(y.node(j + 1)));
    }
    Ok(())
}

fn member_from_path(start: usize, base: &Path, c: &TimeDensity, path: Path) -> Result<BundleMember> {
    check_member(start, base, c, &path)?;
    let grid = base.grid();
    let dt = grid.dt();
    let derivatives = (start..grid.last_index())
        .map(|j| {
            path.node(j + 1)
                .iter()
                .zip(path.node(j))
                .map(|(a, b)| (a - b) / dt)
                .collect()
        })
        .collect();
    Ok(BundleMember {
        path,
        derivatives,
        kind: MemberKind::Custom,
    })
}

/// Build an extension cell by cell; `choose(cell, bound)` returns the derivative on
/// the cell given the admissible speed `bound`.
pub(crate) fn extend_with(
    start: usize,
    base: &Path,
    c: &TimeDensity,
    mut choose: impl FnMut(usize, f64) -> Vec<f64>,
) -> (Path, Vec<Vec<f64>>) {
    let grid = *base.grid();
    let dt = grid.dt();
    let mut y = base.clone();
    let mut sup = y.sup_norm_to_index(start);
    let mut derivatives = Vec::with_capacity(grid.last_index() - start);
    let mut next = vec![0.0; base.dim()];
    for j in start..grid.last_index() {
        let bound = c.cell(j - grid.zero_index()) * (1.0 + sup);
        let d = choose(j - start, bound);
        for (k, nk) in next.iter_mut().enumerate() {
            *nk = y.node(j)[k] + dt * d[k];
        }
        y.set_tail(j + 1, &next);
        sup = sup.max(norm(&next));
        derivatives.push(d);
    }
    (y, derivatives)
}

/// Sample `Y(t, x; c)`: the constant extension, saturated `±e_i` rays at each
/// configured scale, then `count` seeded random extensions.
///
/// Random member `k` draws from its own ChaCha stream, so the result does not
/// depend on how members are scheduled and a smaller `count` yields a prefix.
pub fn sample_bundle(
    t: f64,
    x: &Path,
    c: &TimeDensity,
    scheme: &BundleScheme,
    count: usize,
    seed: u64,
) -> Result<ExtensionBundle> {
    if count == 0 {
        return Err(config("bundle sample count must be at least 1"));
    }
    let mut bundle = ExtensionBundle::constant_only(t, x, c)?;
    let n = x.dim();
    let start = bundle.start;

    for &scale in &scheme.ray_scales {
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(config(format!("ray scale {scale} outside (0, 1]")));
        }
        for axis in 0..n {
            for sign in [1i8, -1] {
                let (path, derivatives) = extend_with(start, &bundle.base, c, |_, bound| {
                    let mut d = vec![0.0; n];
                    d[axis] = f64::from(sign) * scale * bound;
                    d
                });
                bundle.members.push(BundleMember {
                    path,
                    derivatives,
                    kind: MemberKind::Ray { axis, sign, scale },
                });
            }
        }
    }

    let base = bundle.base.clone();
    let random = crate::par::map_indexed(count, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let on_sphere = match scheme.random {
            RandomKind::Ball => false,
            RandomKind::Sphere => true,
            RandomKind::Mixed => k % 2 == 1,
        };
        let (path, derivatives) = extend_with(start, &base, c, |_, bound| {
            random_in_ball(&mut rng, n, bound, on_sphere)
        });
        BundleMember {
            path,
            derivatives,
            kind: MemberKind::Random { index: k },
        }
    });
    bundle.members.extend(random);
    Ok(bundle)
}

fn random_in_ball(rng: &mut ChaCha8Rng, n: usize, radius: f64, on_sphere: bool) -> Vec<f64> {
    let mut d: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let len = norm(&d);
    let r = if on_sphere {
        radius
    } else {
        radius * rng.gen::<f64>().powf(1.0 / n as f64)
    };
    if len > 0.0 {
        for v in &mut d {
            *v *= r / len;
        }
    }
    d
}
