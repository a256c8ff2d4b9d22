//! Sampled verification of upper, lower and minimax solutions.
//!
//! For a direction `s` and a time `τ`, an extension `y` of `(t, x)` scores
//! `φ(τ, y) − Σ_cells dt (⟨s, ẏ⟩ − H(ξ, y, s))` with `H` taken at the left end of
//! each cell. An upper solution needs some bundle member scoring at most
//! `φ(t, x)`, a lower solution some member scoring at least `φ(t, x)`.
//! A pass means no violation was found at the tolerance; a failure carries a witness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ci::PathFunctional;
use crate::dynamics::{gronwall_bound, sample_bundle, BundleScheme, ExtensionBundle};
use crate::error::{config, domain, Result};
use crate::hamiltonian::{HamiltonianSpec, Side};
use crate::path::{dot, norm, Path};
use crate::verdict::{Verdict, Witness, Worst};

/// Default direction set: `±e_i`, `0`, and 8 seeded random directions with norms
/// cycling through `½, 1, 2`.
pub fn default_s_set(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * n + 9);
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = sign;
            out.push(e);
        }
    }
    out.push(vec![0.0; n]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..8 {
        let radius = [0.5, 1.0, 2.0][k % 3];
        let mut d: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let len = norm(&d);
        if len == 0.0 {
            d[0] = 1.0;
        }
        let len = norm(&d);
        d.iter_mut().for_each(|v| *v *= radius / len);
        out.push(d);
    }
    out
}

/// Default tolerance `2·dt·(1 + max‖s‖)·(1 + gronwall_bound)`.
pub fn default_tol(dt: f64, s_set: &[Vec<f64>], gronwall: f64) -> f64 {
    let smax = s_set.iter().map(|s| norm(s)).fold(0.0, f64::max);
    2.0 * dt * (1.0 + smax) * (1.0 + gronwall)
}

/// Slope of `y` on the cell starting at node `j`.
fn velocity(y: &Path, j: usize) -> Vec<f64> {
    let dt = y.grid().dt();
    y.node(j + 1).iter().zip(y.node(j)).map(|(a, b)| (a - b) / dt).collect()
}

/// Per-member scores `[s][τ]`.
fn member_scores(
    phi: &PathFunctional,
    h: &HamiltonianSpec,
    bundle: &ExtensionBundle,
    member: usize,
    s_set: &[Vec<f64>],
    tau_idx: &[usize],
) -> Vec<Vec<f64>> {
    let m = &bundle.members()[member];
    let grid = *m.path.grid();
    let dt = grid.dt();
    let start = bundle.start();
    let last = tau_idx.iter().copied().max().unwrap_or(start);
    let phis: Vec<f64> = tau_idx.iter().map(|&i| phi.eval(grid.time(i), &m.path)).collect();
    let stopped: Vec<Path> = (start..last).map(|j| m.path.stopped_at_index(j)).collect();
    s_set
        .iter()
        .map(|s| {
            let mut cumulative = Vec::with_capacity(last - start + 1);
            let mut acc = 0.0;
            cumulative.push(0.0);
            for (c, j) in (start..last).enumerate() {
                let hv = h.eval(grid.time(j), &stopped[c], s);
                acc += dt * (dot(s, &velocity(&m.path, j)) - hv);
                cumulative.push(acc);
            }
            tau_idx
                .iter()
                .zip(&phis)
                .map(|(&i, p)| p - cumulative[i - start])
                .collect()
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn check_side(
    side: Side,
    phi: &PathFunctional,
    h: &HamiltonianSpec,
    t: f64,
    x: &Path,
    s_set: &[Vec<f64>],
    tau_set: &[f64],
    bundle: &ExtensionBundle,
    tol: f64,
) -> Result<Verdict> {
    if s_set.is_empty() || tau_set.is_empty() {
        return Err(config("direction and time sets must be non-empty"));
    }
    let grid = *bundle.base().grid();
    let start = grid.node_index(t)?;
    if start != bundle.start() {
        return Err(config("bundle was built at a different base time"));
    }
    let mut tau_idx = Vec::with_capacity(tau_set.len());
    for &tau in tau_set {
        let i = grid.node_index(tau)?;
        if i <= start {
            return Err(domain(format!("time {tau} is not after the base time {t}")));
        }
        tau_idx.push(i);
    }
    let base = phi.eval(t, x);
    let scores = crate::par::map_indexed(bundle.len(), |k| member_scores(phi, h, bundle, k, s_set, &tau_idx));
    let mut worst = Worst::new();
    for (si, s) in s_set.iter().enumerate() {
        for (ti, &tau) in tau_set.iter().enumerate() {
            // best member: min for (U), max for (L); earliest index on ties
            let mut best = (scores[0][si][ti], 0);
            for (k, sc) in scores.iter().enumerate().skip(1) {
                let v = sc[si][ti];
                let better = match side {
                    Side::Upper => v < best.0,
                    Side::Lower => v > best.0,
                };
                if better {
                    best = (v, k);
                }
            }
            let margin = match side {
                Side::Upper => base - best.0,
                Side::Lower => best.0 - base,
            };
            worst.offer(margin, || Witness {
                s: s.clone(),
                tau,
                path: bundle.members()[best.1].path.clone(),
            });
        }
    }
    Ok(worst.finish(tol))
}

/// Property (U) on a bundle: for every `(s, τ)` some member scores `≤ φ(t,x) + tol`.
#[allow(clippy::too_many_arguments)]
pub fn check_upper(
    phi: &PathFunctional,
    h: &HamiltonianSpec,
    t: f64,
    x: &Path,
    s_set: &[Vec<f64>],
    tau_set: &[f64],
    bundle: &ExtensionBundle,
    tol: f64,
) -> Result<Verdict> {
    check_side(Side::Upper, phi, h, t, x, s_set, tau_set, bundle, tol)
}

/// Property (L) on a bundle: for every `(s, τ)` some member scores `≥ φ(t,x) − tol`.
#[allow(clippy::too_many_arguments)]
pub fn check_lower(
    phi: &PathFunctional,
    h: &HamiltonianSpec,
    t: f64,
    x: &Path,
    s_set: &[Vec<f64>],
    tau_set: &[f64],
    bundle: &ExtensionBundle,
    tol: f64,
) -> Result<Verdict> {
    check_side(Side::Lower, phi, h, t, x, s_set, tau_set, bundle, tol)
}

/// Bundle sampling parameters shared by the multi-point checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleConfig {
    pub scheme: BundleScheme,
    pub count: usize,
    pub seed: u64,
}

impl Default for BundleConfig {
    fn default() -> Self {
        Self {
            scheme: BundleScheme::default(),
            count: 32,
            seed: 0,
        }
    }
}

/// Uniform stage nodes from `t` to `T`.
fn stage_nodes(grid: &crate::path::Grid, start: usize, stages: usize) -> Result<Vec<usize>> {
    if stages == 0 {
        return Err(config("stages must be at least 1"));
    }
    let cells = grid.last_index() - start;
    if stages > cells {
        return Err(config(format!("{stages} stages do not fit in {cells} cells")));
    }
    Ok((1..=stages).map(|i| start + (i * cells + stages / 2) / stages).collect())
}

/// Multi-stage gluing: on each stage pick the best member of a fresh bundle from
/// the glued path so far, and require the inequality at every stage node of the
/// final glued path.
#[allow(clippy::too_many_arguments)]
pub fn chain_check(
    side: Side,
    phi: &PathFunctional,
    h: &HamiltonianSpec,
    t: f64,
    x: &Path,
    s: &[f64],
    stages: usize,
    bundles: &BundleConfig,
    tol: f64,
) -> Result<Verdict> {
    let grid = *x.grid();
    let start = grid.node_index(t)?;
    let nodes = stage_nodes(&grid, start, stages)?;
    let c = h.growth_density(grid)?;
    let dt = grid.dt();
    let s_set = vec![s.to_vec()];
    let mut glued = x.stopped_at_index(start);
    let mut from = start;
    let mut samples = 0;
    for (stage, &to) in nodes.iter().enumerate() {
        let seed = bundles.seed.wrapping_add(stage as u64);
        let bundle = sample_bundle(grid.time(from), &glued, &c, &bundles.scheme, bundles.count, seed)?;
        let scores = crate::par::map_indexed(bundle.len(), |k| member_scores(phi, h, &bundle, k, &s_set, &[to]));
        samples += bundle.len();
        let mut best = (scores[0][0][0], 0);
        for (k, sc) in scores.iter().enumerate().skip(1) {
            let better = match side {
                Side::Upper => sc[0][0] < best.0,
                Side::Lower => sc[0][0] > best.0,
            };
            if better {
                best = (sc[0][0], k);
            }
        }
        glued = bundle.members()[best.1].path.stopped_at_index(to);
        from = to;
    }
    // the glued path is one extension of (t, x); score it at every stage node
    let base = phi.eval(t, x);
    let mut worst = Worst::new();
    let mut acc = 0.0;
    let mut j = start;
    for &to in &nodes {
        while j < to {
            let ys = glued.stopped_at_index(j);
            acc += dt * (dot(s, &velocity(&glued, j)) - h.eval(grid.time(j), &ys, s));
            j += 1;
        }
        let score = phi.eval(grid.time(to), &glued) - acc;
        let margin = match side {
            Side::Upper => base - score,
            Side::Lower => score - base,
        };
        worst.offer(margin, || Witness {
            s: s.to_vec(),
            tau: grid.time(to),
            path: glued.clone(),
        });
    }
    let mut v = worst.finish(tol);
    v.samples_used = samples;
    Ok(v)
}

/// Settings for [`classify`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    pub s_set: Vec<Vec<f64>>,
    pub bundles: BundleConfig,
    /// Absolute tolerance; `None` uses [`default_tol`] per point.
    pub tol: Option<f64>,
    pub boundary_tol: f64,
}

/// Upper, lower and boundary verdicts of a candidate solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub upper: Verdict,
    pub lower: Verdict,
    pub boundary: Verdict,
}

impl ClassifyReport {
    pub fn is_minimax(&self) -> bool {
        self.upper.passed && self.lower.passed && self.boundary.passed
    }
}

/// Merge verdicts, keeping the worst margin (earliest on ties) and summing samples.
pub fn combine(verdicts: impl IntoIterator<Item = Verdict>, tol: f64) -> Verdict {
    let mut worst: Option<Verdict> = None;
    let mut samples = 0;
    let mut all_pass = true;
    for v in verdicts {
        samples += v.samples_used;
        all_pass &= v.passed;
        let replace = match &worst {
            None => true,
            Some(w) => (v.margin + v.tol) < (w.margin + w.tol),
        };
        if replace {
            worst = Some(v);
        }
    }
    match worst {
        None => Verdict::from_margin(0.0, tol, None, 0),
        Some(mut w) => {
            w.samples_used = samples;
            w.passed = all_pass;
            w
        }
    }
}

/// Check (U), (L) at interior sample points and the boundary condition on
/// terminal sample paths. Every interior point uses all later grid nodes as `τ`.
pub fn classify(
    phi: &PathFunctional,
    h: &HamiltonianSpec,
    sigma: &PathFunctional,
    interior: &[(f64, Path)],
    terminal: &[Path],
    cfg: &ClassifyConfig,
) -> Result<ClassifyReport> {
    let mut uppers = Vec::new();
    let mut lowers = Vec::new();
    let mut used_tol = cfg.tol.unwrap_or(0.0);
    for (idx, (t, x)) in interior.iter().enumerate() {
        let grid = *x.grid();
        let start = grid.node_index(*t)?;
        if start >= grid.last_index() {
            return Err(domain(format!("interior point {t} must lie before T")));
        }
        let c = h.growth_density(grid)?;
        let seed = cfg.bundles.seed.wrapping_add(1000 * idx as u64);
        let bundle = sample_bundle(*t, x, &c, &cfg.bundles.scheme, cfg.bundles.count, seed)?;
        let taus: Vec<f64> = (start + 1..=grid.last_index()).map(|i| grid.time(i)).collect();
        let tol = match cfg.tol {
            Some(tol) => tol,
            None => default_tol(grid.dt(), &cfg.s_set, gronwall_bound(x, *t, &c)?),
        };
        used_tol = used_tol.max(tol);
        uppers.push(check_upper(phi, h, *t, x, &cfg.s_set, &taus, &bundle, tol)?);
        lowers.push(check_lower(phi, h, *t, x, &cfg.s_set, &taus, &bundle, tol)?);
    }
    let mut worst = Worst::new();
    for y in terminal {
        let horizon = y.grid().horizon();
        let diff = (phi.eval(horizon, y) - sigma.eval(horizon, y)).abs();
        worst.offer(-diff, || Witness {
            s: Vec::new(),
            tau: horizon,
            path: y.clone(),
        });
    }
    Ok(ClassifyReport {
        upper: combine(uppers, used_tol),
        lower: combine(lowers, used_tol),
        boundary: worst.finish(cfg.boundary_tol),
    })
}

/// Interior `(t, y)` points and terminal paths returned by [`sample_points`].
pub type SamplePoints = (Vec<(f64, Path)>, Vec<Path>);

/// Interior sample points `(t, y)` with `t` a node in `[0, T)` and `y` a member of
/// a seeded bundle from `(0, x0)`, plus the corresponding terminal paths.
pub fn sample_points(
    x0: &Path,
    c: &crate::path::TimeDensity,
    count: usize,
    seed: u64,
) -> Result<SamplePoints> {
    let grid = *x0.grid();
    let bundle = sample_bundle(0.0, x0, c, &BundleScheme::default(), count.max(1), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let members = bundle.members();
    let mut interior = Vec::with_capacity(count);
    let mut terminal = Vec::with_capacity(count);
    for k in 0..count {
        let m = &members[k % members.len()];
        let i = rng.gen_range(grid.zero_index()..grid.last_index());
        interior.push((grid.time(i), m.path.stopped_at_index(i)));
        terminal.push(m.path.clone());
    }
    Ok((interior, terminal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::hamiltonian::game_hamiltonian;
    use crate::path::{Grid, TimeDensity};

    fn setup() -> (Grid, Path) {
        let g = Grid::new(0.5, 1.0, 0.0625).unwrap();
        (g, Path::from_fn(g, 1, |t| vec![0.3 * t]).unwrap())
    }

    #[test]
    fn zero_problem_passes_with_zero_margin() {
        let (g, x) = setup();
        let h = HamiltonianSpec::zero(1.0);
        let sigma = PathFunctional::new("x(-h/2)", |_, x: &Path| x.eval(-0.25)[0]);
        let c = TimeDensity::zero(g);
        let b = sample_bundle(0.25, &x, &c, &BundleScheme::default(), 4, 1).unwrap();
        let s = default_s_set(1, 3);
        let up = check_upper(&sigma, &h, 0.25, &x, &s, &[0.5, 1.0], &b, 0.0).unwrap();
        let lo = check_lower(&sigma, &h, 0.25, &x, &s, &[0.5, 1.0], &b, 0.0).unwrap();
        assert!(up.passed && lo.passed);
        assert_eq!((up.margin, lo.margin), (0.0, 0.0));
        assert!(check_upper(&sigma, &h, 0.25, &x, &[], &[1.0], &b, 0.0).is_err());
    }

    #[test]
    fn cancellation_solution_and_one_sided_perturbations() {
        let (g, x) = setup();
        let game = catalog::cancellation_game();
        let h = game_hamiltonian(&game, Side::Lower).unwrap();
        let phi = catalog::cancellation_solution();
        let c = h.growth_density(g).unwrap();
        let b = sample_bundle(0.25, &x, &c, &BundleScheme::default(), 16, 2).unwrap();
        let s = default_s_set(1, 1);
        let taus: Vec<f64> = (5..=16).map(|i| i as f64 * 0.0625).collect();
        let tol = 2.0 * g.dt() * 3.0;
        assert!(check_upper(&phi, &h, 0.25, &x, &s, &taus, &b, tol).unwrap().passed);
        assert!(check_lower(&phi, &h, 0.25, &x, &s, &taus, &b, tol).unwrap().passed);

        let down = phi.shifted_interior(-1.0, 1.0);
        let up = check_upper(&down, &h, 0.25, &x, &s, &taus, &b, tol).unwrap();
        let lo = check_lower(&down, &h, 0.25, &x, &s, &taus, &b, tol).unwrap();
        assert!(!up.passed && up.witness.is_some());
        assert!(lo.passed);

        let raised = phi.shifted_interior(1.0, 1.0);
        assert!(check_upper(&raised, &h, 0.25, &x, &s, &taus, &b, tol).unwrap().passed);
        assert!(!check_lower(&raised, &h, 0.25, &x, &s, &taus, &b, tol).unwrap().passed);
    }

    #[test]
    fn bigger_bundles_never_hurt() {
        let (g, x) = setup();
        let game = catalog::measurable_game();
        let h = game_hamiltonian(&game, Side::Lower).unwrap();
        let phi = catalog::measurable_solution().shifted_interior(0.05, 1.0);
        let c = h.growth_density(g).unwrap();
        let big = sample_bundle(0.0, &x, &c, &BundleScheme::default(), 40, 4).unwrap();
        let small = big.truncated(3);
        let s = vec![vec![0.5], vec![-1.0]];
        let taus = [0.5, 1.0];
        let us = check_upper(&phi, &h, 0.0, &x, &s, &taus, &small, 0.0).unwrap();
        let ub = check_upper(&phi, &h, 0.0, &x, &s, &taus, &big, 0.0).unwrap();
        assert!(ub.margin >= us.margin);
        let ls = check_lower(&phi, &h, 0.0, &x, &s, &taus, &small, 0.0).unwrap();
        let lb = check_lower(&phi, &h, 0.0, &x, &s, &taus, &big, 0.0).unwrap();
        assert!(lb.margin >= ls.margin);
    }

    #[test]
    fn chain_with_one_stage_matches_check_at_horizon() {
        let (g, x) = setup();
        let h = game_hamiltonian(&catalog::cancellation_game(), Side::Lower).unwrap();
        let phi = catalog::cancellation_solution();
        let cfg = BundleConfig::default();
        let chained = chain_check(Side::Upper, &phi, &h, 0.25, &x, &[0.5], 1, &cfg, 0.1).unwrap();
        let c = h.growth_density(g).unwrap();
        let b = sample_bundle(0.25, &x, &c, &cfg.scheme, cfg.count, cfg.seed).unwrap();
        let direct = check_upper(&phi, &h, 0.25, &x, &[vec![0.5]], &[1.0], &b, 0.1).unwrap();
        assert_eq!(chained.margin, direct.margin);
        let four = chain_check(Side::Upper, &phi, &h, 0.0, &x, &[0.5], 4, &cfg, 4.0 * g.dt()).unwrap();
        assert!(four.passed);
    }

    #[test]
    fn classify_zero_problem_and_boundary_shift() {
        let (g, x) = setup();
        let h = HamiltonianSpec::zero(1.0);
        let zero = PathFunctional::new("0", |_, _| 0.0);
        let cfg = ClassifyConfig {
            s_set: default_s_set(1, 0),
            bundles: BundleConfig::default(),
            tol: None,
            boundary_tol: 1e-12,
        };
        let (interior, terminal) = sample_points(&x, &TimeDensity::constant(g, 1.0).unwrap(), 4, 7).unwrap();
        let r = classify(&zero, &h, &zero, &interior, &terminal, &cfg).unwrap();
        assert!(r.is_minimax());
        let r = classify(&zero.shifted(1.0), &h, &zero, &interior, &terminal, &cfg).unwrap();
        assert!(!r.boundary.passed);
    }
}
