//! Canonical games, closed-form solutions and smooth test functionals used by the
//! tests, the command line and the browser demo.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ci::{CiGradient, GradientSource, PathFunctional};
use crate::control::ControlGrid;
use crate::game::GameSpec;
use crate::hamiltonian::HamiltonianSpec;
use crate::lk;
use crate::path::Path;

fn three_point() -> ControlGrid {
    ControlGrid::boxed(vec![-1.0], vec![1.0], &[3]).expect("static grid")
}

fn terminal_state() -> PathFunctional {
    PathFunctional::new("y1(T)", |t, y| y.eval(t)[0])
}

fn base_game(label: &str, f: crate::dynamics::DynamicsFn, c_f: f64) -> GameSpec {
    GameSpec {
        n: 1,
        h: 0.5,
        horizon: 1.0,
        f,
        chi: Arc::new(|_, _, _, _| 0.0),
        sigma: terminal_state(),
        p_grid: three_point(),
        q_grid: three_point(),
        c_f: Arc::new(move |_| c_f),
        lambda: Some(Arc::new(|_| 0.0)),
        time_discontinuities: Vec::new(),
        label: label.into(),
    }
}

/// `f = u + v`, `χ = 0`, `σ = y(T)`, `P = Q = {−1, 0, 1}` on `[−½, 1]`.
pub fn cancellation_game() -> GameSpec {
    base_game("cancellation", Arc::new(|_, _, u, v| vec![u[0] + v[0]]), 2.0)
}

/// `φ(t, x) = x(t)`, the value of the cancellation game.
pub fn cancellation_solution() -> PathFunctional {
    PathFunctional::new("x(t)", |t, x| x.eval(t)[0])
}

/// `f = a·u + b·v` on the three-point grids.
pub fn linear_game(a: f64, b: f64) -> GameSpec {
    base_game(
        &format!("linear {a}u+{b}v"),
        Arc::new(move |_, _, u, v| vec![a * u[0] + b * v[0]]),
        a.abs() + b.abs(),
    )
}

/// `f = u·v` on `{−1, 1}²`: Isaacs' condition fails.
pub fn coupled_game() -> GameSpec {
    let pm = ControlGrid::finite(vec![vec![-1.0], vec![1.0]]).expect("static grid");
    GameSpec {
        p_grid: pm.clone(),
        q_grid: pm,
        ..base_game("coupled", Arc::new(|_, _, u, v| vec![u[0] * v[0]]), 1.0)
    }
}

/// The coefficient `a(t) = 𝟙[t < ½]`.
pub fn step_coefficient(t: f64) -> f64 {
    if t < 0.5 {
        1.0
    } else {
        0.0
    }
}

/// `f = a(t)·u + v` with `a = 𝟙[t < ½]`, `σ = y(T)`, declared discontinuity at ½.
pub fn measurable_game() -> GameSpec {
    GameSpec {
        c_f: Arc::new(|t| 1.0 + step_coefficient(t)),
        time_discontinuities: vec![0.5],
        ..base_game(
            "measurable coefficient",
            Arc::new(|t, _, u, v| vec![step_coefficient(t) * u[0] + v[0]]),
            0.0,
        )
    }
}

/// `φ(t, x) = x(t) + ∫_t^T (1 − a) = x(t) + T − max(t, ½)`.
pub fn measurable_solution() -> PathFunctional {
    PathFunctional::new("x(t) + int_t^T (1 - a)", |t, x| x.eval(t)[0] + 1.0 - t.max(0.5))
}

/// `σ(y) = y(T) + y(T − h)`, `f = u + v`, `h = ½`, `T = 1`.
pub fn path_terminal_game() -> GameSpec {
    GameSpec {
        sigma: PathFunctional::new("y1(T) + y1(T-h)", |t, y| y.eval(t)[0] + y.eval(t.min(0.5))[0]),
        ..base_game("path-dependent terminal", Arc::new(|_, _, u, v| vec![u[0] + v[0]]), 2.0)
    }
}

/// `φ(t, x) = x(t) + x(min(t, T − h))`.
pub fn path_terminal_solution() -> PathFunctional {
    PathFunctional::new("x(t) + x(min(t, T-h))", |t, x| x.eval(t)[0] + x.eval(t.min(0.5))[0])
}

/// `f = y(τ − h)` with `h = T = 1` and trivial controls.
pub fn delay_game() -> GameSpec {
    let zero = ControlGrid::finite(vec![vec![0.0]]).expect("static grid");
    GameSpec {
        h: 1.0,
        p_grid: zero.clone(),
        q_grid: zero,
        lambda: Some(Arc::new(|_| 1.0)),
        ..base_game("delay", Arc::new(|tau, y, _, _| y.eval(tau - 1.0)), 1.0)
    }
}

/// Seeded game with coupled `u·v` terms, a lagged state read and a quadratic
/// terminal payoff. Dimension 1 or 2, three-point control grids, `h = ½`, `T = 1`.
pub fn random_game(seed: u64) -> GameSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 1 + (seed % 2) as usize;
    let mut coef = |scale: f64| rng.gen_range(-scale..scale);
    let rows: Vec<[f64; 5]> = (0..n)
        .map(|_| [coef(1.0), coef(1.0), coef(1.0), coef(0.5), coef(0.5)])
        .collect();
    let (g, k, m, p) = (coef(1.0), coef(0.5), coef(0.5), coef(0.5));
    let (w1, w2) = (coef(1.0), coef(0.5));
    let speed = rows
        .iter()
        .map(|r| (r[0].abs() + r[1].abs() + r[2].abs()).max(r[3].abs() + r[4].abs()))
        .fold(0.0, f64::max)
        * (n as f64).sqrt();
    let lip = rows
        .iter()
        .map(|r| r[3].abs() + r[4].abs())
        .fold(p.abs(), f64::max)
        * (n as f64).sqrt();
    let f_rows = rows.clone();
    GameSpec {
        n,
        h: 0.5,
        horizon: 1.0,
        f: Arc::new(move |tau, y, u, v| {
            let now = y.eval(tau);
            let lag = y.eval(tau - 0.5);
            f_rows
                .iter()
                .enumerate()
                .map(|(i, r)| r[0] * u[0] + r[1] * v[0] + r[2] * u[0] * v[0] + r[3] * now[i] + r[4] * lag[i])
                .collect()
        }),
        chi: Arc::new(move |tau, y, u, v| g * u[0] * v[0] + k * u[0] * u[0] - m * v[0] * v[0] + p * y.eval(tau)[0]),
        sigma: PathFunctional::new(format!("random sigma {seed}"), move |t, y| {
            let end = y.eval(t)[0];
            w1 * end + w2 * end * end + y.eval(t - 0.5)[0]
        }),
        p_grid: three_point(),
        q_grid: three_point(),
        c_f: Arc::new(move |_| speed),
        lambda: Some(Arc::new(move |_| lip)),
        time_discontinuities: Vec::new(),
        label: format!("random game {seed}"),
    }
}

/// `∫_0^t ‖x‖²`, exact for piecewise-linear paths (Simpson's rule per cell).
fn running_square_integral(t: f64, x: &Path) -> f64 {
    let grid = x.grid();
    let sq = |tau: f64| x.eval(tau).iter().map(|v| v * v).sum::<f64>();
    let mut total = 0.0;
    let mut a = 0.0;
    for i in grid.zero_index() + 1..=grid.last_index() {
        if a >= t {
            break;
        }
        let b = grid.time(i).min(t);
        // an off-node stop adds a kink inside the cell
        let mut knots = vec![a];
        if let Some(s) = x.stop_time() {
            if s > a && s < b {
                knots.push(s);
            }
        }
        knots.push(b);
        for w in knots.windows(2) {
            let (l, r) = (w[0], w[1]);
            total += (r - l) / 6.0 * (sq(l) + 4.0 * sq(0.5 * (l + r)) + sq(r));
        }
        a = b;
    }
    total
}

/// Functionals with known ci-derivatives: `‖x(t)‖²`, `γ`, `∫_0^t ‖x‖²`, and
/// `(1 + t) exp(x₁(t))`.
pub fn smooth_functionals() -> Vec<(PathFunctional, GradientSource)> {
    vec![
        (
            PathFunctional::new("|x(t)|^2", |t, x| x.eval(t).iter().map(|v| v * v).sum()),
            GradientSource::analytic(|t, x| CiGradient::exact(0.0, x.eval(t).iter().map(|v| 2.0 * v).collect())),
        ),
        (lk::gamma_functional(), lk::gamma_gradients()),
        (
            PathFunctional::new("int_0^t |x|^2", running_square_integral),
            GradientSource::analytic(|t, x| {
                let now = x.eval(t);
                CiGradient::exact(now.iter().map(|v| v * v).sum(), vec![0.0; now.len()])
            }),
        ),
        (
            PathFunctional::new("(1+t) exp(x1(t))", |t, x| (1.0 + t) * x.eval(t)[0].exp()),
            GradientSource::analytic(|t, x| {
                let now = x.eval(t);
                let mut grad = vec![0.0; now.len()];
                grad[0] = (1.0 + t) * now[0].exp();
                CiGradient::exact(now[0].exp(), grad)
            }),
        ),
    ]
}

/// Transport Hamiltonian `H = x(t)·s` (`n = 1`, `c_H = 1`) with its semiclassical
/// solution `φ(t, x) = x(t) e^{T−t}` on `T = 1`.
pub fn transport_pair() -> (HamiltonianSpec, PathFunctional, GradientSource) {
    let h = HamiltonianSpec::new("x(t) s", 1.0, Arc::new(|_| 1.0), |t, x, s| x.eval(t)[0] * s[0])
        .with_lipschitz(Arc::new(|_| 1.0));
    let phi = PathFunctional::new("x(t) exp(T-t)", |t, x| x.eval(t)[0] * (1.0 - t).exp());
    let grads = GradientSource::analytic(|t, x| {
        let e = (1.0 - t).exp();
        CiGradient::exact(-x.eval(t)[0] * e, vec![e])
    });
    (h, phi, grads)
}
