//! Browser demo: Steklov smoothing of a jump, characteristic bundles inside their
//! a-priori envelope, and game values converging under refinement.
//!
//! Every export returns a flat `Float64Array`; the layouts are documented per
//! function. The computations live in plain functions so they can be tested
//! natively.

use hjlab::catalog;
use hjlab::dynamics::sample_bundle;
use hjlab::game::{refinement_study, TreeOptions};
use hjlab::hamiltonian::{l1_distance, steklov_smooth, HamiltonianSpec};
use hjlab::regularization::PathDictionary;
use hjlab::{BundleScheme, Grid, Path, TimeDensity};
use std::sync::Arc;
use wasm_bindgen::prelude::*;

fn step_hamiltonian() -> HamiltonianSpec {
    HamiltonianSpec::new("1[t >= 1/2]", 1.0, Arc::new(|_| 1.0), |t, _, _| if t >= 0.5 { 1.0 } else { 0.0 })
        .with_discontinuities(vec![0.5])
}

fn flat_history() -> Path {
    Path::zeros(Grid::new(0.5, 1.0, 0.125).expect("static grid"), 1)
}

/// `samples` rows of `(t, H(t), H_k(t))` on `[0, 1]` followed by the L1 distance.
pub fn steklov_rows(k: u32, samples: usize) -> Result<Vec<f64>, String> {
    if samples < 2 {
        return Err("need at least two samples".into());
    }
    let h = step_hamiltonian();
    let hk = steklov_smooth(&h, k).map_err(|e| e.to_string())?;
    let x = flat_history();
    let mut out = Vec::with_capacity(3 * samples + 1);
    for i in 0..samples {
        let t = i as f64 / (samples - 1) as f64;
        out.extend([t, h.eval(t, &x, &[1.0]), hk.eval(t, &x, &[1.0])]);
    }
    let l1 = l1_distance(&h, &hk.to_spec(), &PathDictionary::single(x), &[1.0]).map_err(|e| e.to_string())?;
    out.push(l1);
    Ok(out)
}

/// Node times, then one row per bundle member, then the upper envelope
/// `(1 + |x0|) exp(c max(τ, 0)) − 1`. Each row has one entry per
/// node of the grid `[−½, 1]` with `steps` cells on `[0, 1]`.
pub fn bundle_rows(x0: f64, growth: f64, count: usize, seed: u64, steps: usize) -> Result<Vec<f64>, String> {
    if steps == 0 || !steps.is_multiple_of(2) {
        return Err("steps must be a positive even number".into());
    }
    let grid = Grid::new(0.5, 1.0, 1.0 / steps as f64).map_err(|e| e.to_string())?;
    let x = Path::constant(grid, &[x0]);
    let c = TimeDensity::constant(grid, growth).map_err(|e| e.to_string())?;
    let bundle = sample_bundle(0.0, &x, &c, &BundleScheme::default(), count.max(1), seed).map_err(|e| e.to_string())?;
    let times = grid.node_times();
    let mut out = times.clone();
    for m in bundle.members() {
        out.extend(m.path.values().iter().copied());
    }
    for &t in &times {
        let grown = c.integrate(0.0, t.max(0.0)).map_err(|e| e.to_string())?;
        out.push((1.0 + x0.abs()) * grown.exp() - 1.0);
    }
    Ok(out)
}

/// Rows `(steps, ρ⁻, ρ⁺, closed form)` for the measurable-coefficient game from
/// `x ≡ 0` at `t = 0`, for `steps = 2, 4, …, max_steps` (capped at 8).
pub fn refinement_rows(max_steps: usize) -> Result<Vec<f64>, String> {
    let game = catalog::measurable_game();
    let phi = catalog::measurable_solution();
    let x = flat_history();
    let steps: Vec<usize> = std::iter::successors(Some(2usize), |s| Some(s * 2))
        .take_while(|&s| s <= max_steps.min(8))
        .collect();
    let rows = refinement_study(&game, 0.0, &x, &steps, Some(&phi), &TreeOptions::default()).map_err(|e| e.to_string())?;
    let exact = phi.eval(0.0, &x);
    Ok(rows
        .iter()
        .flat_map(|r| [r.steps as f64, r.rho_lower, r.rho_upper, exact])
        .collect())
}

#[wasm_bindgen]
pub fn steklov_profile(k: u32, samples: usize) -> Result<Vec<f64>, JsError> {
    steklov_rows(k, samples).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn bundle_paths(x0: f64, growth: f64, count: usize, seed: u64, steps: usize) -> Result<Vec<f64>, JsError> {
    bundle_rows(x0, growth, count, seed, steps).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn game_refinement(max_steps: usize) -> Result<Vec<f64>, JsError> {
    refinement_rows(max_steps).map_err(|e| JsError::new(&e))
}
