//! Lyapunov–Krasovskii machinery for comparing upper and lower solutions:
//! the functional `γ`, its gradient `q`, the discounted functional `ν_ε` with its
//! gradient `s_ε`, and a sampled comparison harness.

use serde::{Deserialize, Serialize};

use crate::ci::{CiGradient, GradientSource, PathFunctional};
use crate::error::{config, Result};
use crate::hamiltonian::HamiltonianSpec;
use crate::path::{norm, Path, TimeDensity};
use crate::verdict::{Verdict, Witness, Worst};

/// `κ = (3 − √5)/2`.
pub fn kappa() -> f64 {
    (3.0 - 5f64.sqrt()) / 2.0
}

/// Admissibility threshold `ε₀ = κ^{-1/2} exp(−‖λ‖₁/κ)`.
pub fn epsilon0(lambda: &TimeDensity) -> f64 {
    let k = kappa();
    (-lambda.l1_norm() / k).exp() / k.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LKParams {
    epsilon: f64,
    lambda: TimeDensity,
    kappa: f64,
}

impl LKParams {
    pub fn new(epsilon: f64, lambda: TimeDensity) -> Result<Self> {
        let e0 = epsilon0(&lambda);
        if !(epsilon > 0.0 && epsilon <= e0) {
            return Err(config(format!("epsilon {epsilon} outside (0, {e0}]")));
        }
        Ok(Self {
            epsilon,
            lambda,
            kappa: kappa(),
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn lambda(&self) -> &TimeDensity {
        &self.lambda
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `exp(−(1/κ) ∫_0^τ λ)`.
    fn discount(&self, tau: f64) -> f64 {
        let integral = self.lambda.integrate(0.0, tau.max(0.0)).unwrap_or(0.0);
        (-integral / self.kappa).exp()
    }
}

/// `(M, ‖w(τ)‖², w(τ))` with `M = ‖w(·∧τ)‖∞`.
fn parts(tau: f64, w: &Path) -> (f64, f64, Vec<f64>) {
    let m = w.sup_norm_unchecked(tau);
    let wt = w.eval(tau);
    let sq = wt.iter().map(|v| v * v).sum();
    (m, sq, wt)
}

/// `γ(τ, w) = (M² − ‖w(τ)‖²)²/M² + ‖w(τ)‖²`, and 0 when `M = 0`.
pub fn gamma(tau: f64, w: &Path) -> f64 {
    let (m, sq, _) = parts(tau, w);
    if m == 0.0 {
        return 0.0;
    }
    let m2 = m * m;
    let deficit = m2 - sq;
    deficit * deficit / m2 + sq
}

/// `q(τ, w) = (2 − 4(M² − ‖w(τ)‖²)/M²) w(τ)`, and 0 when `M = 0`.
pub fn q_gradient(tau: f64, w: &Path) -> Vec<f64> {
    let (m, sq, wt) = parts(tau, w);
    if m == 0.0 {
        return vec![0.0; w.dim()];
    }
    let m2 = m * m;
    let factor = 2.0 - 4.0 * (m2 - sq) / m2;
    wt.iter().map(|v| factor * v).collect()
}

/// `ν_ε(τ, w) = √(ε⁴ + γ)/ε · (exp(−(1/κ)∫_0^τ λ) − ε√κ)`.
pub fn nu(params: &LKParams, tau: f64, w: &Path) -> f64 {
    let e = params.epsilon;
    let root = (e.powi(4) + gamma(tau, w)).sqrt();
    root / e * (params.discount(tau) - e * params.kappa.sqrt())
}

/// `s_ε(τ, w) = q / (2ε√(ε⁴ + γ)) · (exp(−(1/κ)∫_0^τ λ) − ε√κ)`.
pub fn s_eps(params: &LKParams, tau: f64, w: &Path) -> Vec<f64> {
    let e = params.epsilon;
    let root = (e.powi(4) + gamma(tau, w)).sqrt();
    let factor = (params.discount(tau) - e * params.kappa.sqrt()) / (2.0 * e * root);
    q_gradient(tau, w).iter().map(|v| factor * v).collect()
}

/// `∂_tν_ε(τ, w) = −λ(τ) √(ε⁴ + γ)/(εκ) · exp(−(1/κ)∫_0^τ λ)`.
pub fn dt_nu(params: &LKParams, tau: f64, w: &Path) -> f64 {
    let e = params.epsilon;
    let root = (e.powi(4) + gamma(tau, w)).sqrt();
    -params.lambda.value_at(tau) * root / (e * params.kappa) * params.discount(tau)
}

/// `γ` as a path functional.
pub fn gamma_functional() -> PathFunctional {
    PathFunctional::new("gamma", gamma)
}

/// Analytic ci-derivatives `(0, q)` of `γ`.
pub fn gamma_gradients() -> GradientSource {
    GradientSource::analytic(|t, w| CiGradient::exact(0.0, q_gradient(t, w)))
}

/// `ν_ε` as a path functional.
pub fn nu_functional(params: LKParams) -> PathFunctional {
    PathFunctional::new(format!("nu eps={}", params.epsilon), move |t, w| nu(&params, t, w))
}

/// Analytic ci-derivatives `(∂_tν_ε, s_ε)`.
pub fn nu_gradients(params: LKParams) -> GradientSource {
    GradientSource::analytic(move |t, w| CiGradient::exact(dt_nu(&params, t, w), s_eps(&params, t, w)))
}

/// Result of [`comparison_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `φ₂ − φ₁` over the sample points (passes when `≥ −tol`).
    pub comparison: Verdict,
    /// Sampled evidence for `H1 ≤ H2` (margin `H2 − H1`).
    pub ordering: Verdict,
}

/// Check `φ₁ ≤ φ₂ + tol` on sample points, and report the sampled ordering
/// `H1(t,x,s) ≤ H2(t,x,s)` over `s_samples` at the same points.
pub fn comparison_check(
    phi1: &PathFunctional,
    h1: &HamiltonianSpec,
    phi2: &PathFunctional,
    h2: &HamiltonianSpec,
    points: &[(f64, Path)],
    s_samples: &[Vec<f64>],
    tol: f64,
) -> ComparisonReport {
    let margins = crate::par::map_indexed(points.len(), |i| {
        let (t, x) = &points[i];
        let m = phi2.eval(*t, x) - phi1.eval(*t, x);
        let ord: Vec<f64> = s_samples
            .iter()
            .map(|s| h2.eval(*t, x, s) - h1.eval(*t, x, s))
            .collect();
        (m, ord)
    });
    let mut comparison = Worst::new();
    let mut ordering = Worst::new();
    for ((t, x), (m, ord)) in points.iter().zip(margins) {
        comparison.offer(m, || Witness {
            s: Vec::new(),
            tau: *t,
            path: x.clone(),
        });
        for (s, o) in s_samples.iter().zip(ord) {
            ordering.offer(o, || Witness {
                s: s.clone(),
                tau: *t,
                path: x.clone(),
            });
        }
    }
    ComparisonReport {
        comparison: comparison.finish(tol),
        ordering: ordering.finish(tol),
    }
}

/// Slacks `(γ − κM², 2‖w(τ)‖ − ‖q‖)` of the two bounds on `γ` and `q`; both are
/// non-negative when the bounds hold.
pub fn bound_slacks(tau: f64, w: &Path) -> (f64, f64) {
    let m = w.sup_norm_unchecked(tau);
    let wt = w.eval(tau);
    (
        gamma(tau, w) - kappa() * m * m,
        2.0 * norm(&wt) - norm(&q_gradient(tau, w)),
    )
}
