//! Numerical toolkit for path-dependent Hamilton–Jacobi equations with
//! co-invariant derivatives and the zero-sum time-delay differential games
//! behind them.
//!
//! * [`path`]: piecewise-linear paths on `[−h, T]`, stopping, sup-norms, densities.
//! * [`dynamics`]: retarded dynamics, Gronwall bounds, characteristic bundles.
//! * [`hamiltonian`]: game Hamiltonians, Steklov smoothing, convergence diagnostics.
//! * [`lk`]: the Lyapunov–Krasovskii functionals used to compare solutions.
//! * [`ci`]: co-invariant derivatives, chain rule, HJ residuals, characteristics.
//! * [`minimax`]: sampled verification of upper, lower and minimax solutions.
//! * [`game`]: exact game-tree values and feedback policies.
//! * [`regularization`]: good-time-set interpolation and McShane–Whitney extension.
//! * [`expr`], [`problem`], [`commands`]: the problem-file format and commands
//!   behind the `hjlab` binary.

// `!(a > b)` comparisons deliberately reject NaN inputs
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod ci;
pub mod commands;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod game;
pub mod hamiltonian;
pub mod lk;
pub mod minimax;
mod par;
pub mod path;
pub mod problem;
pub mod regularization;
pub mod verdict;

pub use ci::{CiGradient, GradientSource, PathFunctional};
pub use control::{ControlGrid, ControlSet, ControlSignal};
pub use dynamics::{BundleScheme, DynamicsFn, ExtensionBundle};
pub use error::{Error, Result};
pub use game::{GameSpec, GameValueReport, TreeOptions};
pub use hamiltonian::{HamiltonianSpec, Side, SmoothedHamiltonian};
pub use path::{Grid, Path, TimeDensity};
pub use verdict::{Verdict, Witness};
