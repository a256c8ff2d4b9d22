//! Compact control sets, their finite discretizations, and piecewise-constant
//! control signals.

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::path::Grid;

const MEMBER_TOL: f64 = 1e-12;

/// A compact control set: an axis-aligned box or an explicit finite set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlSet {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Finite(Vec<Vec<f64>>),
}

impl ControlSet {
    pub fn dim(&self) -> usize {
        match self {
            ControlSet::Box { lo, .. } => lo.len(),
            ControlSet::Finite(points) => points.first().map_or(0, Vec::len),
        }
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        match self {
            ControlSet::Box { lo, hi } => {
                point.len() == lo.len()
                    && point
                        .iter()
                        .zip(lo.iter().zip(hi))
                        .all(|(p, (l, h))| *p >= l - MEMBER_TOL && *p <= h + MEMBER_TOL)
            }
            ControlSet::Finite(points) => points.iter().any(|q| q.as_slice() == point),
        }
    }
}

/// Finite grid `P_d ⊂ P` searched exhaustively by the Hamiltonians and the game tree.
///
/// Points are enumerated in lexicographic order (first axis slowest); the
/// enumeration index is the tie-breaking order everywhere in the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlGrid {
    set: ControlSet,
    points: Vec<Vec<f64>>,
}

impl ControlGrid {
    /// Per-axis uniform grid with `counts[i]` points over `[lo[i], hi[i]]`.
    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>, counts: &[usize]) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() || lo.len() != counts.len() {
            return Err(config("control box needs matching lo/hi/count lengths"));
        }
        if let Some(i) = (0..lo.len()).find(|&i| !(lo[i] <= hi[i])) {
            return Err(config(format!("control box axis {i} has lo > hi")));
        }
        if counts.contains(&0) {
            return Err(config("empty control grid"));
        }
        let axes: Vec<Vec<f64>> = (0..lo.len())
            .map(|i| match counts[i] {
                1 => vec![0.5 * (lo[i] + hi[i])],
                k => (0..k)
                    .map(|j| {
                        if j + 1 == k {
                            hi[i]
                        } else {
                            lo[i] + (hi[i] - lo[i]) * j as f64 / (k - 1) as f64
                        }
                    })
                    .collect(),
            })
            .collect();
        let mut points = vec![Vec::new()];
        for axis in &axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |a| {
                        let mut q = p.clone();
                        q.push(*a);
                        q
                    })
                })
                .collect();
        }
        Ok(Self {
            set: ControlSet::Box { lo, hi },
            points,
        })
    }

    /// Explicit finite control set, e.g. `{-1, 1}`.
    pub fn finite(points: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(config("empty control grid"));
        };
        let dim = first.len();
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(config("control points must share a positive dimension"));
        }
        Ok(Self {
            set: ControlSet::Finite(points.clone()),
            points,
        })
    }

    pub fn set(&self) -> &ControlSet {
        &self.set
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

/// Piecewise-constant control on the cells of `[t, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    start: usize,
    points: Vec<Vec<f64>>,
}

impl ControlSignal {
    /// `points[j]` is the control on the `j`-th cell after the node `t`.
    pub fn new(grid: &Grid, set: &ControlSet, t: f64, points: Vec<Vec<f64>>) -> Result<Self> {
        let start = grid.node_index(t)?;
        let cells = grid.last_index() - start;
        if points.len() != cells {
            return Err(config(format!(
                "control signal needs {cells} cells on [{t}, T], got {}",
                points.len()
            )));
        }
        if let Some((j, p)) = points.iter().enumerate().find(|(_, p)| !set.contains(p)) {
            return Err(config(format!("control {p:?} on cell {j} is outside the control set")));
        }
        Ok(Self { start, points })
    }

    pub fn constant(grid: &Grid, set: &ControlSet, t: f64, point: &[f64]) -> Result<Self> {
        let start = grid.node_index(t)?;
        Self::new(grid, set, t, vec![point.to_vec(); grid.last_index() - start])
    }

    /// Node index of the signal's start time.
    pub fn start(&self) -> usize {
        self.start
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Control on the cell starting at node `i`.
    pub fn at_node(&self, i: usize) -> &[f64] {
        &self.points[i - self.start]
    }
}
