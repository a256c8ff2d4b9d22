use serde::{Deserialize, Serialize};

use crate::path::Path;

/// Point at which a check failed: the direction `s`, the time `τ` and the
/// extension (or sample path) realizing the violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub s: Vec<f64>,
    pub tau: f64,
    pub path: Path,
}

/// Outcome of a sampled check.
///
/// `margin` is the worst slack found; negative values are violations and the
/// check passes when `margin >= -tol`. A pass means no violation was found at
/// the tolerance, a failure is certified by the witness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub passed: bool,
    pub margin: f64,
    pub tol: f64,
    pub witness: Option<Witness>,
    pub samples_used: usize,
}

impl Verdict {
    pub(crate) fn from_margin(
        margin: f64,
        tol: f64,
        witness: Option<Witness>,
        samples_used: usize,
    ) -> Self {
        let passed = margin >= -tol;
        Self {
            passed,
            margin,
            tol,
            witness: if passed { None } else { witness },
            samples_used,
        }
    }
}

/// Tracks the worst (smallest) slack seen so far together with its witness.
/// Ties keep the earliest sample.
pub(crate) struct Worst {
    pub margin: f64,
    pub witness: Option<Witness>,
    pub samples: usize,
}

impl Worst {
    pub fn new() -> Self {
        Self {
            margin: f64::INFINITY,
            witness: None,
            samples: 0,
        }
    }

    pub fn offer(&mut self, margin: f64, witness: impl FnOnce() -> Witness) {
        self.samples += 1;
        if margin < self.margin || (margin.is_nan() && !self.margin.is_nan()) {
            self.margin = margin;
            self.witness = Some(witness());
        }
    }

    pub fn finish(self, tol: f64) -> Verdict {
        let margin = if self.samples == 0 { 0.0 } else { self.margin };
        Verdict::from_margin(margin, tol, self.witness, self.samples)
    }
}
