use serde::{Deserialize, Serialize};

use crate::error::{CoxError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    None,
    L1,
    L2,
}

/// Penalty family and strength. `L1` is `λ‖β‖₁`, `L2` is `λ‖β‖₂²/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub lambda: f64,
}

impl PenaltySpec {
    pub const NONE: PenaltySpec = PenaltySpec { kind: PenaltyKind::None, lambda: 0.0 };

    pub fn l1(lambda: f64) -> Self {
        Self { kind: PenaltyKind::L1, lambda }
    }

    pub fn l2(lambda: f64) -> Self {
        Self { kind: PenaltyKind::L2, lambda }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(CoxError::InvalidArgument(format!(
                "penalty lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// A zero-strength penalty of any kind is no penalty.
    pub fn is_none(&self) -> bool {
        self.kind == PenaltyKind::None || self.lambda == 0.0
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self.kind {
            _ if self.is_none() => 0.0,
            PenaltyKind::L1 => self.lambda * x.iter().map(|v| v.abs()).sum::<f64>(),
            PenaltyKind::L2 => 0.5 * self.lambda * x.iter().map(|v| v * v).sum::<f64>(),
            PenaltyKind::None => 0.0,
        }
    }

    /// Proximal operator with step `step`, applied in place.
    pub fn prox(&self, x: &mut [f64], step: f64) {
        if self.is_none() {
            return;
        }
        match self.kind {
            PenaltyKind::L1 => {
                let thr = step * self.lambda;
                for v in x.iter_mut() {
                    *v = soft_threshold(*v, thr);
                }
            }
            PenaltyKind::L2 => {
                let shrink = 1.0 / (1.0 + step * self.lambda);
                x.iter_mut().for_each(|v| *v *= shrink);
            }
            PenaltyKind::None => {}
        }
    }
}

pub(crate) fn soft_threshold(z: f64, thr: f64) -> f64 {
    if z > thr {
        z - thr
    } else if z < -thr {
        z + thr
    } else {
        0.0
    }
}

/// Convergence summary of one optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub converged: bool,
    pub iterations: usize,
    pub final_objective: f64,
    /// Max-norm of the gradient (smooth problems) or of the proximal-gradient
    /// mapping (penalized problems) at exit.
    pub grad_norm_at_exit: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// Objective after each accepted iteration, starting with the initial point.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}
