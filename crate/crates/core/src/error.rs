use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::C64;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("eigensolver did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("singular matrix: pivot {pivot:.3e} below threshold {threshold:.3e}")]
    SingularMatrix { pivot: f64, threshold: f64 },

    #[error("near-singular matrix at z = {z}: {reason}")]
    NearSingular { z: C64, reason: String },

    #[error("eigenvalue location violated: {0}")]
    EigenvalueLocationViolation(String),

    #[error("transition matrix is reducible")]
    Reducible,

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("argument outside domain: {0}")]
    DomainError(String),

    #[error("unsupported law: {0}")]
    UnsupportedLaw(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("evaluation point {point} is within {radius:.1e} of pole {pole}")]
    PoleProximity { point: C64, pole: C64, radius: f64 },

    #[error("series truncation budget exceeded: tail norm {tail_norm:.3e} > tol {tol:.1e} at order {max_order}")]
    TruncationBudgetExceeded { tail_norm: f64, tol: f64, max_order: usize },

    #[error("constraint system is singular (null-space dimension {null_dim})")]
    SingularSystem { null_dim: usize },

    #[error("degenerate spectrum: minimum eigenvalue gap {gap:.3e}")]
    DegenerateSpectrum { gap: f64 },

    #[error("numerical instability: {0}")]
    NumericalInstability(String),

    #[error("maps do not commute or lack a common fixed point: {0}")]
    NonCommutingMaps(String),

    #[error("ill-conditioned system (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },
}

/// Structured, non-fatal diagnostics attached to results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "warning", rename_all = "snake_case")]
pub enum Warning {
    NearDegenerateSpectrum { gap: f64, threshold: f64 },
    IllConditioned { condition: f64 },
    Drift { mean_increment: f64, std_error: f64 },
    ConstraintResidual { residual: f64, bound: f64 },
}

impl Warning {
    pub fn emit(self) -> Self {
        log::warn!("{self:?}");
        self
    }
}
