use thiserror::Error;

use crate::separability::EquivalenceDiagnostics;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (residual {residual:.3e} exceeds {tolerance:.3e})")]
    NotHermitian { residual: f64, tolerance: f64 },

    #[error("operator Schmidt decomposition is empty")]
    EmptyDecomposition,

    #[error("condition (A) needs the local bases produced by condition (B)")]
    MissingWitnesses,

    #[error("interaction is not separable (commutator defect {defect:.3e})")]
    NonseparableInteraction { defect: f64 },

    #[error("interaction defines a single sector; there is no superselection structure")]
    NoSuperselection,

    #[error("separability conditions disagree: {0}")]
    EquivalenceViolation(Box<EquivalenceDiagnostics>),

    #[error("transform is not symplectic (residual {residual:.3e})")]
    NotSymplectic { residual: f64 },

    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}
