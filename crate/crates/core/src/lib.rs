//! Subsystem divisions of composite quantum systems.
//!
//! The crate decomposes bipartite Hamiltonians into sums of local products,
//! decides whether an observable is diagonal in a product of local bases,
//! searches for tensor-product structures in which a Hamiltonian carries no
//! interaction, works out the centre-of-mass / relative split of two-body
//! phase space, and checks proposed divisions against exact pure-dephasing
//! dynamics.

pub mod cli;
pub mod decoherence;
pub mod division;
pub mod error;
pub mod linalg;
pub mod random;
pub mod schmidt;
pub mod separability;
pub mod simdiag;
pub mod twobody;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, CompositeOperator, Side, C64};
pub use schmidt::{operator_schmidt, OperatorSchmidtDecomposition};
pub use separability::{is_separable, PointerStructure, SeparabilityVerdict, Tolerances};
