//! Separability of bipartite observables.
//!
//! An observable is separable when it is diagonal in a product of local
//! orthonormal bases. Three characterizations are evaluated independently
//! and cross-checked:
//!
//! * (C) the local factors of its operator Schmidt decomposition commute
//!   pairwise on each side;
//! * (B) there are local bases in which every off-diagonal matrix element
//!   vanishes;
//! * (A) it reconstructs from rank-one product projectors with real
//!   spectral coefficients `a_ij`.
//!
//! Disagreement between them is reported as an [`Error::EquivalenceViolation`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    commutator, conjugate_by_product, hs_norm, max_abs, serde_matrix, serde_matrix_opt, serde_matrix_vec,
    serde_real_matrix_opt, tensor, CMatrix, CompositeOperator, RMatrix, C64,
};
use crate::schmidt::{operator_schmidt, OperatorSchmidtDecomposition};
use crate::simdiag::simultaneous_diagonalize;

/// Comparison tolerances, both relative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub verdict: f64,
    pub recon: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            verdict: 1e-8,
            recon: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionC {
    pub holds: bool,
    pub commutator_defect: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionB {
    pub holds: bool,
    #[serde(with = "serde_matrix")]
    pub local_basis_a: CMatrix,
    #[serde(with = "serde_matrix")]
    pub local_basis_b: CMatrix,
    pub offdiag_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionA {
    pub holds: bool,
    #[serde(with = "crate::linalg::serde_real_matrix")]
    pub spectral_coefficients: RMatrix,
    pub reconstruction_residual: f64,
}

/// Raw outcomes of all three conditions when they disagree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceDiagnostics {
    pub condition_a: ConditionA,
    pub condition_b: ConditionB,
    pub condition_c: ConditionC,
}

impl std::fmt::Display for EquivalenceDiagnostics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "(A) {} [recon {:.3e}], (B) {} [offdiag {:.3e}], (C) {} [defect {:.3e}]",
            self.condition_a.holds,
            self.condition_a.reconstruction_residual,
            self.condition_b.holds,
            self.condition_b.offdiag_residual,
            self.condition_c.holds,
            self.condition_c.commutator_defect
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparabilityVerdict {
    pub separable: bool,
    pub commutator_defect: f64,
    #[serde(with = "serde_matrix_opt")]
    pub local_basis_a: Option<CMatrix>,
    #[serde(with = "serde_matrix_opt")]
    pub local_basis_b: Option<CMatrix>,
    #[serde(with = "serde_real_matrix_opt")]
    pub spectral_coefficients: Option<RMatrix>,
    pub offdiag_residual: f64,
    pub reconstruction_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointerStructure {
    #[serde(with = "serde_matrix_vec")]
    pub sector_projectors: Vec<CMatrix>,
    #[serde(with = "serde_matrix")]
    pub pointer_observable: CMatrix,
    pub sector_dimensions: Vec<usize>,
    /// Local basis columns belonging to each sector.
    pub sector_members: Vec<Vec<usize>>,
    #[serde(with = "serde_matrix")]
    pub local_basis: CMatrix,
}

fn normalized_defect(x: &CMatrix, y: &CMatrix) -> f64 {
    let denom = hs_norm(x) * hs_norm(y);
    if denom == 0.0 {
        return 0.0;
    }
    hs_norm(&commutator(x, y).expect("factors share an order")) / denom
}

fn family_defect(family: &[CMatrix]) -> f64 {
    let mut worst = 0.0f64;
    for (i, x) in family.iter().enumerate() {
        for y in &family[i + 1..] {
            worst = worst.max(normalized_defect(x, y));
        }
    }
    worst
}

/// Condition (C) on a canonical decomposition.
///
/// Commutativity of a family is a property of its linear span, so the
/// pairwise test on any orthonormal basis of a degenerate block decides
/// whether some re-mixing of that block commutes.
pub fn check_condition_c(dec: &OperatorSchmidtDecomposition, tol: &Tolerances) -> Result<ConditionC> {
    if dec.schmidt_rank() == 0 {
        return Err(Error::EmptyDecomposition);
    }
    let defect = family_defect(&dec.factors_a).max(family_defect(&dec.factors_b));
    Ok(ConditionC {
        holds: defect <= tol.verdict,
        commutator_defect: defect,
    })
}

pub fn check_condition_b<R: Rng + ?Sized>(op: &CompositeOperator, rng: &mut R, tol: &Tolerances) -> Result<ConditionB> {
    let dec = operator_schmidt(op)?;
    condition_b_from(op, &dec, rng, tol)
}

fn condition_b_from<R: Rng + ?Sized>(
    op: &CompositeOperator,
    dec: &OperatorSchmidtDecomposition,
    rng: &mut R,
    tol: &Tolerances,
) -> Result<ConditionB> {
    let basis_a = simultaneous_diagonalize(&dec.factors_a, op.dim_a(), rng, tol.verdict);
    let basis_b = simultaneous_diagonalize(&dec.factors_b, op.dim_b(), rng, tol.verdict);
    let rotated = conjugate_by_product(op.matrix(), &basis_a.unitary, &basis_b.unitary)?;

    let n = op.dim();
    let mut residual = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                residual = residual.max(rotated[(i, j)].norm());
            }
        }
    }
    let scale = max_abs(op.matrix());
    Ok(ConditionB {
        holds: residual <= tol.verdict * scale,
        local_basis_a: basis_a.unitary,
        local_basis_b: basis_b.unitary,
        offdiag_residual: residual,
        converged: basis_a.converged && basis_b.converged,
    })
}

/// Product basis projector expansion `sum_ij a_ij P_i (x) Pi_j`.
pub fn spectral_reconstruction(basis_a: &CMatrix, basis_b: &CMatrix, coefficients: &RMatrix) -> CMatrix {
    let (da, db) = (basis_a.ncols(), basis_b.ncols());
    let mut out = CMatrix::zeros(da * db, da * db);
    for i in 0..da {
        let u = basis_a.column(i);
        let p = u * u.adjoint();
        for j in 0..db {
            let v = basis_b.column(j);
            let q = v * v.adjoint();
            out += tensor(&p, &q).scale(coefficients[(i, j)]);
        }
    }
    out
}

pub fn check_condition_a(
    op: &CompositeOperator,
    witnesses: Option<&ConditionB>,
    tol: &Tolerances,
) -> Result<ConditionA> {
    let b = witnesses.ok_or(Error::MissingWitnesses)?;
    let (da, db) = (op.dim_a(), op.dim_b());
    if b.local_basis_a.shape() != (da, da) || b.local_basis_b.shape() != (db, db) {
        return Err(Error::DimensionMismatch(
            "witness bases do not match the operator".into(),
        ));
    }
    let rotated = conjugate_by_product(op.matrix(), &b.local_basis_a, &b.local_basis_b)?;
    let coefficients = RMatrix::from_fn(da, db, |i, j| rotated[(i * db + j, i * db + j)].re);
    let recon = spectral_reconstruction(&b.local_basis_a, &b.local_basis_b, &coefficients);
    let norm = hs_norm(op.matrix());
    let err = hs_norm(&(recon - op.matrix()));
    let relative = if norm == 0.0 { err } else { err / norm };
    Ok(ConditionA {
        holds: relative <= tol.verdict,
        spectral_coefficients: coefficients,
        reconstruction_residual: relative,
    })
}

/// Runs (C), (B) and (A) and insists they agree.
pub fn is_separable<R: Rng + ?Sized>(
    op: &CompositeOperator,
    rng: &mut R,
    tol: &Tolerances,
) -> Result<SeparabilityVerdict> {
    let dec = operator_schmidt(op)?;
    let c = if dec.schmidt_rank() == 0 {
        ConditionC {
            holds: true,
            commutator_defect: 0.0,
        }
    } else {
        check_condition_c(&dec, tol)?
    };
    let b = condition_b_from(op, &dec, rng, tol)?;
    let a = check_condition_a(op, Some(&b), tol)?;

    if !(a.holds == b.holds && b.holds == c.holds) {
        return Err(Error::EquivalenceViolation(Box::new(EquivalenceDiagnostics {
            condition_a: a,
            condition_b: b,
            condition_c: c,
        })));
    }
    let separable = c.holds;
    Ok(SeparabilityVerdict {
        separable,
        commutator_defect: c.commutator_defect,
        offdiag_residual: b.offdiag_residual,
        reconstruction_residual: a.reconstruction_residual,
        local_basis_a: separable.then_some(b.local_basis_a),
        local_basis_b: separable.then_some(b.local_basis_b),
        spectral_coefficients: separable.then_some(a.spectral_coefficients),
    })
}

/// Superselection sectors and pointer observable of a separable interaction.
///
/// Local basis vectors of the first factor join one sector when their rows
/// of spectral coefficients coincide; sectors are ordered by their first
/// basis column.
pub fn extract_pointer_structure<R: Rng + ?Sized>(
    h_int: &CompositeOperator,
    rng: &mut R,
    tol: &Tolerances,
) -> Result<PointerStructure> {
    let verdict = is_separable(h_int, rng, tol)?;
    if !verdict.separable {
        return Err(Error::NonseparableInteraction {
            defect: verdict.commutator_defect,
        });
    }
    let basis = verdict.local_basis_a.expect("separable verdict carries bases");
    let coeffs = verdict
        .spectral_coefficients
        .expect("separable verdict carries coefficients");
    Ok(pointer_from_spectrum(basis, &coeffs, tol))
}

fn pointer_from_spectrum(basis: CMatrix, coeffs: &RMatrix, tol: &Tolerances) -> PointerStructure {
    let (da, db) = coeffs.shape();
    let scale = coeffs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let rows_match =
        |i: usize, k: usize| (0..db).all(|j| (coeffs[(i, j)] - coeffs[(k, j)]).abs() <= tol.verdict * scale);

    let mut members: Vec<Vec<usize>> = Vec::new();
    for i in 0..da {
        match members.iter_mut().find(|m| rows_match(m[0], i)) {
            Some(sector) => sector.push(i),
            None => members.push(vec![i]),
        }
    }

    let projectors: Vec<CMatrix> = members
        .iter()
        .map(|m| {
            let mut p = CMatrix::zeros(da, da);
            for &i in m {
                let u = basis.column(i);
                p += u * u.adjoint();
            }
            p
        })
        .collect();
    let mut pointer = CMatrix::zeros(da, da);
    for (label, p) in projectors.iter().enumerate() {
        pointer += p * C64::new(label as f64, 0.0);
    }
    PointerStructure {
        sector_dimensions: members.iter().map(Vec::len).collect(),
        sector_projectors: projectors,
        pointer_observable: pointer,
        sector_members: members,
        local_basis: basis,
    }
}
