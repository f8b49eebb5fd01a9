//! Simultaneous diagonalization of a family of commuting Hermitian matrices.
//!
//! A random real combination of the family is eigendecomposed; eigenspaces
//! that stay degenerate are refined with a fresh combination of the family
//! restricted to them. Refinement stops after [`MAX_LEVELS`] levels.

use rand::Rng;

use crate::linalg::{hermitian_eig, hs_norm, CMatrix, C64};
use crate::random::gaussian;

pub const MAX_LEVELS: usize = 3;

#[derive(Debug, Clone)]
pub struct JointBasis {
    /// Columns are the joint eigenvectors, canonically ordered and phased.
    pub unitary: CMatrix,
    /// False when some eigenspace was still mixed after [`MAX_LEVELS`] levels.
    pub converged: bool,
}

pub fn simultaneous_diagonalize<R: Rng + ?Sized>(family: &[CMatrix], dim: usize, rng: &mut R, tol: f64) -> JointBasis {
    let scale = family.iter().map(hs_norm).fold(0.0, f64::max);
    let mut columns: Vec<nalgebra::DVector<C64>> = Vec::with_capacity(dim);
    let mut converged = true;
    refine(
        family,
        CMatrix::identity(dim, dim),
        0,
        scale,
        tol,
        rng,
        &mut columns,
        &mut converged,
    );
    JointBasis {
        unitary: canonicalize(columns, dim),
        converged,
    }
}

#[allow(clippy::too_many_arguments)]
fn refine<R: Rng + ?Sized>(
    family: &[CMatrix],
    subspace: CMatrix,
    level: usize,
    scale: f64,
    tol: f64,
    rng: &mut R,
    out: &mut Vec<nalgebra::DVector<C64>>,
    converged: &mut bool,
) {
    let k = subspace.ncols();
    let restricted: Vec<CMatrix> = family
        .iter()
        .map(|f| {
            let r = subspace.adjoint() * f * &subspace;
            (&r + r.adjoint()).scale(0.5)
        })
        .collect();

    let all_scalar = restricted.iter().all(|r| {
        let mean = r.trace() / C64::new(k as f64, 0.0);
        let shifted = r - CMatrix::identity(k, k) * mean;
        hs_norm(&shifted) <= tol * scale
    });
    if k == 1 || all_scalar || scale == 0.0 {
        out.extend(subspace.column_iter().map(|c| c.into_owned()));
        return;
    }
    if level == MAX_LEVELS {
        *converged = false;
        out.extend(subspace.column_iter().map(|c| c.into_owned()));
        return;
    }

    let mut combo = CMatrix::zeros(k, k);
    for r in &restricted {
        combo += r.scale(gaussian(rng));
    }
    let eig = hermitian_eig(&combo).expect("combination of Hermitian matrices is Hermitian");
    let spread = eig.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let gap_tol = tol * spread.max(scale * 1e-3);

    let mut start = 0;
    while start < k {
        let mut end = start + 1;
        while end < k && eig.eigenvalues[end] - eig.eigenvalues[end - 1] <= gap_tol {
            end += 1;
        }
        let cluster = &subspace * eig.eigenvectors.columns(start, end - start);
        if end - start == 1 {
            out.push(cluster.column(0).into_owned());
        } else {
            refine(family, cluster, level + 1, scale, tol, rng, out, converged);
        }
        start = end;
    }
}

/// Orders columns by the index of their dominant component (stable) and
/// rotates each column's dominant component to the positive real axis.
fn canonicalize(columns: Vec<nalgebra::DVector<C64>>, dim: usize) -> CMatrix {
    let mut keyed: Vec<(usize, nalgebra::DVector<C64>)> = columns
        .into_iter()
        .map(|c| {
            let peak = c.iter().fold(0.0f64, |m, z| m.max(z.norm()));
            let lead = c.iter().position(|z| z.norm() >= peak * (1.0 - 1e-9)).unwrap_or(0);
            let phase = c[lead] / c[lead].norm();
            let c = c.map(|z| z / phase);
            (lead, c)
        })
        .collect();
    keyed.sort_by_key(|(lead, _)| *lead);
    let mut u = CMatrix::zeros(dim, keyed.len());
    for (j, (_, c)) in keyed.iter().enumerate() {
        u.set_column(j, c);
    }
    u
}
