//! Operator Schmidt decomposition over Hermitian operator bases.
//!
//! A Hermitian operator on `C^da (x) C^db` is expanded in the real vector
//! space spanned by products of orthonormal Hermitian bases of the two
//! factors. The coordinate matrix ("realignment") is real, and its singular
//! value decomposition yields `H = sum_i s_i B_i (x) C_i` with Hermitian,
//! Hilbert-Schmidt orthonormal `B_i`, `C_i` and `s_i > 0` descending.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    hs_inner, max_abs, real_thin_svd, serde_matrix_vec, tensor, CMatrix, CompositeOperator, RMatrix, C64,
};

/// Coefficients at or below `RANK_CUT * largest` are discarded.
pub const RANK_CUT: f64 = 1e-10;

/// Relative spacing below which two coefficients share a degenerate block.
pub const DEGENERACY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSchmidtDecomposition {
    pub dim_a: usize,
    pub dim_b: usize,
    pub coefficients: Vec<f64>,
    #[serde(with = "serde_matrix_vec")]
    pub factors_a: Vec<CMatrix>,
    #[serde(with = "serde_matrix_vec")]
    pub factors_b: Vec<CMatrix>,
}

impl OperatorSchmidtDecomposition {
    pub fn schmidt_rank(&self) -> usize {
        self.coefficients.len()
    }

    pub fn reconstruct(&self) -> CMatrix {
        let n = self.dim_a * self.dim_b;
        let mut out = CMatrix::zeros(n, n);
        for ((s, a), b) in self.coefficients.iter().zip(&self.factors_a).zip(&self.factors_b) {
            out += tensor(a, b).scale(*s);
        }
        out
    }

    /// Index ranges of coefficients equal within [`DEGENERACY_TOL`].
    pub fn degenerate_blocks(&self) -> Vec<std::ops::Range<usize>> {
        let scale = self.coefficients.first().copied().unwrap_or(0.0);
        let mut blocks = Vec::new();
        let mut start = 0;
        for i in 1..=self.coefficients.len() {
            let split = i == self.coefficients.len()
                || self.coefficients[i - 1] - self.coefficients[i] > DEGENERACY_TOL * scale;
            if split {
                blocks.push(start..i);
                start = i;
            }
        }
        blocks
    }
}

/// Number of Hermitian basis elements for a `d`-dimensional factor.
fn basis_len(d: usize) -> usize {
    d * d
}

/// Off-diagonal pair `(j, k)` with `j < k` for basis index `d + 2p` / `d + 2p + 1`.
fn offdiag_pairs(d: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(d * (d - 1) / 2);
    for j in 0..d {
        for k in (j + 1)..d {
            pairs.push((j, k));
        }
    }
    pairs
}

/// Orthonormal Hermitian operator basis of `d x d` matrices: the diagonal
/// units first, then for each `j < k` the symmetric `(E_jk + E_kj)/sqrt2`
/// followed by the antisymmetric `(-i E_jk + i E_kj)/sqrt2`.
pub fn hermitian_basis(d: usize) -> Vec<CMatrix> {
    (0..basis_len(d))
        .map(|alpha| {
            let mut coords = vec![0.0; basis_len(d)];
            coords[alpha] = 1.0;
            from_coordinates(&coords, d)
        })
        .collect()
}

/// Coordinates `tr(E_alpha X)` of a `d x d` matrix in [`hermitian_basis`].
/// Complex in general; real for Hermitian `X`.
fn coordinates<F: Fn(usize, usize) -> C64>(entry: F, d: usize, pairs: &[(usize, usize)]) -> Vec<C64> {
    let mut out = Vec::with_capacity(basis_len(d));
    for k in 0..d {
        out.push(entry(k, k));
    }
    for &(j, k) in pairs {
        let xjk = entry(j, k);
        let xkj = entry(k, j);
        out.push((xkj + xjk) * FRAC_1_SQRT_2);
        out.push((xjk - xkj) * C64::new(0.0, FRAC_1_SQRT_2));
    }
    out
}

/// Inverse of [`coordinates`] for real coordinate vectors.
fn from_coordinates(coords: &[f64], d: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    for k in 0..d {
        m[(k, k)] = C64::new(coords[k], 0.0);
    }
    for (p, (j, k)) in offdiag_pairs(d).into_iter().enumerate() {
        let s = coords[d + 2 * p];
        let a = coords[d + 2 * p + 1];
        m[(j, k)] = C64::new(s, -a) * FRAC_1_SQRT_2;
        m[(k, j)] = C64::new(s, a) * FRAC_1_SQRT_2;
    }
    m
}

/// The `da^2 x db^2` real coordinate matrix `R[alpha, beta] = tr((E_alpha (x) F_beta) H)`.
pub fn realign(op: &CompositeOperator) -> RMatrix {
    let (da, db) = (op.dim_a(), op.dim_b());
    let h = op.matrix();
    let pairs_a = offdiag_pairs(da);
    let pairs_b = offdiag_pairs(db);

    // tr((E (x) F) H) = sum_ij E[j,i] tr(F H_ij) where H_ij is the (i,j) block
    let mut block_coords: Vec<Vec<C64>> = Vec::with_capacity(da * da);
    for i in 0..da {
        for j in 0..da {
            block_coords.push(coordinates(|k, l| h[(i * db + k, j * db + l)], db, &pairs_b));
        }
    }

    let mut r = RMatrix::zeros(basis_len(da), basis_len(db));
    for beta in 0..basis_len(db) {
        let col = coordinates(|i, j| block_coords[i * da + j][beta], da, &pairs_a);
        for (alpha, v) in col.into_iter().enumerate() {
            r[(alpha, beta)] = v.re;
        }
    }
    r
}

pub fn operator_schmidt(op: &CompositeOperator) -> Result<OperatorSchmidtDecomposition> {
    let (da, db) = (op.dim_a(), op.dim_b());
    if !op.matrix().iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::InvalidInput("operator has non-finite entries".into()));
    }
    let r = realign(op);
    if max_abs(op.matrix()) == 0.0 {
        return Ok(OperatorSchmidtDecomposition {
            dim_a: da,
            dim_b: db,
            coefficients: Vec::new(),
            factors_a: Vec::new(),
            factors_b: Vec::new(),
        });
    }

    let (u, sigma, v) = real_thin_svd(&r)?;
    let largest = sigma[0];

    struct Term {
        coefficient: f64,
        coords_a: Vec<f64>,
        coords_b: Vec<f64>,
    }

    let mut terms: Vec<Term> = (0..sigma.len())
        .filter(|&k| sigma[k] > RANK_CUT * largest)
        .map(|k| {
            let mut coords_a: Vec<f64> = u.column(k).iter().copied().collect();
            let mut coords_b: Vec<f64> = v.column(k).iter().copied().collect();
            // joint sign: first significant coordinate of the factor-1 side positive
            let peak = coords_a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if let Some(first) = coords_a.iter().find(|x| x.abs() > 1e-8 * peak) {
                if *first < 0.0 {
                    coords_a.iter_mut().for_each(|x| *x = -*x);
                    coords_b.iter_mut().for_each(|x| *x = -*x);
                }
            }
            Term {
                coefficient: sigma[k],
                coords_a,
                coords_b,
            }
        })
        .collect();

    // deterministic order inside degenerate blocks: descending lexicographic
    // on the factor-1 coordinates
    let mut start = 0;
    while start < terms.len() {
        let mut end = start + 1;
        while end < terms.len() && terms[end - 1].coefficient - terms[end].coefficient <= DEGENERACY_TOL * largest {
            end += 1;
        }
        terms[start..end].sort_by(|x, y| {
            for (a, b) in x.coords_a.iter().zip(&y.coords_a) {
                if (a - b).abs() > 1e-12 {
                    return b.total_cmp(a);
                }
            }
            std::cmp::Ordering::Equal
        });
        start = end;
    }

    Ok(OperatorSchmidtDecomposition {
        dim_a: da,
        dim_b: db,
        coefficients: terms.iter().map(|t| t.coefficient).collect(),
        factors_a: terms.iter().map(|t| from_coordinates(&t.coords_a, da)).collect(),
        factors_b: terms.iter().map(|t| from_coordinates(&t.coords_b, db)).collect(),
    })
}

/// Largest `|<X_i, X_j> - delta_ij|` over a family.
pub fn gram_residual(family: &[CMatrix]) -> f64 {
    let mut worst = 0.0f64;
    for (i, x) in family.iter().enumerate() {
        for (j, y) in family.iter().enumerate().skip(i) {
            let target = if i == j { 1.0 } else { 0.0 };
            let g = hs_inner(x, y).expect("family members share an order");
            worst = worst.max((g - C64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Singular values of the realignment, descending; exposed for callers that
/// want the spectrum without the factors.
pub fn schmidt_coefficients(op: &CompositeOperator) -> Result<Vec<f64>> {
    Ok(real_thin_svd(&realign(op))?.1)
}
