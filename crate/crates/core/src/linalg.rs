//! Dense complex-matrix substrate shared by every analysis module.
//!
//! Index convention: in a bipartite space of dimensions `dim_a * dim_b` the
//! first factor is the slow index, so the composite index of `(i, k)` is
//! `i * dim_b + k`. Everything in the crate relies on this.

use nalgebra::Complex;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;
pub type RMatrix = DMatrix<f64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Relative hermiticity tolerance: `max|M - M^dagger| <= tol * (1 + max|M|)`.
pub const HERMITICITY_TOL: f64 = 1e-9;

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn hermiticity_residual(m: &CMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Checks hermiticity within [`HERMITICITY_TOL`] and returns the symmetrized
/// copy `(M + M^dagger) / 2`.
pub fn ensure_hermitian(m: &CMatrix) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let residual = hermiticity_residual(m);
    let tolerance = HERMITICITY_TOL * (1.0 + max_abs(m));
    if residual > tolerance {
        return Err(Error::NotHermitian { residual, tolerance });
    }
    Ok((m + m.adjoint()).scale(0.5))
}

fn ensure_square(m: &CMatrix, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

fn ensure_same_order(a: &CMatrix, b: &CMatrix) -> Result<()> {
    ensure_square(a, "left operand")?;
    ensure_square(b, "right operand")?;
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "orders differ: {} vs {}",
            a.nrows(),
            b.nrows()
        )));
    }
    Ok(())
}

/// Which factor of a bipartite space an operation acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    First,
    Second,
}

/// A Hermitian operator on `C^dim_a (x) C^dim_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OperatorJson", into = "OperatorJson")]
pub struct CompositeOperator {
    dim_a: usize,
    dim_b: usize,
    matrix: CMatrix,
}

impl CompositeOperator {
    /// Validates the declared dimensions and hermiticity; inputs within
    /// tolerance are symmetrized.
    pub fn new(dim_a: usize, dim_b: usize, matrix: CMatrix) -> Result<Self> {
        if dim_a == 0 || dim_b == 0 {
            return Err(Error::DimensionMismatch("factor dimensions must be positive".into()));
        }
        let n = dim_a * dim_b;
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{}, expected order {dim_a}*{dim_b} = {n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let matrix = ensure_hermitian(&matrix)?;
        Ok(CompositeOperator { dim_a, dim_b, matrix })
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn dim(&self) -> usize {
        self.dim_a * self.dim_b
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn scaled(&self, factor: f64) -> CompositeOperator {
        CompositeOperator {
            dim_a: self.dim_a,
            dim_b: self.dim_b,
            matrix: self.matrix.scale(factor),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct OperatorJson {
    dim_a: usize,
    dim_b: usize,
    matrix: MatrixJson,
}

impl TryFrom<OperatorJson> for CompositeOperator {
    type Error = Error;

    fn try_from(value: OperatorJson) -> Result<Self> {
        CompositeOperator::new(value.dim_a, value.dim_b, value.matrix.try_into()?)
    }
}

impl From<CompositeOperator> for OperatorJson {
    fn from(op: CompositeOperator) -> Self {
        OperatorJson {
            dim_a: op.dim_a,
            dim_b: op.dim_b,
            matrix: MatrixJson::from(&op.matrix),
        }
    }
}

/// Kronecker product with `a` as the slow (leftmost) index.
pub fn tensor(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn kron_vectors(a: &CVector, b: &CVector) -> CVector {
    a.kronecker(b)
}

pub fn partial_trace(op: &CompositeOperator, side: Side) -> CMatrix {
    // dimensions are validated at construction
    partial_trace_dims(&op.matrix, op.dim_a, op.dim_b, side).expect("well-formed operator")
}

/// Partial trace of an arbitrary square matrix viewed on `dim_a * dim_b`.
pub fn partial_trace_dims(m: &CMatrix, dim_a: usize, dim_b: usize, side: Side) -> Result<CMatrix> {
    let n = dim_a * dim_b;
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, factors {dim_a}*{dim_b}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(match side {
        Side::Second => CMatrix::from_fn(dim_a, dim_a, |i, j| {
            (0..dim_b).map(|k| m[(i * dim_b + k, j * dim_b + k)]).sum()
        }),
        Side::First => CMatrix::from_fn(dim_b, dim_b, |k, l| {
            (0..dim_a).map(|i| m[(i * dim_b + k, i * dim_b + l)]).sum()
        }),
    })
}

/// Reduced density matrix of the first factor for a pure state.
pub fn reduced_density_first(state: &CVector, dim_a: usize, dim_b: usize) -> Result<CMatrix> {
    if state.len() != dim_a * dim_b {
        return Err(Error::DimensionMismatch(format!(
            "state has length {}, expected {dim_a}*{dim_b}",
            state.len()
        )));
    }
    // row i of psi holds amplitudes (i, 0..dim_b)
    let psi = CMatrix::from_fn(dim_a, dim_b, |i, k| state[i * dim_b + k]);
    Ok(&psi * psi.adjoint())
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    ensure_same_order(a, b)?;
    Ok(a * b - b * a)
}

/// Hilbert-Schmidt inner product `tr(a^dagger b)`.
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> Result<C64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum())
}

pub fn hs_norm(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Spectral decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigensystem {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: CMatrix,
}

impl HermitianEigensystem {
    pub fn reconstruct(&self) -> CMatrix {
        let v = &self.eigenvectors;
        let scaled = CMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * self.eigenvalues[j]);
        scaled * v.adjoint()
    }

    /// `max|V^dagger V - I|`.
    pub fn unitarity_residual(&self) -> f64 {
        let v = &self.eigenvectors;
        let gram = v.adjoint() * v;
        max_abs(&(gram - CMatrix::identity(v.ncols(), v.ncols())))
    }
}

pub fn hermitian_eig(a: &CMatrix) -> Result<HermitianEigensystem> {
    let h = ensure_hermitian(a)?;
    let n = h.nrows();

    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || h[(i, j)] == ZERO));
    let (values, vectors) = if diagonal {
        let values = DVector::from_fn(n, |i, _| h[(i, i)].re);
        (values, CMatrix::identity(n, n))
    } else {
        let f = faer::Mat::<faer::c64>::from_fn(n, n, |i, j| {
            let z = h[(i, j)];
            faer::c64::new(z.re, z.im)
        });
        let eig = f
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| Error::InvalidInput(format!("eigendecomposition failed: {e:?}")))?;
        let (s, u) = (eig.S(), eig.U());
        let values = DVector::from_fn(n, |i, _| s[i].re);
        let vectors = CMatrix::from_fn(n, n, |i, j| {
            let z = u[(i, j)];
            C64::new(z.re, z.im)
        });
        (values, vectors)
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| values[x].total_cmp(&values[y]));
    let eigenvalues = DVector::from_fn(n, |i, _| values[order[i]]);
    let eigenvectors = CMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);
    Ok(HermitianEigensystem {
        eigenvalues,
        eigenvectors,
    })
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a real symmetric
/// matrix. Already-diagonal input returns the identity basis.
pub fn real_symmetric_eig(a: &RMatrix) -> Result<(Vec<f64>, RMatrix)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!("{}x{} is not square", n, a.ncols())));
    }
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if (0..n).any(|i| (0..i).any(|j| (a[(i, j)] - a[(j, i)]).abs() > HERMITICITY_TOL * (1.0 + scale))) {
        return Err(Error::InvalidInput("matrix is not symmetric".into()));
    }
    if (0..n).all(|i| (0..n).all(|j| i == j || a[(i, j)] == 0.0)) {
        return Ok(((0..n).map(|i| a[(i, i)]).collect(), RMatrix::identity(n, n)));
    }
    let f = faer::Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let eig = f
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::InvalidInput(format!("eigendecomposition failed: {e:?}")))?;
    let (s, u) = (eig.S(), eig.U());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| s[x].total_cmp(&s[y]));
    Ok((
        order.iter().map(|&k| s[k]).collect(),
        RMatrix::from_fn(n, n, |i, j| u[(i, order[j])]),
    ))
}

/// `exp(i t G)` for Hermitian `G`.
pub fn exp_i_hermitian(g: &CMatrix, t: f64) -> Result<CMatrix> {
    let eig = hermitian_eig(g)?;
    let v = &eig.eigenvectors;
    let phased = CMatrix::from_fn(v.nrows(), v.ncols(), |i, j| {
        v[(i, j)] * C64::from_polar(1.0, t * eig.eigenvalues[j])
    });
    Ok(phased * v.adjoint())
}

/// Thin singular value decomposition `M = U diag(s) V^T` of a real matrix,
/// singular values descending.
pub fn real_thin_svd(m: &RMatrix) -> Result<(RMatrix, Vec<f64>, RMatrix)> {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Ok((RMatrix::zeros(rows, 0), Vec::new(), RMatrix::zeros(cols, 0)));
    }
    let f = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let svd = f
        .thin_svd()
        .map_err(|e| Error::InvalidInput(format!("singular value decomposition failed: {e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S(), svd.V());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| s[y].total_cmp(&s[x]));
    Ok((
        RMatrix::from_fn(rows, k, |i, j| u[(i, order[j])]),
        order.iter().map(|&j| s[j]).collect(),
        RMatrix::from_fn(cols, k, |i, j| v[(i, order[j])]),
    ))
}

fn is_identity(m: &CMatrix) -> bool {
    let n = m.nrows();
    m.is_square()
        && (0..n).all(|i| {
            (0..n).all(|j| {
                let target = if i == j { ONE } else { ZERO };
                (m[(i, j)] - target).norm() <= 1e-15
            })
        })
}

/// `(U_a (x) U_b)^dagger H (U_a (x) U_b)` without forming the Kronecker
/// product. Factors that are the identity are skipped.
pub fn conjugate_by_product(h: &CMatrix, ua: &CMatrix, ub: &CMatrix) -> Result<CMatrix> {
    let da = ua.nrows();
    let db = ub.nrows();
    ensure_square(ua, "factor-1 unitary")?;
    ensure_square(ub, "factor-2 unitary")?;
    let n = da * db;
    if h.nrows() != n || h.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "operator of order {} cannot be conjugated by a {da}x{db} product",
            h.nrows()
        )));
    }

    let mut x = h.clone();
    if !is_identity(ub) {
        let ub_dag = ub.adjoint();
        for i in 0..da {
            for j in 0..da {
                let block = &ub_dag * x.view((i * db, j * db), (db, db)) * ub;
                x.view_mut((i * db, j * db), (db, db)).copy_from(&block);
            }
        }
    }
    if !is_identity(ua) {
        let mut z = CMatrix::zeros(n, n);
        for i in 0..da {
            for k in 0..db {
                for c in 0..n {
                    let mut acc = ZERO;
                    for p in 0..da {
                        acc += ua[(p, i)].conj() * x[(p * db + k, c)];
                    }
                    z[(i * db + k, c)] = acc;
                }
            }
        }
        for r in 0..n {
            for j in 0..da {
                for l in 0..db {
                    let mut acc = ZERO;
                    for q in 0..da {
                        acc += z[(r, q * db + l)] * ua[(q, j)];
                    }
                    x[(r, j * db + l)] = acc;
                }
            }
        }
    }
    Ok(x)
}

/// Von Neumann entropy in nats of a density matrix.
pub fn von_neumann_entropy(rho: &CMatrix) -> Result<f64> {
    let eig = hermitian_eig(rho)?;
    Ok(eig
        .eigenvalues
        .iter()
        .filter(|&&p| p > 1e-300)
        .map(|&p| -p * p.ln())
        .sum::<f64>()
        .max(0.0))
}

pub mod pauli {
    use super::{CMatrix, C64};

    pub fn x() -> CMatrix {
        CMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(0.0, 0.0),
                C64::new(1.0, 0.0),
                C64::new(1.0, 0.0),
                C64::new(0.0, 0.0),
            ],
        )
    }

    pub fn y() -> CMatrix {
        CMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(0.0, 0.0),
                C64::new(0.0, -1.0),
                C64::new(0.0, 1.0),
                C64::new(0.0, 0.0),
            ],
        )
    }

    pub fn z() -> CMatrix {
        CMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(1.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(-1.0, 0.0),
            ],
        )
    }

    pub fn identity(n: usize) -> CMatrix {
        CMatrix::identity(n, n)
    }
}

pub fn real_diag(values: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(
        values.len(),
        values.iter().map(|&v| C64::new(v, 0.0)),
    ))
}

/// Wire format for complex matrices: row-major real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&CMatrix> for MatrixJson {
    fn from(m: &CMatrix) -> Self {
        let (rows, cols) = m.shape();
        let mut re = Vec::with_capacity(rows * cols);
        let mut im = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        MatrixJson { rows, cols, re, im }
    }
}

impl TryFrom<MatrixJson> for CMatrix {
    type Error = Error;

    fn try_from(value: MatrixJson) -> Result<Self> {
        let len = value.rows * value.cols;
        if value.re.len() != len || value.im.len() != len {
            return Err(Error::InvalidInput(format!(
                "matrix declares {}x{} but carries {} real and {} imaginary entries",
                value.rows,
                value.cols,
                value.re.len(),
                value.im.len()
            )));
        }
        Ok(CMatrix::from_fn(value.rows, value.cols, |i, j| {
            let k = i * value.cols + j;
            C64::new(value.re[k], value.im[k])
        }))
    }
}

/// `#[serde(with = ...)]` adaptor for [`CMatrix`] fields.
pub mod serde_matrix {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::{CMatrix, MatrixJson};

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> Result<S::Ok, S::Error> {
        MatrixJson::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMatrix, D::Error> {
        let json = MatrixJson::deserialize(d)?;
        CMatrix::try_from(json).map_err(serde::de::Error::custom)
    }
}

pub mod serde_matrix_vec {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::{CMatrix, MatrixJson};

    pub fn serialize<S: Serializer>(ms: &[CMatrix], s: S) -> Result<S::Ok, S::Error> {
        ms.iter().map(MatrixJson::from).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMatrix>, D::Error> {
        Vec::<MatrixJson>::deserialize(d)?
            .into_iter()
            .map(|j| CMatrix::try_from(j).map_err(serde::de::Error::custom))
            .collect()
    }
}

pub mod serde_matrix_opt {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::{CMatrix, MatrixJson};

    pub fn serialize<S: Serializer>(m: &Option<CMatrix>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(MatrixJson::from).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<CMatrix>, D::Error> {
        Option::<MatrixJson>::deserialize(d)?
            .map(|j| CMatrix::try_from(j).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// Real matrices serialize as an array of rows.
pub mod serde_real_matrix {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::RMatrix;

    pub fn to_rows(m: &RMatrix) -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<RMatrix, String> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err("ragged matrix rows".into());
        }
        Ok(RMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &RMatrix, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RMatrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub mod serde_real_matrix_opt {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::serde_real_matrix::{from_rows, to_rows};
    use super::RMatrix;

    pub fn serialize<S: Serializer>(m: &Option<RMatrix>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<RMatrix>, D::Error> {
        Option::<Vec<Vec<f64>>>::deserialize(d)?
            .map(|rows| from_rows(&rows).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// State vectors serialize as `[[re, im], ...]`.
pub mod serde_state {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::{CVector, C64};

    pub fn to_pairs(v: &CVector) -> Vec<[f64; 2]> {
        v.iter().map(|z| [z.re, z.im]).collect()
    }

    pub fn from_pairs(pairs: &[[f64; 2]]) -> CVector {
        CVector::from_iterator(pairs.len(), pairs.iter().map(|p| C64::new(p[0], p[1])))
    }

    pub fn serialize<S: Serializer>(v: &CVector, s: S) -> Result<S::Ok, S::Error> {
        to_pairs(v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CVector, D::Error> {
        Ok(from_pairs(&Vec::<[f64; 2]>::deserialize(d)?))
    }
}

pub mod serde_state_vec {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::serde_state::{from_pairs, to_pairs};
    use super::CVector;

    pub fn serialize<S: Serializer>(vs: &[CVector], s: S) -> Result<S::Ok, S::Error> {
        vs.iter().map(to_pairs).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CVector>, D::Error> {
        Ok(Vec::<Vec<[f64; 2]>>::deserialize(d)?
            .iter()
            .map(|p| from_pairs(p))
            .collect())
    }
}
