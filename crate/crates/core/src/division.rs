//! Tensor-product structures in which a Hamiltonian is additive.
//!
//! A structure is a factorization `d = d_a * d_b` together with a global
//! unitary `U` taking the abstract space to the reference product basis.
//! A Hamiltonian `H` is additive in it when `U H U^dag = h_a (x) I + I (x) h_b`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    commutator, exp_i_hermitian, hermitian_eig, hs_inner, hs_norm, partial_trace_dims, reduced_density_first,
    serde_matrix, tensor, von_neumann_entropy, CMatrix, CVector, Side, C64,
};
use crate::random::random_unitary;
use crate::separability::{is_separable, SeparabilityVerdict, Tolerances};
use crate::CompositeOperator;

/// Relative residual below which a division is accepted.
pub const ADDITIVE_TOL: f64 = 1e-8;

/// Relative tolerance for matching eigenvalues against sums `a_i + b_j`.
pub const SPECTRUM_MATCH_TOL: f64 = 1e-8;

pub const DEFAULT_RESTARTS: usize = 8;

const DESCENT_ITERATIONS: usize = 3000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorProductStructure {
    pub dim_a: usize,
    pub dim_b: usize,
    #[serde(with = "serde_matrix")]
    pub global_unitary: CMatrix,
    pub label: String,
}

impl TensorProductStructure {
    pub fn new(dim_a: usize, dim_b: usize, global_unitary: CMatrix, label: impl Into<String>) -> Result<Self> {
        let d = dim_a * dim_b;
        if dim_a == 0 || dim_b == 0 {
            return Err(Error::DimensionMismatch("factor dimensions must be positive".into()));
        }
        if global_unitary.nrows() != d || global_unitary.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "unitary is {}x{}, factors {dim_a}*{dim_b}",
                global_unitary.nrows(),
                global_unitary.ncols()
            )));
        }
        let defect = hs_norm(&(global_unitary.adjoint() * &global_unitary - CMatrix::identity(d, d)));
        if defect > 1e-10 * (d as f64).sqrt() {
            return Err(Error::InvalidInput(format!(
                "global unitary is not unitary (defect {defect:.3e})"
            )));
        }
        Ok(Self {
            dim_a,
            dim_b,
            global_unitary,
            label: label.into(),
        })
    }

    /// The reference factorization itself.
    pub fn identity(dim_a: usize, dim_b: usize) -> Self {
        let d = dim_a * dim_b;
        Self {
            dim_a,
            dim_b,
            global_unitary: CMatrix::identity(d, d),
            label: "reference".into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim_a * self.dim_b
    }

    /// `U H U^dag`: the operator in the product coordinates of this structure.
    pub fn to_product_frame(&self, h: &CMatrix) -> CMatrix {
        &self.global_unitary * h * self.global_unitary.adjoint()
    }

    /// `U^dag X U`: an operator given in product coordinates, pulled back.
    pub fn from_product_frame(&self, x: &CMatrix) -> CMatrix {
        self.global_unitary.adjoint() * x * &self.global_unitary
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "operator of order {n} against structure {}*{}",
                self.dim_a, self.dim_b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveDivision {
    pub tps: TensorProductStructure,
    #[serde(with = "serde_matrix")]
    pub h_a: CMatrix,
    #[serde(with = "serde_matrix")]
    pub h_b: CMatrix,
    pub residual: f64,
}

impl AdditiveDivision {
    /// `h_a (x) I + I (x) h_b` in product coordinates.
    pub fn additive_part(&self) -> CMatrix {
        let (da, db) = (self.tps.dim_a, self.tps.dim_b);
        tensor(&self.h_a, &CMatrix::identity(db, db)) + tensor(&CMatrix::identity(da, da), &self.h_b)
    }
}

/// Orthogonal projection of `m` onto `{X (x) I + I (x) Y}`, returned as
/// `(x, y)` with the identity component assigned to `x`.
pub fn additive_components(m: &CMatrix, da: usize, db: usize) -> Result<(CMatrix, CMatrix)> {
    let d = (da * db) as f64;
    let mut x = partial_trace_dims(m, da, db, Side::Second)?.unscale(db as f64);
    let mut y = partial_trace_dims(m, da, db, Side::First)?.unscale(da as f64);
    let mean = m.trace() / C64::new(d, 0.0);
    for k in 0..db {
        y[(k, k)] -= mean;
    }
    // keep both Hermitian to rounding
    x = (&x + x.adjoint()).scale(0.5);
    y = (&y + y.adjoint()).scale(0.5);
    Ok((x, y))
}

fn additive_projection(m: &CMatrix, da: usize, db: usize) -> CMatrix {
    let (x, y) = additive_components(m, da, db).expect("dimensions checked by caller");
    tensor(&x, &CMatrix::identity(db, db)) + tensor(&CMatrix::identity(da, da), &y)
}

pub fn interaction_residual(h: &CMatrix, tps: &TensorProductStructure) -> Result<f64> {
    tps.check_dim(h.nrows())?;
    let norm = hs_norm(h);
    if norm == 0.0 {
        return Ok(0.0);
    }
    let hp = tps.to_product_frame(h);
    let interaction = &hp - additive_projection(&hp, tps.dim_a, tps.dim_b);
    Ok(hs_norm(&interaction) / norm)
}

/// Splits `a_i + b_j` out of an ascending spectrum, with `a[0] = 0` and the
/// lexicographically smallest admissible `a`. `None` when no split exists.
pub fn spectrum_sum_decomposition(eigenvalues: &[f64], da: usize, db: usize) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    if da == 0 || db == 0 || eigenvalues.len() != da * db {
        return Err(Error::DimensionMismatch(format!(
            "{} eigenvalues for factors {da}*{db}",
            eigenvalues.len()
        )));
    }
    let mut sorted = eigenvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let spread = sorted[sorted.len() - 1] - sorted[0];
    let scale = sorted.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = SPECTRUM_MATCH_TOL * spread + 1e-14 * scale.max(1.0);

    let mut search = SumSearch {
        da,
        db,
        tol,
        a: vec![0.0],
        b: vec![sorted[0]],
    };
    let mut remaining = sorted;
    remaining.remove(0);
    if search.extend(&remaining) {
        Ok(Some((search.a, search.b)))
    } else {
        Ok(None)
    }
}

struct SumSearch {
    da: usize,
    db: usize,
    tol: f64,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl SumSearch {
    fn extend(&mut self, remaining: &[f64]) -> bool {
        let Some(&r) = remaining.first() else {
            return self.a.len() == self.da && self.b.len() == self.db;
        };
        if self.a.len() < self.da {
            let candidate = r - self.b[0];
            let sums: Vec<f64> = self.b.iter().map(|b| candidate + b).collect();
            if let Some(rest) = remove_matches(remaining, &sums, self.tol) {
                self.a.push(candidate);
                if self.extend(&rest) {
                    return true;
                }
                self.a.pop();
            }
        }
        if self.b.len() < self.db {
            let candidate = r - self.a[0];
            let sums: Vec<f64> = self.a.iter().map(|a| a + candidate).collect();
            if let Some(rest) = remove_matches(remaining, &sums, self.tol) {
                self.b.push(candidate);
                if self.extend(&rest) {
                    return true;
                }
                self.b.pop();
            }
        }
        false
    }
}

/// Removes one element within `tol` of each target from a sorted multiset.
fn remove_matches(sorted: &[f64], targets: &[f64], tol: f64) -> Option<Vec<f64>> {
    let mut used = vec![false; sorted.len()];
    for &t in targets {
        let start = sorted.partition_point(|&x| x < t - tol);
        let slot = (start..sorted.len())
            .take_while(|&k| sorted[k] <= t + tol)
            .find(|&k| !used[k])?;
        used[slot] = true;
    }
    Some(sorted.iter().zip(&used).filter(|(_, &u)| !u).map(|(&x, _)| x).collect())
}

fn division_from(h: &CMatrix, tps: TensorProductStructure, residual: f64) -> AdditiveDivision {
    let hp = tps.to_product_frame(h);
    let (h_a, h_b) = additive_components(&hp, tps.dim_a, tps.dim_b).expect("dimensions checked by caller");
    AdditiveDivision {
        tps,
        h_a,
        h_b,
        residual,
    }
}

fn check_factors(h: &CMatrix, da: usize, db: usize) -> Result<()> {
    if h.nrows() != h.ncols() || h.nrows() != da * db || da == 0 || db == 0 {
        return Err(Error::DimensionMismatch(format!(
            "operator of order {} does not factor as {da}*{db}",
            h.nrows()
        )));
    }
    Ok(())
}

pub fn find_additive_tps(h: &CMatrix, da: usize, db: usize) -> Result<Option<AdditiveDivision>> {
    check_factors(h, da, db)?;
    let reference = TensorProductStructure::identity(da, db);
    let r0 = interaction_residual(h, &reference)?;
    if r0 <= ADDITIVE_TOL {
        return Ok(Some(division_from(h, reference, r0)));
    }

    let eig = hermitian_eig(h)?;
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let Some((a, b)) = spectrum_sum_decomposition(&values, da, db)? else {
        return Ok(None);
    };

    // pair product indices, ordered by their target sum, with ascending eigenvalues
    let mut slots: Vec<(usize, f64)> = (0..da)
        .flat_map(|i| b.iter().enumerate().map(move |(j, bj)| (i * db + j, bj)))
        .map(|(slot, bj)| (slot, a[slot / db] + bj))
        .collect();
    slots.sort_by(|x, y| x.1.total_cmp(&y.1));
    let d = da * db;
    let mut w = CMatrix::zeros(d, d);
    for (rank, (slot, _)) in slots.iter().enumerate() {
        w.set_column(*slot, &eig.eigenvectors.column(rank));
    }
    let tps = TensorProductStructure {
        dim_a: da,
        dim_b: db,
        global_unitary: w.adjoint(),
        label: "spectral".into(),
    };
    let residual = interaction_residual(h, &tps)?;
    if residual <= ADDITIVE_TOL {
        Ok(Some(division_from(h, tps, residual)))
    } else {
        Ok(None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedStructure {
    pub tps: TensorProductStructure,
    pub residual: f64,
    pub restart: usize,
}

/// Multi-restart Riemannian descent of the interaction residual over global
/// unitaries. Restart 0 starts at the reference structure, the others at
/// seeded random unitaries.
pub fn optimize_tps(h: &CMatrix, da: usize, db: usize, restarts: usize, seed: u64) -> Result<OptimizedStructure> {
    check_factors(h, da, db)?;
    let reference = TensorProductStructure::identity(da, db);
    let r0 = interaction_residual(h, &reference)?;
    if r0 <= ADDITIVE_TOL || hs_norm(h) == 0.0 {
        return Ok(OptimizedStructure {
            tps: reference,
            residual: r0,
            restart: 0,
        });
    }
    let d = da * db;
    let runs: Vec<(usize, CMatrix, f64)> = (0..restarts.max(1))
        .into_par_iter()
        .map(|k| {
            let start = if k == 0 {
                CMatrix::identity(d, d)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                random_unitary(d, &mut rng)
            };
            let (u, f) = descend(h, da, db, start);
            (k, u, f)
        })
        .collect();

    let (restart, u, _) = runs
        .into_iter()
        .min_by(|x, y| x.2.total_cmp(&y.2).then(x.0.cmp(&y.0)))
        .expect("at least one restart");
    let tps = TensorProductStructure {
        dim_a: da,
        dim_b: db,
        global_unitary: u,
        label: format!("optimized-{restart}"),
    };
    let residual = interaction_residual(h, &tps)?;
    if residual < r0 {
        Ok(OptimizedStructure { tps, residual, restart })
    } else {
        Ok(OptimizedStructure {
            tps: reference,
            residual: r0,
            restart: 0,
        })
    }
}

/// Squared relative residual and the interaction part of `U H U^dag`.
fn objective(h: &CMatrix, u: &CMatrix, da: usize, db: usize, norm2: f64) -> (f64, CMatrix, CMatrix) {
    let hp = u * h * u.adjoint();
    let r = &hp - additive_projection(&hp, da, db);
    let f = r.norm_squared() / norm2;
    (f, hp, r)
}

/// Riemannian gradient of the squared residual at `U`: moving along
/// `exp(-i t K) U` changes it at rate `-2 tr(K G) / |H|^2` with `G = i[H', R]`.
fn riemannian_gradient(hp: &CMatrix, r: &CMatrix) -> CMatrix {
    let g = (hp * r - r * hp) * C64::new(0.0, 1.0);
    (&g + g.adjoint()).scale(0.5)
}

/// Polak-Ribiere conjugate gradient in the left-trivialized Lie algebra,
/// where directions at different points share one frame and need no transport.
fn descend(h: &CMatrix, da: usize, db: usize, start: CMatrix) -> (CMatrix, f64) {
    let norm2 = h.norm_squared();
    let mut u = start;
    let (mut f, mut hp, mut r) = objective(h, &u, da, db, norm2);
    let mut g = riemannian_gradient(&hp, &r);
    let mut direction = g.clone();
    let mut step = 0.1 / norm2.sqrt();
    for _ in 0..DESCENT_ITERATIONS {
        if f < 1e-26 {
            break;
        }
        // rate of change along exp(-i t K) U is -2 tr(K G) / |H|^2
        let mut slope = 2.0 * hs_inner(&direction, &g).expect("same order").re / norm2;
        if slope <= 0.0 {
            direction = g.clone();
            slope = 2.0 * g.norm_squared() / norm2;
        }
        if slope < 1e-30 {
            break;
        }
        let mut accepted = false;
        while step > 1e-16 {
            let rotation = exp_i_hermitian(&direction, -step).expect("direction is Hermitian");
            let trial = &rotation * &u;
            let (ft, hpt, rt) = objective(h, &trial, da, db, norm2);
            if ft <= f - 1e-4 * step * slope {
                u = trial;
                (f, hp, r) = (ft, hpt, rt);
                accepted = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        let g_new = riemannian_gradient(&hp, &r);
        let beta = (hs_inner(&g_new, &(&g_new - &g)).expect("same order").re / g.norm_squared()).max(0.0);
        direction = &g_new + direction.scale(beta);
        g = g_new;
    }
    (u, f)
}

/// Normalized commutator `|[L1, L2]| / (|L1| |L2|)` of two factor-1
/// observables, each lifted through its own structure.
pub fn cross_division_commutator_defect(
    obs_a: &CMatrix,
    tps1: &TensorProductStructure,
    obs_d: &CMatrix,
    tps2: &TensorProductStructure,
) -> Result<f64> {
    if tps1.dim() != tps2.dim() {
        return Err(Error::DimensionMismatch(format!(
            "structures of order {} and {}",
            tps1.dim(),
            tps2.dim()
        )));
    }
    let l1 = lift_first(obs_a, tps1)?;
    let l2 = lift_first(obs_d, tps2)?;
    let (n1, n2) = (hs_norm(&l1), hs_norm(&l2));
    if n1 == 0.0 || n2 == 0.0 {
        return Ok(0.0);
    }
    Ok(hs_norm(&commutator(&l1, &l2)?) / (n1 * n2))
}

/// `U^dag (obs (x) I) U` for an observable on the first factor of `tps`.
pub fn lift_first(obs: &CMatrix, tps: &TensorProductStructure) -> Result<CMatrix> {
    if obs.nrows() != tps.dim_a || obs.ncols() != tps.dim_a {
        return Err(Error::DimensionMismatch(format!(
            "observable of order {} on a factor of dimension {}",
            obs.nrows(),
            tps.dim_a
        )));
    }
    Ok(tps.from_product_frame(&tensor(obs, &CMatrix::identity(tps.dim_b, tps.dim_b))))
}

/// Entanglement entropy (nats) of `state` across the factorization `tps`.
pub fn entanglement_in_division(state: &CVector, tps: &TensorProductStructure) -> Result<f64> {
    tps.check_dim(state.len())?;
    let norm = state.norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized { norm });
    }
    let mapped = &tps.global_unitary * state;
    let rho = reduced_density_first(&mapped, tps.dim_a, tps.dim_b)?;
    von_neumann_entropy(&rho)
}

/// Weak reading of a division: the interaction left in `tps` may be nonzero
/// but must be separable.
pub fn separable_in_division<R: Rng + ?Sized>(
    h: &CMatrix,
    tps: &TensorProductStructure,
    rng: &mut R,
    tol: &Tolerances,
) -> Result<SeparabilityVerdict> {
    tps.check_dim(h.nrows())?;
    let hp = tps.to_product_frame(h);
    let hp = (&hp + hp.adjoint()).scale(0.5);
    is_separable(&CompositeOperator::new(tps.dim_a, tps.dim_b, hp)?, rng, tol)
}

/// One level of a coarse-graining tree. `division` splits the first factor
/// off; `rest` refines its second factor `h_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivisionNode {
    pub dims: Vec<usize>,
    pub division: Option<AdditiveDivision>,
    pub indivisible: bool,
    pub rest: Option<Box<DivisionNode>>,
}

impl DivisionNode {
    /// True when every split in the tree was found.
    pub fn fully_divided(&self) -> bool {
        !self.indivisible && self.rest.as_ref().is_none_or(|r| r.fully_divided())
    }

    pub fn residuals(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.division.iter().map(|d| d.residual).collect();
        if let Some(r) = &self.rest {
            out.extend(r.residuals());
        }
        out
    }
}

pub fn coarse_grain(h: &CMatrix, dims: &[usize]) -> Result<DivisionNode> {
    if dims.len() < 2 {
        return Err(Error::DimensionMismatch(
            "coarse graining needs at least two factors".into(),
        ));
    }
    let total: usize = dims.iter().product();
    if h.nrows() != h.ncols() || h.nrows() != total || dims.contains(&0) {
        return Err(Error::DimensionMismatch(format!(
            "operator of order {} does not factor as {dims:?}",
            h.nrows()
        )));
    }
    Ok(grain(h, dims))
}

fn grain(h: &CMatrix, dims: &[usize]) -> DivisionNode {
    let da = dims[0];
    let db: usize = dims[1..].iter().product();
    let division = find_additive_tps(h, da, db).expect("dimensions checked");
    let rest = match (&division, dims.len()) {
        (Some(div), n) if n > 2 => Some(Box::new(grain(&div.h_b, &dims[1..]))),
        _ => None,
    };
    DivisionNode {
        dims: dims.to_vec(),
        indivisible: division.is_none(),
        division,
        rest,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{kron_vectors, max_abs, pauli, real_diag};
    use crate::random::{random_hermitian, random_unit_vector, rng_from_seed};
    use crate::schmidt::hermitian_basis;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn heisenberg() -> CMatrix {
        tensor(&pauli::x(), &pauli::x()) + tensor(&pauli::y(), &pauli::y()) + tensor(&pauli::z(), &pauli::z())
    }

    fn additive(ha: &CMatrix, hb: &CMatrix) -> CMatrix {
        tensor(ha, &CMatrix::identity(hb.nrows(), hb.nrows())) + tensor(&CMatrix::identity(ha.nrows(), ha.nrows()), hb)
    }

    /// Every way of choosing `a` (with a[0] = 0) and `b` from sums against a
    /// 4-element multiset; returns all admissible `(a, b)` pairs for 2x2.
    fn brute_force_2x2(spec: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut found = Vec::new();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9;
        for p in permutations(spec) {
            // assignment (a0+b0, a0+b1, a1+b0, a1+b1) with a0 = 0
            let (b0, b1, a1) = (p[0], p[1], p[2] - p[0]);
            // gauge: a ascending from 0
            if a1 >= -1e-9 && close(a1 + b1, p[3]) {
                found.push((vec![0.0, a1], vec![b0, b1]));
            }
        }
        found
    }

    fn permutations(xs: &[f64]) -> Vec<Vec<f64>> {
        if xs.len() <= 1 {
            return vec![xs.to_vec()];
        }
        let mut out = Vec::new();
        for i in 0..xs.len() {
            let mut rest = xs.to_vec();
            let head = rest.remove(i);
            for mut tail in permutations(&rest) {
                tail.insert(0, head);
                out.push(tail);
            }
        }
        out
    }

    fn minkowski(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut s: Vec<f64> = a.iter().flat_map(|x| b.iter().map(move |y| x + y)).collect();
        s.sort_by(f64::total_cmp);
        s
    }

    #[test]
    fn sum_decomposition_examples() {
        let (a, b) = spectrum_sum_decomposition(&[0.0, 1.0, 2.0, 3.0], 2, 2)
            .unwrap()
            .unwrap();
        assert_eq!((a, b), (vec![0.0, 1.0], vec![0.0, 2.0]));
        let oracle = brute_force_2x2(&[0.0, 1.0, 2.0, 3.0]);
        let best = oracle
            .iter()
            .map(|(a, _)| a.clone())
            .min_by(|x, y| x.partial_cmp(y).unwrap())
            .unwrap();
        assert_eq!(best, vec![0.0, 1.0]);

        let (a, b) = spectrum_sum_decomposition(&[0.0; 4], 2, 2).unwrap().unwrap();
        assert_eq!((a, b), (vec![0.0, 0.0], vec![0.0, 0.0]));

        assert!(spectrum_sum_decomposition(&[-3.0, 1.0, 1.0, 1.0], 2, 2)
            .unwrap()
            .is_none());
        assert!(brute_force_2x2(&[-3.0, 1.0, 1.0, 1.0]).is_empty());

        assert!(matches!(
            spectrum_sum_decomposition(&[0.0, 1.0, 2.0], 2, 2),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn heisenberg_spectrum_is_minus_three_and_triplet() {
        let eig = hermitian_eig(&heisenberg()).unwrap();
        let want = [-3.0, 1.0, 1.0, 1.0];
        for (x, y) in eig.eigenvalues.iter().zip(want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn sum_decomposition_roundtrip_three_by_four() {
        let mut rng = rng_from_seed(11);
        for _ in 0..50 {
            let a: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let spectrum = minkowski(&a, &b);
            let (ra, rb) = spectrum_sum_decomposition(&spectrum, 3, 4).unwrap().unwrap();
            assert_eq!(ra[0], 0.0);
            assert!(ra.windows(2).all(|w| w[0] <= w[1]));
            let back = minkowski(&ra, &rb);
            for (x, y) in back.iter().zip(&spectrum) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn brute_force_agrees_on_random_small_spectra() {
        let mut rng = rng_from_seed(12);
        for trial in 0..200 {
            let spectrum: Vec<f64> = if trial % 2 == 0 {
                let a = [0.0, rng.gen_range(0..4) as f64];
                let b = [rng.gen_range(0..4) as f64, rng.gen_range(0..4) as f64];
                minkowski(&a, &b)
            } else {
                let mut s: Vec<f64> = (0..4).map(|_| rng.gen_range(0..5) as f64).collect();
                s.sort_by(f64::total_cmp);
                s
            };
            let ours = spectrum_sum_decomposition(&spectrum, 2, 2).unwrap();
            let oracle = brute_force_2x2(&spectrum);
            assert_eq!(ours.is_some(), !oracle.is_empty(), "{spectrum:?}");
            if let Some((a, _)) = ours {
                let smallest = oracle
                    .iter()
                    .map(|(a, _)| a.clone())
                    .min_by(|x, y| x.partial_cmp(y).unwrap())
                    .unwrap();
                assert_eq!(a, smallest);
            }
        }
    }

    #[test]
    fn residual_examples() {
        let zz = tensor(&pauli::z(), &pauli::z());
        let reference = TensorProductStructure::identity(2, 2);
        assert!((interaction_residual(&zz, &reference).unwrap() - 1.0).abs() < 1e-14);
        let h = additive(&real_diag(&[0.0, 1.0]), &real_diag(&[0.0, 2.0]));
        assert!(interaction_residual(&h, &reference).unwrap() < 1e-12);
        assert!(interaction_residual(&CMatrix::identity(4, 4), &reference).unwrap() < 1e-15);
        assert!(matches!(
            interaction_residual(&CMatrix::identity(6, 6), &reference),
            Err(Error::DimensionMismatch(_))
        ));
    }

    /// Gram-Schmidt over `{E_alpha (x) I} u {I (x) F_beta}` and project.
    fn projection_oracle(m: &CMatrix, da: usize, db: usize) -> CMatrix {
        let mut spanning: Vec<CMatrix> = hermitian_basis(da)
            .iter()
            .map(|e| tensor(e, &CMatrix::identity(db, db)))
            .collect();
        spanning.extend(
            hermitian_basis(db)
                .iter()
                .map(|f| tensor(&CMatrix::identity(da, da), f)),
        );
        let mut ortho: Vec<CMatrix> = Vec::new();
        for v in spanning {
            let mut w = v.clone();
            for e in &ortho {
                let overlap = hs_inner(e, &w).unwrap();
                w -= e * overlap;
            }
            let n = hs_norm(&w);
            if n > 1e-9 {
                ortho.push(w.unscale(n));
            }
        }
        assert_eq!(ortho.len(), da * da + db * db - 1);
        let mut p = CMatrix::zeros(da * db, da * db);
        for e in &ortho {
            p += e * hs_inner(e, m).unwrap();
        }
        p
    }

    #[test]
    fn residual_matches_projection_oracle() {
        let mut rng = rng_from_seed(13);
        for (da, db) in [(2, 2), (2, 3), (3, 2), (3, 3)] {
            let h = random_hermitian(da * db, &mut rng);
            let tps = TensorProductStructure::new(da, db, random_unitary(da * db, &mut rng), "random").unwrap();
            let hp = tps.to_product_frame(&h);
            let oracle = hs_norm(&(&hp - projection_oracle(&hp, da, db))) / hs_norm(&h);
            let ours = interaction_residual(&h, &tps).unwrap();
            assert!((ours - oracle).abs() < 1e-12, "{ours} vs {oracle}");
        }
    }

    #[test]
    fn recovers_hidden_division() {
        let mut rng = rng_from_seed(14);
        let h0 = additive(&real_diag(&[0.0, 1.0]), &real_diag(&[0.0, 2.0]));
        let v = random_unitary(4, &mut rng);
        let h = v.adjoint() * h0 * &v;
        let div = find_additive_tps(&h, 2, 2).unwrap().unwrap();
        assert!(div.residual <= 1e-8);
        let hp = div.tps.to_product_frame(&h);
        assert!(hs_norm(&(hp - div.additive_part())) <= div.residual * hs_norm(&h) + 1e-12);
        assert!(hermitian_eig(&div.h_a).is_ok() && hermitian_eig(&div.h_b).is_ok());
    }

    #[test]
    fn recovers_degenerate_hidden_division() {
        let mut rng = rng_from_seed(15);
        for (da, db) in [(2, 3), (3, 3), (4, 4)] {
            let ha = real_diag(&(0..da).map(|k| (k % 2) as f64).collect::<Vec<_>>());
            let hb = real_diag(&(0..db).map(|k| 2.0 * (k / 2) as f64).collect::<Vec<_>>());
            let v = random_unitary(da * db, &mut rng);
            let h = v.adjoint() * additive(&ha, &hb) * &v;
            let div = find_additive_tps(&h, da, db).unwrap().expect("division");
            assert!(div.residual <= 1e-8, "{da}x{db}: {}", div.residual);
        }
    }

    #[test]
    fn heisenberg_is_indivisible() {
        assert!(find_additive_tps(&heisenberg(), 2, 2).unwrap().is_none());
    }

    #[test]
    fn additive_in_reference_returns_identity() {
        let h = additive(&pauli::x(), &pauli::z());
        let div = find_additive_tps(&h, 2, 2).unwrap().unwrap();
        assert_eq!(div.tps.global_unitary, CMatrix::identity(4, 4));
        assert!(max_abs(&(div.h_a - pauli::x())) < 1e-15);
        assert!(max_abs(&(div.h_b - pauli::z())) < 1e-15);
        let opt = optimize_tps(&h, 2, 2, 4, 0).unwrap();
        assert_eq!(opt.tps.global_unitary, CMatrix::identity(4, 4));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rng_from_seed(16);
        let h = random_hermitian(6, &mut rng);
        let u = random_unitary(6, &mut rng);
        let k = random_hermitian(6, &mut rng);
        let norm2 = h.norm_squared();
        let (_, hp, r) = objective(&h, &u, 2, 3, norm2);
        let g = riemannian_gradient(&hp, &r);
        let analytic = -2.0 * hs_inner(&k, &g).unwrap().re / norm2;
        let eps = 1e-6;
        let f = |t: f64| objective(&h, &(exp_i_hermitian(&k, -t).unwrap() * &u), 2, 3, norm2).0;
        let numeric = (f(eps) - f(-eps)) / (2.0 * eps);
        assert!(
            (analytic - numeric).abs() < 1e-7 * analytic.abs().max(1.0),
            "{analytic} {numeric}"
        );
    }

    #[test]
    fn optimizer_recovers_hidden_rotation() {
        let mut rng = rng_from_seed(17);
        let h0 = additive(&real_diag(&[0.0, 1.0]), &real_diag(&[0.0, 2.0]));
        let v = random_unitary(4, &mut rng);
        let h = v.adjoint() * h0 * &v;
        let reference = interaction_residual(&h, &TensorProductStructure::identity(2, 2)).unwrap();
        let opt = optimize_tps(&h, 2, 2, DEFAULT_RESTARTS, 3).unwrap();
        assert!(opt.residual <= 1e-6, "{}", opt.residual);
        assert!(opt.residual <= reference);
        let again = optimize_tps(&h, 2, 2, DEFAULT_RESTARTS, 3).unwrap();
        assert_eq!(opt, again);
    }

    #[test]
    fn optimizer_cannot_divide_heisenberg() {
        let opt = optimize_tps(&heisenberg(), 2, 2, DEFAULT_RESTARTS, 0).unwrap();
        assert!(opt.residual >= 0.1, "{}", opt.residual);
        assert!(opt.residual <= 1.0 + 1e-12);
    }

    fn bell() -> CVector {
        CVector::from_vec(vec![c(FRAC_1_SQRT_2), c(0.0), c(0.0), c(FRAC_1_SQRT_2)])
    }

    /// `(H (x) I) CNOT`, taking the Bell basis to the product basis.
    fn bell_to_product() -> CMatrix {
        let s = FRAC_1_SQRT_2;
        let hadamard = CMatrix::from_row_slice(2, 2, &[c(s), c(s), c(s), c(-s)]);
        let cnot = real_diag(&[1.0, 1.0, 0.0, 0.0]) + tensor(&real_diag(&[0.0, 1.0]), &pauli::x());
        tensor(&hadamard, &CMatrix::identity(2, 2)) * cnot
    }

    #[test]
    fn complementary_entanglement() {
        let reference = TensorProductStructure::identity(2, 2);
        let bell_tps = TensorProductStructure::new(2, 2, bell_to_product(), "bell").unwrap();
        let product = kron_vectors(
            &CVector::from_vec(vec![c(1.0), c(0.0)]),
            &CVector::from_vec(vec![c(1.0), c(0.0)]),
        );
        assert!(entanglement_in_division(&product, &reference).unwrap().abs() < 1e-12);
        assert!((entanglement_in_division(&bell(), &reference).unwrap() - LN_2).abs() < 1e-12);
        assert!(entanglement_in_division(&bell(), &bell_tps).unwrap().abs() < 1e-12);
        assert!(matches!(
            entanglement_in_division(&(bell() * c(2.0)), &reference),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn cross_division_defects() {
        let reference = TensorProductStructure::identity(2, 2);
        let bell_tps = TensorProductStructure::new(2, 2, bell_to_product(), "bell").unwrap();
        // lifted z in the Bell structure is x (x) x: |[z1, x1 x2]| / (2 * 2) = 1
        let d = cross_division_commutator_defect(&pauli::z(), &reference, &pauli::z(), &bell_tps).unwrap();
        assert!((d - 1.0).abs() < 1e-12, "{d}");
        let same =
            cross_division_commutator_defect(&pauli::z(), &bell_tps, &real_diag(&[3.0, -1.0]), &bell_tps).unwrap();
        assert!(same < 1e-14);
        let local = cross_division_commutator_defect(&pauli::x(), &reference, &pauli::z(), &reference).unwrap();
        let oracle = hs_norm(&commutator(&pauli::x(), &pauli::z()).unwrap()) * 2f64.sqrt()
            / (hs_norm(&pauli::x()) * 2f64.sqrt()).powi(2);
        assert!((local - oracle).abs() < 1e-14);
        let id =
            cross_division_commutator_defect(&CMatrix::identity(2, 2), &reference, &pauli::x(), &bell_tps).unwrap();
        assert!(id < 1e-14);
    }

    #[test]
    fn coarse_grain_fully_additive_three_qubits() {
        let mut rng = rng_from_seed(18);
        let i2 = CMatrix::identity(2, 2);
        let h0 = tensor(&tensor(&real_diag(&[0.0, 1.0]), &i2), &i2)
            + tensor(&tensor(&i2, &real_diag(&[0.0, 2.0])), &i2)
            + tensor(&tensor(&i2, &i2), &real_diag(&[0.0, 3.0]));
        let v = random_unitary(8, &mut rng);
        let h = v.adjoint() * h0 * &v;
        let tree = coarse_grain(&h, &[2, 2, 2]).unwrap();
        assert!(tree.fully_divided());
        assert_eq!(tree.residuals().len(), 2);
        assert!(tree.residuals().iter().all(|&r| r <= 1e-8));
    }

    #[test]
    fn coarse_grain_splits_free_qubit_from_heisenberg_pair() {
        let h = additive(&real_diag(&[0.0, 0.7]), &heisenberg());
        let mut rng = rng_from_seed(19);
        let v = random_unitary(8, &mut rng);
        let tree = coarse_grain(&(v.adjoint() * h * &v), &[2, 2, 2]).unwrap();
        assert!(tree.division.is_some() && !tree.indivisible);
        let pair = tree.rest.as_ref().unwrap();
        assert!(pair.indivisible && pair.division.is_none());
        assert!(!tree.fully_divided());
    }

    #[test]
    fn coarse_grain_base_case_equals_find() {
        let mut rng = rng_from_seed(20);
        let v = random_unitary(4, &mut rng);
        let h = v.adjoint() * additive(&real_diag(&[0.0, 1.0]), &real_diag(&[0.0, 2.0])) * &v;
        let tree = coarse_grain(&h, &[2, 2]).unwrap();
        assert_eq!(tree.division, find_additive_tps(&h, 2, 2).unwrap());
        assert!(tree.rest.is_none());
        assert!(matches!(coarse_grain(&h, &[2, 3]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn weak_reading_accepts_separable_interaction() {
        let mut rng = rng_from_seed(21);
        // |11><11|: diagonal in the product basis, spectrum {0,0,0,1} has no split
        let p11 = real_diag(&[0.0, 0.0, 0.0, 1.0]);
        let reference = TensorProductStructure::identity(2, 2);
        assert!(find_additive_tps(&p11, 2, 2).unwrap().is_none());
        assert!(
            separable_in_division(&p11, &reference, &mut rng, &Tolerances::default())
                .unwrap()
                .separable
        );
        assert!(
            !separable_in_division(&heisenberg(), &reference, &mut rng, &Tolerances::default())
                .unwrap()
                .separable
        );
    }

    #[test]
    fn division_json_roundtrip() {
        let h = additive(&pauli::x(), &pauli::z());
        let tree = coarse_grain(&h, &[2, 2]).unwrap();
        let text = serde_json::to_string(&tree).unwrap();
        let back: DivisionNode = serde_json::from_str(&text).unwrap();
        assert_eq!(back, tree);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn verdict_is_unitarily_invariant(seed in any::<u64>(), additive_case in any::<bool>()) {
            let mut rng = rng_from_seed(seed);
            let h = if additive_case {
                additive(&random_hermitian(2, &mut rng), &random_hermitian(3, &mut rng))
            } else {
                random_hermitian(6, &mut rng)
            };
            let v = random_unitary(6, &mut rng);
            let rotated = v.adjoint() * &h * &v;
            let spec = |m: &CMatrix| hermitian_eig(m).unwrap().eigenvalues.iter().copied().collect::<Vec<f64>>();
            let x = spectrum_sum_decomposition(&spec(&h), 2, 3).unwrap().is_some();
            let y = spectrum_sum_decomposition(&spec(&rotated), 2, 3).unwrap().is_some();
            prop_assert_eq!(x, y);
            prop_assert_eq!(x, additive_case);
        }

        #[test]
        fn returned_divisions_are_sound(seed in any::<u64>()) {
            let mut rng = rng_from_seed(seed);
            let h = additive(&random_hermitian(3, &mut rng), &random_hermitian(2, &mut rng));
            let v = random_unitary(6, &mut rng);
            let h = v.adjoint() * h * &v;
            let div = find_additive_tps(&h, 3, 2).unwrap().unwrap();
            let hp = div.tps.to_product_frame(&h);
            prop_assert!(hs_norm(&(hp - div.additive_part())) <= div.residual * hs_norm(&h) * (1.0 + 1e-9) + 1e-14);
            prop_assert!(div.residual <= ADDITIVE_TOL);
        }

        #[test]
        fn entropy_is_bounded(seed in any::<u64>()) {
            let mut rng = rng_from_seed(seed);
            let psi = random_unit_vector(6, &mut rng);
            let tps = TensorProductStructure::new(2, 3, random_unitary(6, &mut rng), "random").unwrap();
            let s = entanglement_in_division(&psi, &tps).unwrap();
            prop_assert!((-1e-12..=LN_2 + 1e-12).contains(&s));
        }
    }
}
