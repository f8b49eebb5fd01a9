//! Linear canonical transformations of two-particle phase space.
//!
//! Phase-space vectors are ordered `(x_1 .. x_n, p_1 .. p_n)` with `hbar = 1`.
//! A transform `S` maps old coordinates `z` to new ones `z' = S z`; it is
//! canonical when `S^T J S = J`. Quadratic forms `z^T Hs z` transform as
//! `S^-T Hs S^-1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{real_symmetric_eig, serde_real_matrix, RMatrix};

/// Cross terms at or below this count as decoupled.
pub const DECOUPLING_TOL: f64 = 1e-12;

/// Standard symplectic form `[[0, I], [-I, 0]]` of order `2n`.
pub fn symplectic_form(n: usize) -> RMatrix {
    RMatrix::from_fn(2 * n, 2 * n, |i, j| {
        if j == i + n {
            1.0
        } else if i == j + n {
            -1.0
        } else {
            0.0
        }
    })
}

fn max_abs(m: &RMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalTransform {
    #[serde(with = "serde_real_matrix")]
    pub matrix: RMatrix,
}

impl CanonicalTransform {
    /// Validates `S^T J S = J` to `1e-12` relative to the entry scale of `S`.
    pub fn new(matrix: RMatrix) -> Result<Self> {
        let t = CanonicalTransform { matrix };
        t.check()?;
        Ok(t)
    }

    pub fn identity(n: usize) -> Self {
        CanonicalTransform {
            matrix: RMatrix::identity(2 * n, 2 * n),
        }
    }

    /// Degrees of freedom `n` of the `2n`-dimensional phase space.
    pub fn degrees_of_freedom(&self) -> usize {
        self.matrix.nrows() / 2
    }

    /// `max |S^T J S - J|`.
    pub fn symplectic_residual(&self) -> f64 {
        let j = symplectic_form(self.degrees_of_freedom());
        max_abs(&(self.matrix.transpose() * &j * &self.matrix - j))
    }

    fn check(&self) -> Result<()> {
        let (r, c) = self.matrix.shape();
        if r != c || r % 2 != 0 || r == 0 {
            return Err(Error::DimensionMismatch(format!("{r}x{c} is not a phase-space map")));
        }
        if !self.matrix.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput("transform has non-finite entries".into()));
        }
        let residual = self.symplectic_residual();
        let scale = 1.0 + max_abs(&self.matrix);
        if residual > 1e-12 * scale * scale {
            return Err(Error::NotSymplectic { residual });
        }
        Ok(())
    }

    /// Position block `S[0..n, 0..n]`.
    pub fn position_block(&self) -> RMatrix {
        let n = self.degrees_of_freedom();
        self.matrix.view((0, 0), (n, n)).into_owned()
    }

    /// Momentum block `S[n..2n, n..2n]`.
    pub fn momentum_block(&self) -> RMatrix {
        let n = self.degrees_of_freedom();
        self.matrix.view((n, n), (n, n)).into_owned()
    }

    /// `S^-1 = -J S^T J`, exact for symplectic `S`.
    fn inverse_matrix(&self) -> RMatrix {
        let j = symplectic_form(self.degrees_of_freedom());
        -(&j * self.matrix.transpose() * &j)
    }

    /// Transforms a phase-space quadratic form: `S^-T Hs S^-1`.
    pub fn transform_form(&self, hessian: &RMatrix) -> Result<RMatrix> {
        if hessian.shape() != self.matrix.shape() {
            return Err(Error::DimensionMismatch(format!(
                "form {:?} against transform {:?}",
                hessian.shape(),
                self.matrix.shape()
            )));
        }
        let inv = self.inverse_matrix();
        Ok(inv.transpose() * hessian * inv)
    }
}

/// `t1 . t2`: apply `t2`, then `t1`.
pub fn compose(t1: &CanonicalTransform, t2: &CanonicalTransform) -> Result<CanonicalTransform> {
    t1.check()?;
    t2.check()?;
    if t1.matrix.shape() != t2.matrix.shape() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} and {:?}",
            t1.matrix.shape(),
            t2.matrix.shape()
        )));
    }
    Ok(CanonicalTransform {
        matrix: &t1.matrix * &t2.matrix,
    })
}

pub fn invert(t: &CanonicalTransform) -> Result<CanonicalTransform> {
    t.check()?;
    Ok(CanonicalTransform {
        matrix: t.inverse_matrix(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Potential {
    /// A function of `|x_1 - x_2|` only; tracked symbolically.
    Relative { relative: bool },
    /// `V = x^T K x / 2`.
    Quadratic { quadratic: [[f64; 2]; 2] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoBodySystem {
    pub m1: f64,
    pub m2: f64,
    pub potential: Potential,
}

impl TwoBodySystem {
    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("m1", self.m1), ("m2", self.m2)] {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be a positive mass, got {m}")));
            }
        }
        match self.potential {
            Potential::Relative { relative: false } => Err(Error::InvalidInput(
                "potential {\"relative\": false} describes nothing".into(),
            )),
            Potential::Quadratic { quadratic: k } => {
                if !k.iter().flatten().all(|x| x.is_finite()) {
                    return Err(Error::InvalidInput("spring matrix has non-finite entries".into()));
                }
                let scale = k.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
                if (k[0][1] - k[1][0]).abs() > 1e-12 * (1.0 + scale) {
                    return Err(Error::InvalidInput("spring matrix is not symmetric".into()));
                }
                Ok(())
            }
            Potential::Relative { relative: true } => Ok(()),
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.m1 + self.m2
    }

    pub fn reduced_mass(&self) -> f64 {
        reduced_mass(self.m1, self.m2)
    }

    /// Phase-space Hessian of `p_1^2/2m_1 + p_2^2/2m_2`.
    pub fn kinetic_hessian(&self) -> RMatrix {
        RMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            0.0,
            0.0,
            1.0 / self.m1,
            1.0 / self.m2,
        ]))
    }

    fn spring_matrix(&self) -> Option<RMatrix> {
        match self.potential {
            Potential::Quadratic { quadratic: k } => Some(RMatrix::from_fn(2, 2, |i, j| k[i][j])),
            Potential::Relative { .. } => None,
        }
    }
}

pub fn reduced_mass(m1: f64, m2: f64) -> f64 {
    m1 * m2 / (m1 + m2)
}

/// `(m1/M, m2/M)`: weights of the two positions in the centre-of-mass coordinate.
pub fn cm_coefficients(m1: f64, m2: f64) -> (f64, f64) {
    let total = m1 + m2;
    (m1 / total, m2 / total)
}

/// `x_cm = (m1 x1 + m2 x2)/M`, `x_r = x1 - x2`, `p_cm = p1 + p2`,
/// `p_r = (m2 p1 - m1 p2)/M`.
pub fn cm_relative_transform(m1: f64, m2: f64) -> Result<CanonicalTransform> {
    if !(m1.is_finite() && m2.is_finite() && m1 > 0.0 && m2 > 0.0) {
        return Err(Error::InvalidInput(format!(
            "masses must be positive, got {m1} and {m2}"
        )));
    }
    let (w1, w2) = cm_coefficients(m1, m2);
    #[rustfmt::skip]
    let matrix = RMatrix::from_row_slice(4, 4, &[
        w1,  w2,  0.0, 0.0,
        1.0, -1.0, 0.0, 0.0,
        0.0, 0.0, 1.0, 1.0,
        0.0, 0.0, w2,  -w1,
    ]);
    CanonicalTransform::new(matrix)
}

/// Largest entry coupling new mode 1 `(z'_0, z'_2)` to new mode 2 `(z'_1, z'_3)`.
fn mode_cross(form: &RMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in [0, 2] {
        for j in [1, 3] {
            worst = worst.max(form[(i, j)].abs()).max(form[(j, i)].abs());
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingCheck {
    /// Cross terms of the transformed kinetic form.
    pub kinetic_cross: f64,
    /// For a relative potential: the fraction of `x_1 - x_2` not carried by
    /// its best single new mode (0 means the potential sees one mode only).
    /// For a quadratic potential: the largest cross term of `K`.
    pub potential_cross: f64,
    /// New mode (0 or 1) carrying the whole potential, when there is one.
    pub potential_mode: Option<usize>,
    pub cross_coupling_residual: f64,
}

pub fn kinetic_decoupling_check(sys: &TwoBodySystem, t: &CanonicalTransform) -> Result<CouplingCheck> {
    sys.validate()?;
    t.check()?;
    if t.degrees_of_freedom() != 2 {
        return Err(Error::DimensionMismatch(
            "two-body transforms act on four phase-space coordinates".into(),
        ));
    }
    let kinetic_cross = mode_cross(&t.transform_form(&sys.kinetic_hessian())?);

    let (potential_cross, potential_mode) = match sys.spring_matrix() {
        Some(k) => {
            let mut hessian = RMatrix::zeros(4, 4);
            hessian.view_mut((0, 0), (2, 2)).copy_from(&k);
            let cross = mode_cross(&t.transform_form(&hessian)?);
            let mode_of = |idx: usize| {
                let form = t.transform_form(&hessian).expect("shape checked");
                (0..4).any(|i| form[(idx, i)] != 0.0 || form[(idx + 2, i)] != 0.0)
            };
            let mode = match (mode_of(0), mode_of(1)) {
                (true, false) if cross <= DECOUPLING_TOL => Some(0),
                (false, true) if cross <= DECOUPLING_TOL => Some(1),
                _ => None,
            };
            (cross, mode)
        }
        None => {
            // x1 - x2 as a linear function of the new coordinates
            let inv = t.inverse_matrix();
            let w: Vec<f64> = (0..4).map(|j| inv[(0, j)] - inv[(1, j)]).collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            let outside = |mode: usize| {
                let other = 1 - mode;
                (w[other].powi(2) + w[other + 2].powi(2)).sqrt() / norm
            };
            let (o0, o1) = (outside(0), outside(1));
            let (best, cross) = if o1 <= o0 { (1, o1) } else { (0, o0) };
            (cross, (cross <= DECOUPLING_TOL).then_some(best))
        }
    };
    Ok(CouplingCheck {
        kinetic_cross,
        potential_cross,
        potential_mode,
        cross_coupling_residual: kinetic_cross.max(potential_cross),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoupledForm {
    pub transform: CanonicalTransform,
    pub effective_masses: Vec<f64>,
    /// Normal-mode frequencies; empty for a relative potential.
    pub mode_frequencies: Vec<f64>,
    /// Modes whose curvature is negative; their frequency is reported as `sqrt|lambda|`.
    pub unstable_modes: Vec<usize>,
    pub cross_coupling_residual: f64,
}

/// Normal modes of a quadratic two-body system: mass-weighted coordinates
/// `y = M^1/2 x`, then the orthogonal eigenbasis of `M^-1/2 K M^-1/2`. The
/// resulting point transform gives unit effective masses.
pub fn decouple_quadratic(sys: &TwoBodySystem) -> Result<DecoupledForm> {
    sys.validate()?;
    let k = sys
        .spring_matrix()
        .ok_or_else(|| Error::InvalidInput("normal modes need a quadratic potential".into()))?;
    let masses = [sys.m1, sys.m2];
    let weighted = RMatrix::from_fn(2, 2, |i, j| k[(i, j)] / (masses[i] * masses[j]).sqrt());
    let (lambda, mut o) = real_symmetric_eig(&weighted)?;
    // deterministic signs: largest component of each mode positive
    for mut col in o.column_iter_mut() {
        let lead = if col[0].abs() >= col[1].abs() { col[0] } else { col[1] };
        if lead < 0.0 {
            col.neg_mut();
        }
    }

    let a = RMatrix::from_fn(2, 2, |i, j| o[(j, i)] * masses[j].sqrt());
    let a_inv_t = RMatrix::from_fn(2, 2, |i, j| o[(j, i)] / masses[j].sqrt());
    let mut s = RMatrix::zeros(4, 4);
    s.view_mut((0, 0), (2, 2)).copy_from(&a);
    s.view_mut((2, 2), (2, 2)).copy_from(&a_inv_t);
    let transform = CanonicalTransform::new(s)?;

    let check = kinetic_decoupling_check(sys, &transform)?;
    Ok(DecoupledForm {
        transform,
        effective_masses: vec![1.0, 1.0],
        mode_frequencies: lambda.iter().map(|l| l.abs().sqrt()).collect(),
        unstable_modes: (0..2).filter(|&m| lambda[m] < 0.0).collect(),
        cross_coupling_residual: check.cross_coupling_residual,
    })
}

/// Centre-of-mass / relative split of a system with a relative potential.
pub fn decouple_relative(sys: &TwoBodySystem) -> Result<DecoupledForm> {
    sys.validate()?;
    let transform = cm_relative_transform(sys.m1, sys.m2)?;
    let check = kinetic_decoupling_check(sys, &transform)?;
    Ok(DecoupledForm {
        transform,
        effective_masses: vec![sys.total_mass(), sys.reduced_mass()],
        mode_frequencies: Vec::new(),
        unstable_modes: Vec::new(),
        cross_coupling_residual: check.cross_coupling_residual,
    })
}

pub fn decouple(sys: &TwoBodySystem) -> Result<DecoupledForm> {
    match sys.potential {
        Potential::Quadratic { .. } => decouple_quadratic(sys),
        Potential::Relative { .. } => decouple_relative(sys),
    }
}
