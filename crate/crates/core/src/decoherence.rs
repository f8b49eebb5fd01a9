//! Exact pure-dephasing dynamics for checking a proposed system/environment
//! division.
//!
//! The central-spin model couples one system qubit to `n_env` environment
//! qubits through `sigma_z (x) sum_k g_k sigma_z^(k)`. The system is the most
//! significant qubit of the composite index.

use serde::{Deserialize, Serialize};

use crate::division::additive_components;
use crate::error::{Error, Result};
use crate::linalg::{
    hermitian_eig, kron_vectors, max_abs, reduced_density_first, serde_matrix, serde_state, serde_state_vec, tensor,
    CMatrix, CVector, C64,
};
use crate::random::rng_from_seed;
use crate::separability::{extract_pointer_structure, PointerStructure, Tolerances};
use crate::CompositeOperator;

pub const MAX_ENV: usize = 10;

/// Seed for the generic combinations inside pointer prediction; the
/// prediction itself does not depend on it.
const POINTER_SEED: u64 = 0x5eed;

const STATE_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralSpinModel {
    pub n_env: usize,
    pub g: Vec<f64>,
    #[serde(with = "serde_state")]
    pub system_initial: CVector,
    #[serde(with = "serde_state_vec")]
    pub env_initial: Vec<CVector>,
}

fn check_unit(v: &CVector, len: usize, what: &str) -> Result<()> {
    if v.len() != len {
        return Err(Error::DimensionMismatch(format!(
            "{what} has length {}, expected {len}",
            v.len()
        )));
    }
    let norm = v.norm();
    if (norm - 1.0).abs() > STATE_NORM_TOL {
        return Err(Error::NotNormalized { norm });
    }
    Ok(())
}

impl CentralSpinModel {
    /// Every qubit starts in `|+>`.
    pub fn all_plus(g: Vec<f64>) -> Self {
        let plus = CVector::from_element(2, C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0));
        CentralSpinModel {
            n_env: g.len(),
            env_initial: vec![plus.clone(); g.len()],
            system_initial: plus,
            g,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_ENV).contains(&self.n_env) {
            return Err(Error::InvalidInput(format!(
                "n_env must lie in 1..={MAX_ENV}, got {}",
                self.n_env
            )));
        }
        if self.g.len() != self.n_env || self.env_initial.len() != self.n_env {
            return Err(Error::DimensionMismatch(format!(
                "{} couplings and {} environment states for n_env = {}",
                self.g.len(),
                self.env_initial.len(),
                self.n_env
            )));
        }
        if !self.g.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput("couplings must be finite".into()));
        }
        check_unit(&self.system_initial, 2, "system_initial")?;
        for e in &self.env_initial {
            check_unit(e, 2, "env_initial entry")?;
        }
        Ok(())
    }

    pub fn env_dim(&self) -> usize {
        1 << self.n_env
    }

    pub fn initial_state(&self) -> CVector {
        self.env_initial
            .iter()
            .fold(self.system_initial.clone(), |acc, e| kron_vectors(&acc, e))
    }
}

/// Diagonal of `sum_k g_k sigma_z^(k)` over the environment register.
fn env_coupling_diagonal(g: &[f64]) -> Vec<f64> {
    let n = g.len();
    (0..1usize << n)
        .map(|idx| {
            g.iter()
                .enumerate()
                .map(|(k, gk)| if idx >> (n - 1 - k) & 1 == 0 { *gk } else { -gk })
                .sum()
        })
        .collect()
}

pub fn build_hamiltonian(model: &CentralSpinModel) -> Result<CMatrix> {
    if !(1..=MAX_ENV).contains(&model.n_env) || model.g.len() != model.n_env {
        return Err(Error::InvalidInput(format!(
            "n_env must lie in 1..={MAX_ENV} and match the couplings, got {} and {}",
            model.n_env,
            model.g.len()
        )));
    }
    let env = env_coupling_diagonal(&model.g);
    let de = env.len();
    let mut h = CMatrix::zeros(2 * de, 2 * de);
    for (k, e) in env.iter().enumerate() {
        h[(k, k)] = C64::new(*e, 0.0);
        h[(de + k, de + k)] = C64::new(-e, 0.0);
    }
    Ok(h)
}

/// Local basis of the first factor singled out by a separable interaction.
/// Errors with [`Error::NoSuperselection`] when the interaction defines a
/// single sector.
pub fn pointer_structure_of(h_int: &CMatrix, ds: usize, de: usize) -> Result<PointerStructure> {
    let op = CompositeOperator::new(ds, de, h_int.clone())?;
    let mut rng = rng_from_seed(POINTER_SEED);
    let pointer = extract_pointer_structure(&op, &mut rng, &Tolerances::default())?;
    if pointer.sector_projectors.len() < 2 {
        return Err(Error::NoSuperselection);
    }
    Ok(pointer)
}

pub fn predict_pointer_basis(model: &CentralSpinModel) -> Result<CMatrix> {
    let h = build_hamiltonian(model)?;
    Ok(pointer_structure_of(&h, 2, model.env_dim())?.local_basis)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceReport {
    pub times: Vec<f64>,
    pub coherence: Vec<f64>,
    #[serde(with = "serde_matrix")]
    pub pointer_basis_used: CMatrix,
    /// Closed-form coherence; absent when the dynamics has no closed form.
    pub analytic_reference: Option<Vec<f64>>,
    pub max_deviation: Option<f64>,
    /// `max_t |tr rho_s(t) - 1|`.
    pub trace_deviation: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || times[0] != 0.0 {
        return Err(Error::InvalidInput("times must start at 0".into()));
    }
    if !times.iter().all(|t| t.is_finite()) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("times must be finite and ascending".into()));
    }
    Ok(())
}

/// Reduced first-factor states `tr_E |psi(t)><psi(t)|` under `h`.
pub fn reduced_states(h: &CMatrix, psi0: &CVector, ds: usize, de: usize, times: &[f64]) -> Result<Vec<CMatrix>> {
    let n = h.nrows();
    if psi0.len() != n || ds * de != n {
        return Err(Error::DimensionMismatch(format!(
            "state of length {} for an operator of order {n} split {ds}*{de}",
            psi0.len()
        )));
    }
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || h[(i, j)] == C64::new(0.0, 0.0)));
    // diagonal Hamiltonians evolve entrywise in the given order
    let (energies, vectors) = if diagonal {
        ((0..n).map(|k| h[(k, k)].re).collect::<Vec<f64>>(), None)
    } else {
        let eig = hermitian_eig(h)?;
        (eig.eigenvalues.iter().copied().collect(), Some(eig.eigenvectors))
    };
    let coords = match &vectors {
        Some(v) => v.adjoint() * psi0,
        None => psi0.clone(),
    };
    times
        .iter()
        .map(|&t| {
            let phased = CVector::from_fn(n, |k, _| coords[k] * C64::from_polar(1.0, -energies[k] * t));
            let psi = match &vectors {
                Some(v) => v * phased,
                None => phased,
            };
            reduced_density_first(&psi, ds, de)
        })
        .collect()
}

/// `|<b_i| rho |b_j>|` maximized over `i in left`, `j in right`.
fn block_coherence(rho: &CMatrix, basis: &CMatrix, left: &[usize], right: &[usize]) -> f64 {
    let r = basis.adjoint() * rho * basis;
    let mut worst = 0.0f64;
    for &i in left {
        for &j in right {
            worst = worst.max(r[(i, j)].norm());
        }
    }
    worst
}

/// Largest off-diagonal modulus of `rho` in the columns of `basis`.
pub fn coherence_in_basis(rho: &CMatrix, basis: &CMatrix) -> f64 {
    let r = basis.adjoint() * rho * basis;
    let n = r.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                worst = worst.max(r[(i, j)].norm());
            }
        }
    }
    worst
}

struct StateStats {
    trace_deviation: f64,
    min_eigenvalue: f64,
    max_eigenvalue: f64,
}

fn state_stats(states: &[CMatrix]) -> Result<StateStats> {
    let mut stats = StateStats {
        trace_deviation: 0.0,
        min_eigenvalue: f64::INFINITY,
        max_eigenvalue: f64::NEG_INFINITY,
    };
    for rho in states {
        stats.trace_deviation = stats.trace_deviation.max((rho.trace() - C64::new(1.0, 0.0)).norm());
        let eig = hermitian_eig(&(rho + rho.adjoint()).scale(0.5))?;
        stats.min_eigenvalue = stats.min_eigenvalue.min(eig.eigenvalues[0]);
        stats.max_eigenvalue = stats.max_eigenvalue.max(eig.eigenvalues[eig.eigenvalues.len() - 1]);
    }
    Ok(stats)
}

/// `|alpha beta*| prod_k | |a_k|^2 e^{-2i g_k t} + |b_k|^2 e^{2i g_k t} |`.
pub fn analytic_coherence(model: &CentralSpinModel, t: f64) -> f64 {
    let s = &model.system_initial;
    let mut c = (s[0] * s[1].conj()).norm();
    for (gk, e) in model.g.iter().zip(&model.env_initial) {
        let phase = C64::from_polar(1.0, -2.0 * gk * t);
        c *= (phase * e[0].norm_sqr() + phase.conj() * e[1].norm_sqr()).norm();
    }
    c
}

fn max_deviation(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn evolve(model: &CentralSpinModel, times: &[f64]) -> Result<DecoherenceReport> {
    model.validate()?;
    check_times(times)?;
    let h = build_hamiltonian(model)?;
    let basis = match predict_pointer_basis(model) {
        Ok(b) => b,
        Err(Error::NoSuperselection) => CMatrix::identity(2, 2),
        Err(e) => return Err(e),
    };
    let states = reduced_states(&h, &model.initial_state(), 2, model.env_dim(), times)?;
    let coherence: Vec<f64> = states.iter().map(|rho| coherence_in_basis(rho, &basis)).collect();
    let reference: Vec<f64> = times.iter().map(|&t| analytic_coherence(model, t)).collect();
    let stats = state_stats(&states)?;
    Ok(DecoherenceReport {
        times: times.to_vec(),
        max_deviation: Some(max_deviation(&coherence, &reference)),
        analytic_reference: Some(reference),
        coherence,
        pointer_basis_used: basis,
        trace_deviation: stats.trace_deviation,
        min_eigenvalue: stats.min_eigenvalue,
        max_eigenvalue: stats.max_eigenvalue,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorPairCoherence {
    pub sectors: (usize, usize),
    pub coherence: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DivisionValidation {
    pub report: DecoherenceReport,
    pub pointer: PointerStructure,
    pub sector_pairs: Vec<SectorPairCoherence>,
}

/// The full check of a proposed division `C^ds (x) C^de`: strip the additive
/// part, require a separable interaction, read off its sectors, then evolve
/// the uniform superposition of pointer states against `env_state`.
pub fn validate_division(
    h_total: &CMatrix,
    ds: usize,
    de: usize,
    env_state: &CVector,
    times: &[f64],
) -> Result<DivisionValidation> {
    if h_total.nrows() != ds * de || h_total.ncols() != ds * de || ds == 0 || de == 0 {
        return Err(Error::DimensionMismatch(format!(
            "operator of order {} does not factor as {ds}*{de}",
            h_total.nrows()
        )));
    }
    check_unit(env_state, de, "env_state")?;
    check_times(times)?;
    let h_total = crate::linalg::ensure_hermitian(h_total)?;

    let (h_s, h_e) = additive_components(&h_total, ds, de)?;
    let h_int = &h_total - tensor(&h_s, &CMatrix::identity(de, de)) - tensor(&CMatrix::identity(ds, ds), &h_e);
    let pointer = match pointer_structure_of(&h_int, ds, de) {
        Ok(p) => p,
        // a vanishing interaction is separable with one sector
        Err(Error::NoSuperselection) => {
            let op = CompositeOperator::new(ds, de, h_int.clone())?;
            extract_pointer_structure(&op, &mut rng_from_seed(POINTER_SEED), &Tolerances::default())?
        }
        Err(e) => return Err(e),
    };
    let basis = pointer.local_basis.clone();
    let system = basis.column_sum().unscale((ds as f64).sqrt());
    let psi0 = kron_vectors(&system, env_state);
    let states = reduced_states(&h_total, &psi0, ds, de, times)?;

    let members = &pointer.sector_members;
    let mut sector_pairs = Vec::new();
    for s in 0..members.len() {
        for t in s + 1..members.len() {
            sector_pairs.push(SectorPairCoherence {
                sectors: (s, t),
                coherence: states
                    .iter()
                    .map(|rho| block_coherence(rho, &basis, &members[s], &members[t]))
                    .collect(),
            });
        }
    }
    let coherence: Vec<f64> = if sector_pairs.is_empty() {
        states.iter().map(|rho| coherence_in_basis(rho, &basis)).collect()
    } else {
        (0..times.len())
            .map(|k| sector_pairs.iter().map(|p| p.coherence[k]).fold(0.0, f64::max))
            .collect()
    };

    let reference = branch_reference(&h_total, &basis, &pointer, ds, de, env_state, times)?;
    let stats = state_stats(&states)?;
    Ok(DivisionValidation {
        report: DecoherenceReport {
            times: times.to_vec(),
            max_deviation: reference.as_ref().map(|r| max_deviation(&coherence, r)),
            analytic_reference: reference,
            coherence,
            pointer_basis_used: basis,
            trace_deviation: stats.trace_deviation,
            min_eigenvalue: stats.min_eigenvalue,
            max_eigenvalue: stats.max_eigenvalue,
        },
        pointer,
        sector_pairs,
    })
}

/// When every sector is a single pointer state and `h` does not move the
/// system between them, the system amplitude on `|p_i>` drags the
/// environment along `exp(-i K_i t)` with `K_i = <p_i| h |p_i>`, and
/// `rho_ij(t) = c_i c_j* <chi| exp(i K_j t) exp(-i K_i t) |chi>`.
fn branch_reference(
    h: &CMatrix,
    basis: &CMatrix,
    pointer: &PointerStructure,
    ds: usize,
    de: usize,
    env: &CVector,
    times: &[f64],
) -> Result<Option<Vec<f64>>> {
    if pointer.sector_dimensions.iter().any(|&d| d != 1) {
        return Ok(None);
    }
    let rotated = {
        let b = tensor(basis, &CMatrix::identity(de, de));
        b.adjoint() * h * b
    };
    let block = |i: usize, j: usize| rotated.view((i * de, j * de), (de, de)).into_owned();
    let scale = max_abs(&rotated);
    for i in 0..ds {
        for j in 0..ds {
            if i != j && max_abs(&block(i, j)) > 1e-12 * scale.max(1.0) {
                return Ok(None);
            }
        }
    }
    let branches: Vec<_> = (0..ds).map(|i| hermitian_eig(&block(i, i))).collect::<Result<_>>()?;
    let weight = 1.0 / ds as f64;
    Ok(Some(
        times
            .iter()
            .map(|&t| {
                let evolved: Vec<CVector> = branches
                    .iter()
                    .map(|e| {
                        let c = e.eigenvectors.adjoint() * env;
                        &e.eigenvectors
                            * CVector::from_fn(de, |k, _| c[k] * C64::from_polar(1.0, -e.eigenvalues[k] * t))
                    })
                    .collect();
                let mut worst = 0.0f64;
                for i in 0..ds {
                    for j in i + 1..ds {
                        worst = worst.max(weight * evolved[j].dotc(&evolved[i]).norm());
                    }
                }
                worst
            })
            .collect(),
    ))
}
