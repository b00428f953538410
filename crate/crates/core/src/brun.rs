//! Discrimination unitaries `U_k` with `U_k|psi_k> = |k>` and nonvanishing cross overlaps.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cache::{invalid, write_atomic};
use crate::error::{contract, Error, Result};
use crate::qmath::{
    basis_vector, haar_unitary, identity, outer, unitarity_defect, ComplexMatrix, ComplexVector, StateVector, C64,
};

pub const DEFAULT_OVERLAP_FLOOR: f64 = 1e-4;
pub const DEFAULT_MAX_RETRIES: usize = 64;
/// Tolerance for unitarity and for `U_k|psi_k> = |k>` on validated ensembles.
pub const ENSEMBLE_TOL: f64 = 1e-10;
/// States whose overlap modulus exceeds `1 - DISTINCT_TOL` count as the same state.
const DISTINCT_TOL: f64 = 1e-12;

/// Broadcast states in dimension `n` and their discrimination unitaries.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryEnsemble {
    pub n: usize,
    pub states: Vec<StateVector>,
    pub unitaries: Vec<ComplexMatrix>,
    pub min_overlap: f64,
    pub seed: u64,
}

fn check_states(states: &[StateVector]) -> Result<usize> {
    let n = states.len();
    if n == 0 {
        return Err(contract("an ensemble needs at least one state"));
    }
    if let Some(s) = states.iter().find(|s| s.dim() != n) {
        return Err(Error::DimensionMismatch(format!("{n} states but one has dim {}", s.dim())));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if states[i].inner(&states[j]).norm() > 1.0 - DISTINCT_TOL {
                return Err(contract(format!("states {i} and {j} coincide up to phase")));
            }
        }
    }
    Ok(n)
}

/// Unitary rotating `psi` onto `e_k` inside `span{e_k, psi}`, identity elsewhere.
fn plane_rotation(psi: &ComplexVector, k: usize) -> ComplexMatrix {
    let n = psi.len();
    let e = basis_vector(n, k);
    let alpha = psi[k];
    let mut w = psi.clone();
    w[k] = C64::new(0.0, 0.0);
    let beta = w.norm();
    let mut g = identity(n);
    if beta == 0.0 {
        g[(k, k)] = alpha.conj();
        return g;
    }
    let w = w.unscale(beta);
    let b = C64::new(beta, 0.0);
    // In the (e, w) basis psi = (alpha, beta) and the block is [[alpha*, beta], [-beta, alpha]].
    g -= outer(&e, &e) + outer(&w, &w);
    g += outer(&e, &e) * alpha.conj() + outer(&e, &w) * b - outer(&w, &e) * b + outer(&w, &w) * alpha;
    g
}

/// Haar unitary on the complement of `|k>`, fixing `|k>`.
fn complement_unitary<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> ComplexMatrix {
    let mut r = identity(n);
    if n < 2 {
        return r;
    }
    let h = haar_unitary(n - 1, rng);
    let idx: Vec<usize> = (0..n).filter(|&i| i != k).collect();
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            r[(i, j)] = h[(a, b)];
        }
    }
    r
}

/// `U_k = R_k G_k`: the plane rotation taking `psi_k` to `|k>`, followed by a random
/// unitary that fixes `|k>`. Satisfies `<k|U_k|psi_k> = 1`.
pub fn build_u_k<R: Rng + ?Sized>(states: &[StateVector], k: usize, rng: &mut R) -> Result<ComplexMatrix> {
    let n = states.len();
    if k >= n {
        return Err(contract(format!("index {k} out of range for {n} states")));
    }
    if let Some(s) = states.iter().find(|s| s.dim() != n) {
        return Err(Error::DimensionMismatch(format!("{n} states but one has dim {}", s.dim())));
    }
    let g = plane_rotation(states[k].amplitudes(), k);
    Ok(complement_unitary(n, k, rng) * g)
}

/// `min_j |<j|U_k|psi_j>|` for a single `U_k`.
fn column_overlap(states: &[StateVector], u: &ComplexMatrix) -> f64 {
    states.iter().enumerate().map(|(j, s)| (u.row(j) * s.amplitudes())[(0, 0)].norm()).fold(f64::INFINITY, f64::min)
}

fn min_overlap(states: &[StateVector], unitaries: &[ComplexMatrix]) -> f64 {
    unitaries.iter().map(|u| column_overlap(states, u)).fold(f64::INFINITY, f64::min)
}

/// `min_{j,k} |<j|U_k|psi_j>|`.
pub fn verify_overlap_condition(ensemble: &UnitaryEnsemble) -> f64 {
    min_overlap(&ensemble.states, &ensemble.unitaries)
}

/// Builds every `U_k`, redrawing the random complement of an offending `U_k` until its
/// overlaps clear `overlap_floor`. The generator is seeded from `seed`, so the same
/// `(states, seed)` always yields the same ensemble.
pub fn build_ensemble(
    states: &[StateVector],
    seed: u64,
    overlap_floor: f64,
    max_retries: usize,
) -> Result<UnitaryEnsemble> {
    let n = check_states(states)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unitaries = Vec::with_capacity(n);
    let mut worst_best = f64::INFINITY;
    for k in 0..n {
        let mut best: Option<(f64, ComplexMatrix)> = None;
        for _ in 0..=max_retries {
            let u = build_u_k(states, k, &mut rng)?;
            let m = column_overlap(states, &u);
            if best.as_ref().is_none_or(|(b, _)| m > *b) {
                best = Some((m, u));
            }
            if m >= overlap_floor {
                break;
            }
        }
        let (m, u) = best.expect("at least one draw");
        worst_best = worst_best.min(m);
        unitaries.push(u);
    }
    if worst_best < overlap_floor {
        return Err(Error::OverlapConditionUnsatisfied { best: worst_best, floor: overlap_floor });
    }
    Ok(UnitaryEnsemble { n, states: states.to_vec(), unitaries, min_overlap: worst_best, seed })
}

impl UnitaryEnsemble {
    /// Assembles an ensemble from explicit parts and checks every invariant.
    pub fn from_parts(states: Vec<StateVector>, unitaries: Vec<ComplexMatrix>, seed: u64) -> Result<Self> {
        let n = check_states(&states)?;
        if unitaries.len() != n {
            return Err(Error::DimensionMismatch(format!("{n} states but {} unitaries", unitaries.len())));
        }
        for (k, u) in unitaries.iter().enumerate() {
            if u.shape() != (n, n) {
                return Err(Error::DimensionMismatch(format!("U_{k} is {:?}, expected {n}x{n}", u.shape())));
            }
            let defect = unitarity_defect(u);
            if defect > ENSEMBLE_TOL {
                return Err(contract(format!("U_{k} is not unitary (defect {defect:e})")));
            }
            let miss = (u * states[k].amplitudes() - basis_vector(n, k)).norm();
            if miss > ENSEMBLE_TOL {
                return Err(contract(format!("U_{k} maps psi_{k} to within {miss:e} of |{k}>, not onto it")));
            }
        }
        let min_overlap = min_overlap(&states, &unitaries);
        if min_overlap.is_nan() || min_overlap <= 0.0 {
            return Err(contract("overlap condition fails: some <j|U_k|psi_j> vanishes"));
        }
        Ok(Self { n, states, unitaries, min_overlap, seed })
    }

    /// Assembles an ensemble without any validation. Meant for negative controls that
    /// need a deliberately broken ensemble; `min_overlap` is still computed honestly.
    pub fn from_parts_unchecked(states: Vec<StateVector>, unitaries: Vec<ComplexMatrix>, seed: u64) -> Self {
        let min_overlap = min_overlap(&states, &unitaries);
        Self { n: states.len(), states, unitaries, min_overlap, seed }
    }

    pub fn to_json(&self, overlap_floor: f64) -> Result<String> {
        let file = EnsembleFile {
            n: self.n,
            seed: self.seed,
            overlap_floor,
            min_overlap: self.min_overlap,
            states: self.states.iter().map(|s| interleave(s.amplitudes().iter())).collect(),
            unitaries: self.unitaries.iter().map(|u| interleave(u.transpose().iter())).collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn save(&self, path: &Path, overlap_floor: f64) -> Result<()> {
        write_atomic(path, self.to_json(overlap_floor)?.as_bytes())
    }

    /// Reads a cached ensemble and revalidates all invariants. Returns the ensemble and
    /// the overlap floor it was built against.
    pub fn load(path: &Path) -> Result<(Self, f64)> {
        let text = std::fs::read_to_string(path)?;
        let file: EnsembleFile = serde_json::from_str(&text).map_err(|e| invalid(path, e.to_string()))?;
        let n = file.n;
        if file.states.len() != n || file.unitaries.len() != n {
            return Err(invalid(
                path,
                format!("n = {n} but {} states and {} unitaries", file.states.len(), file.unitaries.len()),
            ));
        }
        let mut states = Vec::with_capacity(n);
        for raw in &file.states {
            let amps = deinterleave(raw, n).ok_or_else(|| invalid(path, "state has the wrong length"))?;
            states.push(StateVector::new(ComplexVector::from_vec(amps)).map_err(|e| invalid(path, e.to_string()))?);
        }
        let mut unitaries = Vec::with_capacity(n);
        for raw in &file.unitaries {
            let entries = deinterleave(raw, n * n).ok_or_else(|| invalid(path, "unitary has the wrong length"))?;
            unitaries.push(ComplexMatrix::from_row_slice(n, n, &entries));
        }
        let ens = Self::from_parts(states, unitaries, file.seed).map_err(|e| invalid(path, e.to_string()))?;
        if ens.min_overlap < file.overlap_floor {
            return Err(invalid(
                path,
                format!("min overlap {:e} is below the floor {:e}", ens.min_overlap, file.overlap_floor),
            ));
        }
        if (ens.min_overlap - file.min_overlap).abs() > ENSEMBLE_TOL {
            return Err(invalid(
                path,
                format!("recorded min overlap {} but entries give {}", file.min_overlap, ens.min_overlap),
            ));
        }
        Ok((ens, file.overlap_floor))
    }
}

#[derive(Serialize, Deserialize)]
struct EnsembleFile {
    n: usize,
    seed: u64,
    overlap_floor: f64,
    min_overlap: f64,
    states: Vec<Vec<f64>>,
    unitaries: Vec<Vec<f64>>,
}

fn interleave<'a>(values: impl Iterator<Item = &'a C64>) -> Vec<f64> {
    values.flat_map(|z| [z.re, z.im]).collect()
}

fn deinterleave(raw: &[f64], len: usize) -> Option<Vec<C64>> {
    (raw.len() == 2 * len).then(|| raw.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect())
}
