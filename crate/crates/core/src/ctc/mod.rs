//! The broadcast circuit, Deutsch self-consistency solvers and clone evaluation.
//!
//! Two independent routes reach the CTC fixed point. [`DeutschSystem`] builds the full
//! circuit and iterates the induced channel on the CTC register; [`CloneKernel`] works
//! directly with the `n^2 x n^2` map on the CTC coefficients `lambda_mn`, either densely
//! or matrix-free. The dense route doubles as an oracle for the structured one.

mod circuit;
mod clone;
mod deutsch;
mod inequalities;
mod kernel;
mod nosignal;

pub use circuit::{broadcast_unitary, csum, no_signalling_unitary, swap_operator, DENSE_ORACLE_MAX_N};
pub use clone::{clone_input, output_fidelities, symmetrized_clone, symmetrized_clone_with, CloneOutcome};
pub use deutsch::{deutsch_channel_fixed_point, DeutschSystem, CHANNEL_MAX_ITERS};
pub use inequalities::{check_ctc_inequalities, InequalityReport};
pub use kernel::{
    fixed_point_matrix, solve_fixed_point_matrix, solve_fixed_point_structured, CloneKernel, DENSE_KERNEL_MAX_N,
};
pub use nosignal::{no_signalling_experiment, NoSignallingReport};

use crate::error::{Error, Result};
use crate::qmath::{
    hermitian_eigen, hermitian_part, max_abs, spectral_apply, trace_distance, unvec_row_major, ComplexMatrix,
    ComplexVector, DensityMatrix, C64, DENSITY_NEG_EIG_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FixedPointSolver {
    /// Null space of `M - I` for the dense coefficient map.
    DenseEigen,
    /// Matrix-free power iteration on the coefficient map.
    PowerIteration,
    /// Iteration of the Deutsch channel built from the full circuit.
    ChannelIteration,
}

impl FixedPointSolver {
    pub fn label(self) -> &'static str {
        match self {
            Self::DenseEigen => "dense_eigen",
            Self::PowerIteration => "power_iteration",
            Self::ChannelIteration => "channel_iteration",
        }
    }
}

/// A solved CTC state with its self-consistency residual `max |Phi(rho) - rho|`.
#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub rho_ctc: DensityMatrix,
    pub residual: f64,
    /// Dimension of the fixed space found; 1 means the fixed point is unique.
    pub degeneracy: usize,
    pub solver: FixedPointSolver,
    pub iterations: usize,
}

/// Iterations of `rho <- Phi(rho)` allowed when polishing an eigen-solver result.
const POLISH_ITERS: usize = 200;
/// Fixed points closer than this in trace distance are treated as the same.
const DEDUP_DISTANCE: f64 = 1e-6;

/// Applies the map until the residual drops to `tol` or stops improving.
/// Each step keeps `rho` a density matrix, so this only removes solver noise.
pub(crate) fn polish<F>(rho: DensityMatrix, apply: &F, tol: f64) -> Result<(DensityMatrix, f64)>
where
    F: Fn(&ComplexMatrix) -> ComplexMatrix,
{
    let mut best = rho;
    let mut image = apply(best.matrix());
    let mut residual = max_abs(&(&image - best.matrix()));
    for _ in 0..POLISH_ITERS {
        if residual <= tol {
            break;
        }
        let next = DensityMatrix::from_noisy(&image, DENSITY_NEG_EIG_TOL)?;
        let next_image = apply(next.matrix());
        let r = max_abs(&(&next_image - next.matrix()));
        if r >= residual {
            break;
        }
        (best, image, residual) = (next, next_image, r);
    }
    Ok((best, residual))
}

/// Turns an orthonormal basis of the eigenvalue-1 space of a Hermiticity-preserving,
/// trace-preserving positive map into a fixed density matrix.
///
/// A single basis vector is rescaled to unit trace. With several, the Hermitian and
/// anti-Hermitian parts of each basis element are split into positive and negative
/// parts; for such maps those parts are fixed points themselves. The distinct ones
/// that pass the residual check are mixed uniformly.
pub(crate) fn density_from_fixed_space<F>(
    basis: &[ComplexVector],
    d: usize,
    apply: &F,
    tol: f64,
) -> Result<DensityMatrix>
where
    F: Fn(&ComplexMatrix) -> ComplexMatrix,
{
    if basis.len() == 1 {
        let lambda = unvec_row_major(&basis[0], d);
        let t = lambda.trace();
        if t.norm() > 1e-8 * lambda.norm() {
            return DensityMatrix::from_noisy(&hermitian_part(&(lambda / t)), DENSITY_NEG_EIG_TOL.max(tol));
        }
    }
    let mut found: Vec<DensityMatrix> = Vec::new();
    let accept = 1e3 * tol.max(1e-12);
    for v in basis {
        let lambda = unvec_row_major(v, d);
        let parts = [hermitian_part(&lambda), hermitian_part(&(&lambda * C64::new(0.0, -1.0)))];
        for h in parts {
            let (values, vectors) = hermitian_eigen(&h);
            let scale = values.iter().fold(0.0f64, |m, l| m.max(l.abs()));
            if scale <= 1e-12 {
                continue;
            }
            for sign in [1.0, -1.0] {
                let part = spectral_apply(&values, &vectors, |l| (sign * l).max(0.0));
                let tr = part.trace().re;
                if tr <= 1e-8 * scale {
                    continue;
                }
                let rho = DensityMatrix::from_noisy(&part, DENSITY_NEG_EIG_TOL)?;
                if max_abs(&(apply(rho.matrix()) - rho.matrix())) > accept {
                    continue;
                }
                let duplicate =
                    found.iter().any(|f| trace_distance(f.matrix(), rho.matrix()).is_ok_and(|t| t < DEDUP_DISTANCE));
                if !duplicate {
                    found.push(rho);
                }
            }
        }
    }
    if found.is_empty() {
        return Err(Error::NoFixedPoint { target: 1.0, tol, closest: f64::NAN });
    }
    let k = found.len() as f64;
    let mix = found.iter().fold(ComplexMatrix::zeros(d, d), |acc, f| acc + f.matrix()) / C64::new(k, 0.0);
    DensityMatrix::from_noisy(&mix, DENSITY_NEG_EIG_TOL)
}
