//! Fixed vectors of a square (generally non-Hermitian) matrix: `M v = target * v`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::linalg::{matmul, random_state, ComplexMatrix, ComplexVector, C64};
use crate::error::{contract, Error, Result};

/// Largest dimension handled by the dense null-space route.
pub const DENSE_EIGEN_LIMIT: usize = 1024;
/// Iteration cap for the power-iteration route.
pub const MAX_POWER_ITERATIONS: usize = 100_000;
/// Extra fixed directions the power route will look for after the first.
pub const MAX_DEFLATION_ROUNDS: usize = 8;
const DEFLATION_ROUND_ITERATIONS: usize = 5_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenStrategy {
    /// Dense below [`DENSE_EIGEN_LIMIT`], power iteration above.
    Auto,
    Dense,
    PowerIteration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenMethod {
    Dense,
    PowerIteration,
}

#[derive(Debug, Clone)]
pub struct FixedEigen {
    /// Unit vector with `||M v - target v|| = residual`.
    pub vector: ComplexVector,
    pub residual: f64,
    /// Dimension of the eigenvalue-`target` eigenspace that was resolved.
    pub degeneracy: usize,
    /// Orthonormal basis of that eigenspace; `basis[0] == vector`.
    pub basis: Vec<ComplexVector>,
    pub method: EigenMethod,
    pub iterations: usize,
}

/// Finds the eigenvalue-`target` eigenspace of `m` and returns a unit vector in it.
///
/// Dimensions up to [`DENSE_EIGEN_LIMIT`] use a dense null-space computation of
/// `M - target I`; larger ones use damped power iteration with deflation, which
/// assumes `target` is on the spectral radius (true for vectorised channels with
/// `target = 1`).
pub fn dominant_fixed_eigenvector(m: &ComplexMatrix, target: f64, tol: f64) -> Result<FixedEigen> {
    dominant_fixed_eigenvector_with(m, target, tol, EigenStrategy::Auto)
}

pub fn dominant_fixed_eigenvector_with(
    m: &ComplexMatrix,
    target: f64,
    tol: f64,
    strategy: EigenStrategy,
) -> Result<FixedEigen> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(contract(format!("fixed-vector search needs a square matrix, got {:?}", m.shape())));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(contract("tolerance must be positive"));
    }
    let dense = match strategy {
        EigenStrategy::Auto => m.nrows() <= DENSE_EIGEN_LIMIT,
        EigenStrategy::Dense => true,
        EigenStrategy::PowerIteration => false,
    };
    if dense {
        dense_null_space(m, target, tol)
    } else {
        if target == 0.0 {
            return Err(contract("power iteration needs a non-zero target"));
        }
        let scale = C64::new(1.0 / target, 0.0);
        let apply = |v: &ComplexVector| (m * v) * scale;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let init = random_state(m.nrows(), &mut rng);
        power_fixed_space(apply, init, tol, MAX_POWER_ITERATIONS, MAX_DEFLATION_ROUNDS, &mut rng)
    }
}

fn dense_null_space(m: &ComplexMatrix, target: f64, tol: f64) -> Result<FixedEigen> {
    let n = m.nrows();
    let mut a = m.clone();
    for i in 0..n {
        a[(i, i)] -= C64::new(target, 0.0);
    }

    // Full pivoting orders |U_ii| roughly by decreasing size, so the trailing
    // small pivots span a candidate null space.
    let lu = a.clone().full_piv_lu();
    let u = lu.u();
    let pivots: Vec<f64> = (0..n).map(|i| u[(i, i)].norm()).collect();
    let scale = pivots.iter().copied().fold(1.0f64, f64::max);
    let loose = tol.sqrt().max(1e-6) * scale;
    let rank = pivots.iter().position(|&p| p <= loose).unwrap_or(n - 1).min(n - 1);
    let k = n - rank;

    // Null vectors of U: y = [-U11^{-1} U12 z; z], then undo the column permutation.
    let mut y = ComplexMatrix::zeros(n, k);
    for c in 0..k {
        y[(rank + c, c)] = C64::new(1.0, 0.0);
    }
    if rank > 0 {
        let u11 = u.view((0, 0), (rank, rank)).into_owned();
        let u12 = u.view((0, rank), (rank, k)).into_owned();
        let top = u11
            .solve_upper_triangular(&(-u12))
            .ok_or_else(|| contract("singular leading block in null-space extraction"))?;
        y.view_mut((0, 0), (rank, k)).copy_from(&top);
    }
    lu.q().inv_permute_rows(&mut y);

    // Refine inside the candidate space: the exact null directions are the right
    // singular vectors of A B with singular value <= tol.
    let basis = y.qr().q();
    let ab = matmul(&a, &basis);
    let svd = ab.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let closest = svd.singular_values[order[0]];
    let null: Vec<ComplexVector> = order
        .iter()
        .filter(|&&i| svd.singular_values[i] <= tol)
        .map(|&i| {
            let w: ComplexVector = v_t.row(i).adjoint();
            let v = &basis * w;
            let norm = v.norm();
            v.unscale(norm)
        })
        .collect();
    if null.is_empty() {
        return Err(Error::NoFixedPoint { target, tol, closest });
    }
    let vector = null[0].clone();
    let residual = (&a * &vector).norm();
    Ok(FixedEigen { vector, residual, degeneracy: null.len(), basis: null, method: EigenMethod::Dense, iterations: 0 })
}

/// Fixed space of a map whose spectrum lies in the closed unit disc, by power iteration
/// on the lazy map `(v + A v) / 2` (removes the rest of the unit circle) followed by
/// deflation rounds that project out the directions already found.
pub fn power_fixed_space<F>(
    apply: F,
    init: ComplexVector,
    tol: f64,
    max_iters: usize,
    deflation_rounds: usize,
    rng: &mut ChaCha8Rng,
) -> Result<FixedEigen>
where
    F: Fn(&ComplexVector) -> ComplexVector,
{
    let (first, residual, mut iterations) = power_round(&apply, init, &[], tol, max_iters)?;
    let mut basis = vec![first.clone()];
    if residual > tol {
        return Err(Error::NoFixedPoint { target: 1.0, tol, closest: residual });
    }
    for _ in 0..deflation_rounds {
        let start = random_state(first.len(), rng);
        match power_round(&apply, start, &basis, tol, DEFLATION_ROUND_ITERATIONS) {
            Ok((v, r, it)) if r <= tol => {
                iterations += it;
                basis.push(v);
            }
            Ok((_, _, it)) => {
                iterations += it;
                break;
            }
            Err(_) => break,
        }
    }
    Ok(FixedEigen {
        vector: first,
        residual,
        degeneracy: basis.len(),
        basis,
        method: EigenMethod::PowerIteration,
        iterations,
    })
}

/// One power-iteration run; returns the orthonormalised iterate, its residual
/// `||A v - v||` and the iteration count.
fn power_round<F>(
    apply: &F,
    init: ComplexVector,
    found: &[ComplexVector],
    tol: f64,
    max_iters: usize,
) -> Result<(ComplexVector, f64, usize)>
where
    F: Fn(&ComplexVector) -> ComplexVector,
{
    let mut v = project_out(init, found);
    let norm = v.norm();
    if norm.is_nan() || norm <= 1e-300 {
        return Err(contract("power iteration start vector lies in the deflated space"));
    }
    v.unscale_mut(norm);
    let half = C64::new(0.5, 0.0);
    let mut residual = f64::INFINITY;
    for it in 1..=max_iters {
        let av = apply(&v);
        residual = (&av - &v).norm();
        if residual <= tol {
            return Ok((v, residual, it));
        }
        let next = project_out((&v + &av) * half, found);
        let norm = next.norm();
        if !norm.is_finite() || norm <= 1e-300 {
            return Err(contract("power iteration collapsed"));
        }
        v = next.unscale(norm);
    }
    Ok((v, residual, max_iters))
}

fn project_out(mut v: ComplexVector, found: &[ComplexVector]) -> ComplexVector {
    for b in found {
        let c = b.dotc(&v);
        v.axpy(-c, b, C64::new(1.0, 0.0));
    }
    v
}

/// `||M v - target v||`.
pub fn fixed_residual(m: &ComplexMatrix, v: &ComplexVector, target: f64) -> f64 {
    (m * v - v * C64::new(target, 0.0)).norm()
}
