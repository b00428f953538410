use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{density_from_fixed_space, polish, FixedPointResult, FixedPointSolver};
use crate::brun::UnitaryEnsemble;
use crate::error::{Error, Result};
use crate::qmath::{
    dominant_fixed_eigenvector, matmul, max_abs, power_fixed_space, unvec_row_major, vec_row_major, ComplexMatrix,
    ComplexVector, DensityMatrix, StateVector, C64, DENSITY_NEG_EIG_TOL, MAX_POWER_ITERATIONS,
};

/// Largest alphabet solved through the dense `n^2 x n^2` null space. The dense solve
/// costs `O(n^6)` against roughly `O(n^4)` per power step, and the structured solver
/// is already faster from about `n = 20`.
pub const DENSE_KERNEL_MAX_N: usize = 16;

/// The broadcast circuit specialised to one input `|Psi>`, acting on the CTC
/// coefficients `lambda_mn` of `rho_CTC = sum lambda_mn |m><n|`.
///
/// With `X[a, m] = <a|U_m|Psi>` and `G[n, m] = <psi_n|psi_m>` the Deutsch map reads
///
/// `lambda'_ab = sum_mn <n|U_b U_a^dagger|m> G[n, m] X[a, m] conj(X[b, n]) lambda_mn`,
///
/// which [`Self::apply`] evaluates as two `n^2 x n` by `n x n` style products instead of
/// forming the `n^2 x n^2` matrix.
#[derive(Debug, Clone)]
pub struct CloneKernel<'a> {
    ensemble: &'a UnitaryEnsemble,
    psi: StateVector,
    x: ComplexMatrix,
    gram: ComplexMatrix,
    /// Row block `a` is `Y_a = U_a^dagger diag(X[a, :])`.
    y_stack: ComplexMatrix,
    /// Column `b`, row `k n + n'` holds `Z_b[n', k] = conj(X[b, n']) U_b[n', k]`.
    z_flat_t: ComplexMatrix,
}

impl<'a> CloneKernel<'a> {
    pub fn new(ensemble: &'a UnitaryEnsemble, psi: &StateVector) -> Result<Self> {
        let n = ensemble.n;
        if psi.dim() != n {
            return Err(Error::DimensionMismatch(format!("input has dim {} but the ensemble has n = {n}", psi.dim())));
        }
        let mut x = ComplexMatrix::zeros(n, n);
        for (m, u) in ensemble.unitaries.iter().enumerate() {
            x.set_column(m, &(u * psi.amplitudes()));
        }
        let gram = ComplexMatrix::from_fn(n, n, |i, j| ensemble.states[i].inner(&ensemble.states[j]));
        let mut y_stack = ComplexMatrix::zeros(n * n, n);
        let mut z_flat_t = ComplexMatrix::zeros(n * n, n);
        for (a, u) in ensemble.unitaries.iter().enumerate() {
            for k in 0..n {
                for m in 0..n {
                    y_stack[(a * n + k, m)] = u[(m, k)].conj() * x[(a, m)];
                    z_flat_t[(k * n + m, a)] = x[(a, m)].conj() * u[(m, k)];
                }
            }
        }
        Ok(Self { ensemble, psi: psi.clone(), x, gram, y_stack, z_flat_t })
    }

    pub fn n(&self) -> usize {
        self.ensemble.n
    }

    pub fn input(&self) -> &StateVector {
        &self.psi
    }

    /// `X[a, m] = <a|U_m|Psi>`.
    pub fn overlaps(&self) -> &ComplexMatrix {
        &self.x
    }

    /// The Deutsch map on the coefficient matrix, in `O(n^4)`.
    pub fn apply(&self, lambda: &ComplexMatrix) -> ComplexMatrix {
        let n = self.n();
        let h = ComplexMatrix::from_fn(n, n, |m, k| self.gram[(k, m)] * lambda[(m, k)]);
        let r_stack = matmul(&self.y_stack, &h);
        let r_flat = ComplexMatrix::from_fn(n, n * n, |a, col| r_stack[(a * n + col / n, col % n)]);
        matmul(&r_flat, &self.z_flat_t)
    }

    fn apply_vec(&self, v: &ComplexVector) -> ComplexVector {
        vec_row_major(&self.apply(&unvec_row_major(v, self.n())))
    }

    /// The coefficient map as an explicit `n^2 x n^2` matrix, rows `(a, b)` and
    /// columns `(m, n)` both row-major.
    pub fn matrix(&self) -> ComplexMatrix {
        let n = self.n();
        let u = &self.ensemble.unitaries;
        let mut out = ComplexMatrix::zeros(n * n, n * n);
        for a in 0..n {
            let ua_adj = u[a].adjoint();
            for b in 0..n {
                let p = matmul(&u[b], &ua_adj);
                for m in 0..n {
                    let xam = self.x[(a, m)];
                    for k in 0..n {
                        out[(a * n + b, m * n + k)] = p[(k, m)] * self.gram[(k, m)] * xam * self.x[(b, k)].conj();
                    }
                }
            }
        }
        out
    }

    /// Transition matrix `P[a, m] = |<a|U_m|Psi>|^2` of the diagonal of `lambda`, which
    /// evolves on its own under the map.
    pub fn markov_chain(&self) -> ComplexMatrix {
        self.x.map(|z| C64::new(z.norm_sqr(), 0.0))
    }

    /// Output states of registers A and B for CTC coefficients `lambda`.
    pub fn marginals(&self, lambda: &ComplexMatrix) -> (ComplexMatrix, ComplexMatrix) {
        let n = self.n();
        let mut rho_a = ComplexMatrix::zeros(n, n);
        for (a, u) in self.ensemble.unitaries.iter().enumerate() {
            let k = ComplexMatrix::from_fn(n, n, |m, j| {
                lambda[(m, j)] * self.x[(a, m)] * self.x[(a, j)].conj() * self.gram[(j, m)]
            });
            rho_a += matmul(&u.adjoint(), &matmul(&k, u));
        }
        let mut rho_b = ComplexMatrix::zeros(n, n);
        for (j, s) in self.ensemble.states.iter().enumerate() {
            let weight: f64 = (0..n).map(|a| self.x[(a, j)].norm_sqr()).sum();
            rho_b += s.projector().matrix() * C64::new(lambda[(j, j)].re * weight, 0.0);
        }
        (rho_a, rho_b)
    }

    /// `(F1, F2)` from the closed-form sums over `lambda`:
    ///
    /// `F1^2 = sum_{i,m,n} lambda_mn X[i,m] conj(X[i,n]) G[n,m] conj(X[m,i]) X[n,i]`,
    /// `F2^2 = sum_{i,n} lambda_nn |X[i,n]|^2 |<Psi|psi_n>|^2`.
    pub fn fidelities(&self, lambda: &ComplexMatrix) -> (f64, f64) {
        let n = self.n();
        let x = &self.x;
        let mut f1 = C64::new(0.0, 0.0);
        for i in 0..n {
            for m in 0..n {
                let left = x[(i, m)] * x[(m, i)].conj();
                for k in 0..n {
                    f1 += lambda[(m, k)] * left * x[(i, k)].conj() * self.gram[(k, m)] * x[(k, i)];
                }
            }
        }
        let mut f2 = 0.0;
        for (j, s) in self.ensemble.states.iter().enumerate() {
            let weight: f64 = (0..n).map(|i| x[(i, j)].norm_sqr()).sum();
            f2 += lambda[(j, j)].re * weight * self.psi.inner(s).norm_sqr();
        }
        (f1.re.max(0.0).sqrt(), f2.max(0.0).sqrt())
    }

    /// `max |Phi(rho) - rho|` through the matrix-free map.
    pub fn residual(&self, rho: &ComplexMatrix) -> f64 {
        max_abs(&(self.apply(rho) - rho))
    }

    /// Dense eigen route up to [`DENSE_KERNEL_MAX_N`], structured power iteration above it.
    pub fn solve(&self, tol: f64) -> Result<FixedPointResult> {
        if self.n() <= DENSE_KERNEL_MAX_N {
            solve_fixed_point_matrix(&self.matrix(), tol)
        } else {
            solve_fixed_point_structured(self, tol)
        }
    }
}

/// The `n^2 x n^2` coefficient matrix for input `psi`; see [`CloneKernel::matrix`].
pub fn fixed_point_matrix(ensemble: &UnitaryEnsemble, psi: &StateVector) -> Result<ComplexMatrix> {
    Ok(CloneKernel::new(ensemble, psi)?.matrix())
}

/// Eigenvalue-1 eigenvector(s) of a coefficient matrix, reshaped into a density matrix.
pub fn solve_fixed_point_matrix(m: &ComplexMatrix, tol: f64) -> Result<FixedPointResult> {
    let dim = m.nrows();
    let d = (dim as f64).sqrt().round() as usize;
    if d * d != dim || !m.is_square() {
        return Err(Error::DimensionMismatch(format!("coefficient matrix is {:?}, not n^2 x n^2", m.shape())));
    }
    let fe = dominant_fixed_eigenvector(m, 1.0, tol)?;
    let apply = |rho: &ComplexMatrix| unvec_row_major(&(m * vec_row_major(rho)), d);
    let rho = density_from_fixed_space(&fe.basis, d, &apply, tol)?;
    let (rho_ctc, residual) = polish(rho, &apply, tol)?;
    if residual > tol {
        return Err(Error::NoFixedPoint { target: 1.0, tol, closest: residual });
    }
    Ok(FixedPointResult {
        rho_ctc,
        residual,
        degeneracy: fe.degeneracy,
        solver: FixedPointSolver::DenseEigen,
        iterations: fe.iterations,
    })
}

/// Matrix-free solve for large alphabets.
///
/// The diagonal of `lambda` is a Markov chain, so its stationary distributions come
/// from an `n x n` problem. Power iteration on the full map then starts from each
/// extremal stationary diagonal and only has to relax the off-diagonal part. The
/// reported degeneracy is that of the diagonal chain.
pub fn solve_fixed_point_structured(kernel: &CloneKernel<'_>, tol: f64) -> Result<FixedPointResult> {
    let n = kernel.n();
    let chain = dominant_fixed_eigenvector(&kernel.markov_chain(), 1.0, tol)?;
    let mut stationary: Vec<Vec<f64>> = Vec::new();
    for v in &chain.basis {
        for sign in [1.0, -1.0] {
            // A real stationary vector splits into stationary positive and negative parts.
            for part in [v.map(|z| z.re), v.map(|z| z.im)] {
                let p: Vec<f64> = part.iter().map(|&x| (sign * x).max(0.0)).collect();
                let total: f64 = p.iter().sum();
                if total <= 1e-8 {
                    continue;
                }
                let p: Vec<f64> = p.iter().map(|x| x / total).collect();
                if !stationary.iter().any(|q| q.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum::<f64>() < 1e-6) {
                    stationary.push(p);
                }
            }
        }
    }
    if stationary.is_empty() {
        return Err(Error::NoFixedPoint { target: 1.0, tol, closest: chain.residual });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut mix = ComplexMatrix::zeros(n, n);
    let mut iterations = 0;
    for p in &stationary {
        let init = ComplexMatrix::from_fn(n, n, |i, j| if i == j { C64::new(p[i], 0.0) } else { C64::new(0.0, 0.0) });
        let v0 = vec_row_major(&init);
        let v0 = v0.unscale(v0.norm());
        let fe = power_fixed_space(|v| kernel.apply_vec(v), v0, tol, MAX_POWER_ITERATIONS, 0, &mut rng)?;
        iterations += fe.iterations;
        let rho = density_from_fixed_space(&fe.basis, n, &|m: &ComplexMatrix| kernel.apply(m), tol)?;
        mix += rho.matrix();
    }
    let mix = DensityMatrix::from_noisy(&(mix / C64::new(stationary.len() as f64, 0.0)), DENSITY_NEG_EIG_TOL)?;
    let (rho_ctc, residual) = polish(mix, &|m: &ComplexMatrix| kernel.apply(m), tol)?;
    if residual > tol {
        return Err(Error::NoFixedPoint { target: 1.0, tol, closest: residual });
    }
    Ok(FixedPointResult {
        rho_ctc,
        residual,
        degeneracy: chain.degeneracy,
        solver: FixedPointSolver::PowerIteration,
        iterations,
    })
}
