use super::{density_from_fixed_space, polish, FixedPointResult, FixedPointSolver};
use crate::error::{contract, Error, Result};
use crate::qmath::{
    dominant_fixed_eigenvector, hermitian_eigen, kron, matmul, max_abs, offsets, partial_trace_matrix, ComplexMatrix,
    DensityMatrix, C64, DENSE_EIGEN_LIMIT, DENSITY_NEG_EIG_TOL, ZERO,
};

/// Iteration cap for channel iteration before falling back to the eigen route.
pub const CHANNEL_MAX_ITERS: usize = 10_000;

const DAMPING: f64 = 0.5;
/// Consecutive growing steps that count as oscillation.
const OSCILLATION_STEPS: usize = 2;

/// A unitary on `⊗ dims` with one factor designated as the CTC register and a fixed
/// state on the remaining (chronology-respecting) factors.
///
/// The input is purified into branches `W_s = U (|phi_s> ⊗ 1_CTC)` weighted by the
/// eigenvalues of `rho_CR`, from which both the Deutsch map on the CTC and the CR
/// output follow without ever forming `rho_CR ⊗ rho_CTC`.
#[derive(Debug, Clone)]
pub struct DeutschSystem {
    dims: Vec<usize>,
    ctc: usize,
    branches: Vec<(f64, ComplexMatrix)>,
    kraus: Vec<ComplexMatrix>,
}

impl DeutschSystem {
    /// `rho_cr` is indexed row-major over the non-CTC factors in their original order.
    pub fn new(u: &ComplexMatrix, dims: &[usize], ctc: usize, rho_cr: &DensityMatrix) -> Result<Self> {
        let total: usize = dims.iter().product();
        if ctc >= dims.len() {
            return Err(contract(format!("CTC factor {ctc} out of range for {dims:?}")));
        }
        if u.shape() != (total, total) {
            return Err(Error::DimensionMismatch(format!("U is {:?} but dims {dims:?} give {total}", u.shape())));
        }
        let cr: Vec<usize> = (0..dims.len()).filter(|&f| f != ctc).collect();
        let d_ctc = dims[ctc];
        let d_cr = total / d_ctc;
        if rho_cr.dim() != d_cr {
            return Err(Error::DimensionMismatch(format!(
                "rho_CR has dim {} but CR factors give {d_cr}",
                rho_cr.dim()
            )));
        }
        let off_cr = offsets(dims, &cr);
        let off_ctc = offsets(dims, &[ctc]);
        let (values, vectors) = hermitian_eigen(rho_cr.matrix());
        let mut branches = Vec::new();
        let mut kraus = Vec::new();
        for (s, &p) in values.iter().enumerate() {
            if p <= 1e-15 {
                continue;
            }
            let mut embed = ComplexMatrix::zeros(total, d_ctc);
            for (c, &oc) in off_cr.iter().enumerate() {
                for (t, &ot) in off_ctc.iter().enumerate() {
                    embed[(oc + ot, t)] = vectors[(c, s)];
                }
            }
            let w = matmul(u, &embed);
            let amp = C64::new(p.sqrt(), 0.0);
            for &oc in &off_cr {
                kraus.push(ComplexMatrix::from_fn(d_ctc, d_ctc, |tp, t| w[(oc + off_ctc[tp], t)] * amp));
            }
            branches.push((p, w));
        }
        Ok(Self { dims: dims.to_vec(), ctc, branches, kraus })
    }

    pub fn ctc_dim(&self) -> usize {
        self.dims[self.ctc]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// The Deutsch map `sigma -> Tr_CR(U (rho_CR ⊗ sigma) U^dagger)`.
    pub fn apply(&self, sigma: &ComplexMatrix) -> ComplexMatrix {
        let d = self.ctc_dim();
        self.kraus.iter().fold(ComplexMatrix::zeros(d, d), |acc, k| acc + k * sigma * k.adjoint())
    }

    /// Row-major vectorisation of [`Self::apply`]: `sum_K K ⊗ conj(K)`.
    pub fn superoperator(&self) -> ComplexMatrix {
        let d = self.ctc_dim();
        self.kraus.iter().fold(ComplexMatrix::zeros(d * d, d * d), |acc, k| acc + kron(k, &k.conjugate()))
    }

    /// The full post-interaction state `U (rho_CR ⊗ sigma) U^dagger` on `⊗ dims`.
    pub fn joint_output(&self, sigma: &ComplexMatrix) -> ComplexMatrix {
        let total: usize = self.dims.iter().product();
        let mut out = ComplexMatrix::from_element(total, total, ZERO);
        for (p, w) in &self.branches {
            out += matmul(&matmul(w, sigma), &w.adjoint()) * C64::new(*p, 0.0);
        }
        out
    }

    /// The chronology-respecting output `Tr_CTC(U (rho_CR ⊗ sigma) U^dagger)`.
    pub fn cr_output(&self, sigma: &ComplexMatrix) -> Result<DensityMatrix> {
        let cr: Vec<usize> = (0..self.dims.len()).filter(|&f| f != self.ctc).collect();
        let reduced = partial_trace_matrix(&self.joint_output(sigma), &self.dims, &cr)?;
        DensityMatrix::from_noisy(&reduced, DENSITY_NEG_EIG_TOL)
    }

    /// `max |Phi(rho) - rho|`.
    pub fn residual(&self, rho: &ComplexMatrix) -> f64 {
        max_abs(&(self.apply(rho) - rho))
    }
}

/// Solves the Deutsch condition by iterating the channel from `init`.
///
/// Stops once the step change is at most `tol` and the geometric tail estimated from
/// successive changes is too. Growing steps switch on damping `rho <- (rho + Phi(rho))/2`,
/// which has the same fixed points. If the cap is hit, the vectorised channel goes
/// through the eigenvalue-1 solver instead.
pub fn deutsch_channel_fixed_point(
    system: &DeutschSystem,
    init: &DensityMatrix,
    tol: f64,
    max_iters: usize,
) -> Result<FixedPointResult> {
    let d = system.ctc_dim();
    if init.dim() != d {
        return Err(Error::DimensionMismatch(format!("initial CTC state has dim {} not {d}", init.dim())));
    }
    let mut rho = init.matrix().clone();
    let mut damping = 1.0;
    let mut last_change = f64::INFINITY;
    let mut growing = 0;
    let mut ratio = 1.0f64;
    for it in 1..=max_iters {
        let image = system.apply(&rho);
        let step = &image - &rho;
        let change = max_abs(&step);
        if change <= tol && (change == 0.0 || (ratio < 1.0 && change * ratio / (1.0 - ratio) <= tol)) {
            return finish(system, &rho, tol, FixedPointSolver::ChannelIteration, it);
        }
        if change > last_change {
            growing += 1;
            if growing >= OSCILLATION_STEPS {
                damping = DAMPING;
            }
        } else {
            growing = 0;
        }
        if last_change.is_finite() && last_change > 0.0 {
            ratio = change / last_change;
        }
        last_change = change;
        rho += step * C64::new(damping, 0.0);
    }
    let fe = dominant_fixed_eigenvector(&system.superoperator(), 1.0, tol)?;
    let rho = density_from_fixed_space(&fe.basis, d, &|m: &ComplexMatrix| system.apply(m), tol)?;
    finish(system, rho.matrix(), tol, FixedPointSolver::DenseEigen, max_iters)
}

fn finish(
    system: &DeutschSystem,
    rho: &ComplexMatrix,
    tol: f64,
    solver: FixedPointSolver,
    iterations: usize,
) -> Result<FixedPointResult> {
    let rho = DensityMatrix::from_noisy(rho, DENSITY_NEG_EIG_TOL)?;
    let (rho_ctc, residual) = polish(rho, &|m: &ComplexMatrix| system.apply(m), tol)?;
    if residual > tol {
        return Err(Error::NoFixedPoint { target: 1.0, tol, closest: residual });
    }
    // Iteration alone cannot see other fixed points; count them when the channel is small.
    let d = system.ctc_dim();
    let degeneracy = if d * d <= DENSE_EIGEN_LIMIT {
        dominant_fixed_eigenvector(&system.superoperator(), 1.0, tol).map_or(1, |fe| fe.degeneracy)
    } else {
        1
    };
    Ok(FixedPointResult { rho_ctc, residual, degeneracy, solver, iterations })
}
