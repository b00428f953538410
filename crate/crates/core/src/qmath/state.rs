use super::linalg::{
    hermitian_defect, hermitian_eigen, hermitian_part, is_finite, outer, partial_trace_matrix, spectral_apply,
    ComplexMatrix, ComplexVector, C64, ONE,
};
use crate::error::{contract, Error, Result};

pub const STATE_NORM_TOL: f64 = 1e-12;
pub const DENSITY_HERMITIAN_TOL: f64 = 1e-10;
pub const DENSITY_TRACE_TOL: f64 = 1e-10;
pub const DENSITY_NEG_EIG_TOL: f64 = 1e-9;

/// A unit-norm pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(ComplexVector);

impl StateVector {
    /// Wraps `amplitudes`, which must already have unit norm.
    pub fn new(amplitudes: ComplexVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if amplitudes.is_empty() || !(norm - 1.0).abs().le(&STATE_NORM_TOL) {
            return Err(contract(format!("state vector norm {norm} is not 1")));
        }
        Ok(Self(amplitudes))
    }

    /// Rescales `amplitudes` to unit norm.
    pub fn normalized(amplitudes: ComplexVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(contract("cannot normalise a zero or non-finite vector"));
        }
        Ok(Self(amplitudes.unscale(norm)))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        Self(super::linalg::basis_vector(dim, index))
    }

    pub fn from_slice(amplitudes: &[C64]) -> Result<Self> {
        Self::new(ComplexVector::from_column_slice(amplitudes))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &ComplexVector {
        &self.0
    }

    pub fn into_inner(self) -> ComplexVector {
        self.0
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.0.dotc(&other.0)
    }

    pub fn projector(&self) -> DensityMatrix {
        DensityMatrix(outer(&self.0, &self.0))
    }

    /// Applies a unitary, renormalising away rounding drift.
    pub fn evolve(&self, u: &ComplexMatrix) -> Result<StateVector> {
        if u.ncols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} operator on dim {}",
                u.nrows(),
                u.ncols(),
                self.dim()
            )));
        }
        Self::normalized(u * &self.0)
    }
}

/// A Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    /// Validates every density-matrix invariant.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(contract(format!("density matrix must be square, got {}x{}", matrix.nrows(), matrix.ncols())));
        }
        if !is_finite(&matrix) {
            return Err(contract("density matrix has non-finite entries"));
        }
        let herm = hermitian_defect(&matrix);
        if herm > DENSITY_HERMITIAN_TOL {
            return Err(contract(format!("density matrix is not Hermitian (defect {herm:e})")));
        }
        let tr = matrix.trace();
        if (tr - ONE).norm() > DENSITY_TRACE_TOL {
            return Err(contract(format!("density matrix trace is {tr}, not 1")));
        }
        let (values, _) = hermitian_eigen(&matrix);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -DENSITY_NEG_EIG_TOL {
            return Err(contract(format!("density matrix has negative eigenvalue {min:e}")));
        }
        Ok(Self(matrix))
    }

    /// Projects a nearly-valid matrix onto the density matrices: Hermitian part,
    /// eigenvalues clamped at zero, trace renormalised. Fails if an eigenvalue is
    /// below `-neg_tol` or the trace is not positive.
    pub fn from_noisy(matrix: &ComplexMatrix, neg_tol: f64) -> Result<Self> {
        if !matrix.is_square() || !is_finite(matrix) {
            return Err(contract("cannot repair a non-square or non-finite matrix"));
        }
        let tr = matrix.trace().re;
        if tr.is_nan() || tr <= 0.0 {
            return Err(contract(format!("matrix trace {tr} is not positive")));
        }
        let scaled = hermitian_part(matrix).unscale(tr);
        let (values, vectors) = hermitian_eigen(&scaled);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -neg_tol {
            return Err(contract(format!("eigenvalue {min:e} is below the clamp tolerance")));
        }
        let clamped = spectral_apply(&values, &vectors, |l| l.max(0.0));
        let t = clamped.trace().re;
        Self::new(hermitian_part(&clamped.unscale(t)))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim, dim).unscale(dim as f64))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        Self(self.0.kronecker(&other.0))
    }

    /// `<psi|rho|psi>`, real part.
    pub fn expectation(&self, psi: &StateVector) -> f64 {
        psi.amplitudes().dotc(&(&self.0 * psi.amplitudes())).re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&self.0).0.iter().copied().collect()
    }
}

impl TryFrom<ComplexMatrix> for DensityMatrix {
    type Error = Error;

    fn try_from(m: ComplexMatrix) -> Result<Self> {
        Self::new(m)
    }
}

impl From<DensityMatrix> for ComplexMatrix {
    fn from(d: DensityMatrix) -> Self {
        d.0
    }
}

impl From<&StateVector> for DensityMatrix {
    fn from(psi: &StateVector) -> Self {
        psi.projector()
    }
}

/// Reduced state over the factors in `keep` (kept in their original order).
pub fn partial_trace(rho: &DensityMatrix, dims: &[usize], keep: &[usize]) -> Result<DensityMatrix> {
    let reduced = partial_trace_matrix(rho.matrix(), dims, keep)?;
    DensityMatrix::from_noisy(&reduced, DENSITY_NEG_EIG_TOL)
}

/// Trace distance `||rho - sigma||_1 / 2`.
pub fn trace_distance(rho: &ComplexMatrix, sigma: &ComplexMatrix) -> Result<f64> {
    if rho.shape() != sigma.shape() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", rho.shape(), sigma.shape())));
    }
    let (values, _) = hermitian_eigen(&(rho - sigma));
    Ok(0.5 * values.iter().map(|l| l.abs()).sum::<f64>())
}
