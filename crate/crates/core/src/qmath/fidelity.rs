use super::linalg::{matmul, psd_sqrt};
use super::state::{DensityMatrix, StateVector, DENSITY_NEG_EIG_TOL};
use crate::error::{Error, Result};

/// Uhlmann fidelity `Tr sqrt(sqrt(rho) sigma sqrt(rho))`, in `[0, 1]`.
///
/// This is the root fidelity; square it for the "squared" convention. Evaluated as the
/// trace norm of `sqrt(rho) sqrt(sigma)`, whose singular values are the square roots of
/// the eigenvalues of `sqrt(rho) sigma sqrt(rho)` but carry only absolute rounding error.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch(format!("fidelity of dims {} and {}", rho.dim(), sigma.dim())));
    }
    let a = psd_sqrt(rho.matrix(), DENSITY_NEG_EIG_TOL)?;
    let b = psd_sqrt(sigma.matrix(), DENSITY_NEG_EIG_TOL)?;
    let f: f64 = matmul(&a, &b).singular_values().iter().sum();
    Ok(f.min(1.0))
}

/// `sqrt(<psi|rho|psi>)`, the pure-state form of [`fidelity`].
pub fn fidelity_pure(psi: &StateVector, rho: &DensityMatrix) -> Result<f64> {
    if psi.dim() != rho.dim() {
        return Err(Error::DimensionMismatch(format!("fidelity of dims {} and {}", psi.dim(), rho.dim())));
    }
    Ok(rho.expectation(psi).max(0.0).sqrt().min(1.0))
}
