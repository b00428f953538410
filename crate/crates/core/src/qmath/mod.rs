//! Dense complex linear algebra and quantum-information primitives.

mod eigen;
mod fidelity;
mod linalg;
mod state;

pub use eigen::{
    dominant_fixed_eigenvector, dominant_fixed_eigenvector_with, fixed_residual, power_fixed_space, EigenMethod,
    EigenStrategy, FixedEigen, DENSE_EIGEN_LIMIT, MAX_DEFLATION_ROUNDS, MAX_POWER_ITERATIONS,
};
pub use fidelity::{fidelity, fidelity_pure};
pub(crate) use linalg::offsets;
pub use linalg::{
    basis_vector, complex_gaussian, haar_unitary, hermitian_defect, hermitian_eigen, hermitian_part, identity,
    is_density, is_finite, is_unitary, kron, kron_all, kron_vec, matmul, matmul_adjoint, max_abs, outer, outer_basis,
    partial_trace_matrix, permutation_operator, psd_sqrt, random_density_matrix, random_state, spectral_apply,
    unitarity_defect, unvec_row_major, vec_row_major, ComplexMatrix, ComplexVector, C64, ONE, ZERO,
};
pub use state::{
    partial_trace, trace_distance, DensityMatrix, StateVector, DENSITY_HERMITIAN_TOL, DENSITY_NEG_EIG_TOL,
    DENSITY_TRACE_TOL, STATE_NORM_TOL,
};

/// Default tolerance for unitarity and density checks.
pub const CHECK_TOL: f64 = 1e-9;
/// Default fixed-point residual tolerance.
pub const FIXED_POINT_TOL: f64 = 1e-9;
