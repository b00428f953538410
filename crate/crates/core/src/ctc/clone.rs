use rand::Rng;

use super::{CloneKernel, FixedPointResult};
use crate::brun::UnitaryEnsemble;
use crate::error::{Error, Result};
use crate::qmath::{
    fidelity_pure, matmul, ComplexMatrix, DensityMatrix, StateVector, C64, DENSITY_NEG_EIG_TOL, FIXED_POINT_TOL,
};
use crate::sphere::{bloch_ket, embed, haar_su2, SpherePoint};

/// Result of sending one input through the broadcast circuit.
#[derive(Debug, Clone)]
pub struct CloneOutcome {
    pub n: usize,
    /// Fidelity of the A output with the input; equal to `f_sym` when symmetrized.
    pub f1: f64,
    /// Fidelity of the B output with the input; equal to `f_sym` when symmetrized.
    pub f2: f64,
    pub f_sym: f64,
    /// Per-mode fidelities before symmetrization, kept for alternative averaging conventions.
    pub raw_f1: f64,
    pub raw_f2: f64,
    /// The qubit input, when the input was specified as a sphere point.
    pub input_point: Option<SpherePoint>,
    pub fixed_point: FixedPointResult,
    /// Whether `f1`, `f2` and `f_sym` refer to the twirled outputs.
    pub symmetrized: bool,
}

/// `sqrt((f1^2 + f2^2) / 2)`, the fidelity of the equal mixture of both outputs.
fn mixture_fidelity(f1: f64, f2: f64) -> f64 {
    (0.5 * (f1 * f1 + f2 * f2)).sqrt()
}

fn marginal_densities(kernel: &CloneKernel<'_>, rho_ctc: &DensityMatrix) -> Result<(DensityMatrix, DensityMatrix)> {
    let (a, b) = kernel.marginals(rho_ctc.matrix());
    Ok((DensityMatrix::from_noisy(&a, DENSITY_NEG_EIG_TOL)?, DensityMatrix::from_noisy(&b, DENSITY_NEG_EIG_TOL)?))
}

/// `(F(psi, rho_A), F(psi, rho_B))` for a given CTC state, from the reduced outputs.
pub fn output_fidelities(ensemble: &UnitaryEnsemble, psi: &StateVector, rho_ctc: &DensityMatrix) -> Result<(f64, f64)> {
    let kernel = CloneKernel::new(ensemble, psi)?;
    if rho_ctc.dim() != ensemble.n {
        return Err(Error::DimensionMismatch(format!("CTC state has dim {} not {}", rho_ctc.dim(), ensemble.n)));
    }
    let (a, b) = marginal_densities(&kernel, rho_ctc)?;
    Ok((fidelity_pure(psi, &a)?, fidelity_pure(psi, &b)?))
}

/// Solves the CTC for `psi` and scores both outputs against it.
pub fn clone_input(ensemble: &UnitaryEnsemble, psi: &StateVector, tol: f64) -> Result<CloneOutcome> {
    let kernel = CloneKernel::new(ensemble, psi)?;
    let fixed_point = kernel.solve(tol)?;
    let (a, b) = marginal_densities(&kernel, &fixed_point.rho_ctc)?;
    let (f1, f2) = (fidelity_pure(psi, &a)?, fidelity_pure(psi, &b)?);
    Ok(CloneOutcome {
        n: ensemble.n,
        f1,
        f2,
        f_sym: mixture_fidelity(f1, f2),
        raw_f1: f1,
        raw_f2: f2,
        input_point: None,
        fixed_point,
        symmetrized: false,
    })
}

/// Twirled clone of the qubit at `point` with a Haar-random SU(2) rotation.
pub fn symmetrized_clone<R: Rng + ?Sized>(
    ensemble: &UnitaryEnsemble,
    point: SpherePoint,
    rng: &mut R,
) -> Result<CloneOutcome> {
    let r = haar_su2(rng);
    symmetrized_clone_with(ensemble, point, &r, FIXED_POINT_TOL)
}

/// Clones `R|q>`, undoes `R` on each output (as `R ⊕ 1` on the embedding) and scores
/// the equal mixture of the two outputs against `|q>`. That mixture is the marginal of
/// either mode after a random swap, so `f1 = f2 = f_sym`.
///
/// Averaging over Haar `R` turns the circuit into a covariant cloner; `R = 1` gives the
/// untwirled circuit on `|q>` itself.
pub fn symmetrized_clone_with(
    ensemble: &UnitaryEnsemble,
    point: SpherePoint,
    rotation: &ComplexMatrix,
    tol: f64,
) -> Result<CloneOutcome> {
    let n = ensemble.n;
    if rotation.shape() != (2, 2) {
        return Err(Error::DimensionMismatch(format!("rotation is {:?}, expected 2 x 2", rotation.shape())));
    }
    let q = bloch_ket(point);
    let target = embed(&q, n)?;
    let input = embed(&q.evolve(rotation)?, n)?;
    let kernel = CloneKernel::new(ensemble, &input)?;
    let fixed_point = kernel.solve(tol)?;
    let (a, b) = kernel.marginals(fixed_point.rho_ctc.matrix());

    let mut r_emb = ComplexMatrix::identity(n, n);
    r_emb.view_mut((0, 0), (2, 2)).copy_from(rotation);
    let undo = |m: &ComplexMatrix| matmul(&r_emb.adjoint(), &matmul(m, &r_emb));
    let (a, b) = (undo(&a), undo(&b));
    let mix = (&a + &b) * C64::new(0.5, 0.0);

    let a = DensityMatrix::from_noisy(&a, DENSITY_NEG_EIG_TOL)?;
    let b = DensityMatrix::from_noisy(&b, DENSITY_NEG_EIG_TOL)?;
    let mix = DensityMatrix::from_noisy(&mix, DENSITY_NEG_EIG_TOL)?;
    let f_sym = fidelity_pure(&target, &mix)?;
    Ok(CloneOutcome {
        n,
        f1: f_sym,
        f2: f_sym,
        f_sym,
        raw_f1: fidelity_pure(&target, &a)?,
        raw_f2: fidelity_pure(&target, &b)?,
        input_point: Some(point),
        fixed_point,
        symmetrized: true,
    })
}

impl CloneOutcome {
    /// Deviation from `f_sym^2 = (raw_f1^2 + raw_f2^2) / 2`, which holds in both modes.
    pub fn mixture_defect(&self) -> f64 {
        (self.f_sym - mixture_fidelity(self.raw_f1, self.raw_f2)).abs()
    }
}
