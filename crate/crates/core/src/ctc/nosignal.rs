use rand::Rng;

use super::{deutsch_channel_fixed_point, no_signalling_unitary, DeutschSystem, FixedPointResult, CHANNEL_MAX_ITERS};
use crate::error::Result;
use crate::qmath::{
    kron, partial_trace, random_density_matrix, trace_distance, ComplexMatrix, ComplexVector, DensityMatrix,
    StateVector, C64, DENSITY_NEG_EIG_TOL, FIXED_POINT_TOL,
};

/// Distances from the no-signalling experiment: A is half of a Bell pair with R, B
/// starts in `|0>`, and the circuit sends A into the CTC while B takes its place.
#[derive(Debug, Clone)]
pub struct NoSignallingReport {
    pub fixed_point: FixedPointResult,
    /// `D(rho_AB, 1/2 ⊗ 1/2)`.
    pub ab_vs_mixed: f64,
    /// `D(rho_R, 1/2)`.
    pub r_vs_mixed: f64,
    /// `D(rho_R, rho_R without the CTC interaction)`.
    pub r_shift: f64,
    /// `D(rho_AR, rho_A ⊗ rho_R)`: correlation left between the A output and R.
    pub ar_correlation: f64,
    /// `D(rho_BR, rho_B ⊗ rho_R)`: B should carry the entanglement instead.
    pub br_correlation: f64,
    /// `D(fixed point, 1/2)`.
    pub ctc_vs_mixed: f64,
}

impl NoSignallingReport {
    /// R is unaffected, A is left maximally mixed and uncorrelated, and the CTC is `1/2`.
    pub fn passes(&self, tol: f64) -> bool {
        [self.ab_vs_mixed, self.r_vs_mixed, self.r_shift, self.ar_correlation, self.ctc_vs_mixed]
            .iter()
            .all(|&d| d <= tol)
    }
}

/// Runs the circuit on `A ⊗ B ⊗ CTC ⊗ R`, solving the CTC by channel iteration from a
/// random full-rank start.
pub fn no_signalling_experiment<R: Rng + ?Sized>(rng: &mut R) -> Result<NoSignallingReport> {
    let dims = [2, 2, 2, 2];
    let ctc = 2;
    let u = kron(&no_signalling_unitary(), &ComplexMatrix::identity(2, 2));

    // (|01> + |10>)/sqrt(2) on A R, with B = |0>; indexed (a, b, r).
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut amps = ComplexVector::zeros(8);
    let idx = |a: usize, b: usize, r: usize| (a * 2 + b) * 2 + r;
    amps[idx(0, 0, 1)] = C64::new(s, 0.0);
    amps[idx(1, 0, 0)] = C64::new(s, 0.0);
    let input = StateVector::new(amps)?.projector();

    let system = DeutschSystem::new(&u, &dims, ctc, &input)?;
    let init = DensityMatrix::from_noisy(&random_density_matrix(2, 2, rng), DENSITY_NEG_EIG_TOL)?;
    let fixed_point = deutsch_channel_fixed_point(&system, &init, FIXED_POINT_TOL, CHANNEL_MAX_ITERS)?;
    let out = system.cr_output(fixed_point.rho_ctc.matrix())?;

    let cr = [2, 2, 2];
    let half = DensityMatrix::maximally_mixed(2);
    let rho_ab = partial_trace(&out, &cr, &[0, 1])?;
    let rho_a = partial_trace(&out, &cr, &[0])?;
    let rho_b = partial_trace(&out, &cr, &[1])?;
    let rho_r = partial_trace(&out, &cr, &[2])?;
    let rho_ar = partial_trace(&out, &cr, &[0, 2])?;
    let rho_br = partial_trace(&out, &cr, &[1, 2])?;
    let rho_r_before = partial_trace(&input, &cr, &[2])?;

    Ok(NoSignallingReport {
        ab_vs_mixed: trace_distance(rho_ab.matrix(), half.tensor(&half).matrix())?,
        r_vs_mixed: trace_distance(rho_r.matrix(), half.matrix())?,
        r_shift: trace_distance(rho_r.matrix(), rho_r_before.matrix())?,
        ar_correlation: trace_distance(rho_ar.matrix(), rho_a.tensor(&rho_r).matrix())?,
        br_correlation: trace_distance(rho_br.matrix(), rho_b.tensor(&rho_r).matrix())?,
        ctc_vs_mixed: trace_distance(fixed_point.rho_ctc.matrix(), half.matrix())?,
        fixed_point,
    })
}
