use super::CloneOutcome;
use crate::error::Result;
use crate::qmath::{fidelity, DensityMatrix};

/// Clone fidelities at or above `1 - PREMISE_TOL` count as perfect cloning.
const PREMISE_TOL: f64 = 1e-6;
/// Slack allowed on either bound before it is reported as violated.
const BOUND_TOL: f64 = 1e-9;
/// Inputs whose fidelity is at least `1 - DISTINCT_TOL` are treated as the same state.
const DISTINCT_TOL: f64 = 1e-9;

/// Fidelity bounds that a perfect CTC-assisted cloner must satisfy for a pair of inputs.
///
/// With `lhs = F(rho_i, rho_j) F(ctc_i, ctc_j)` these are `lhs <= F(rho_i, rho_j)^2`
/// and, for distinct inputs, `lhs <= F(ctc_i, ctc_j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityReport {
    pub lhs: f64,
    pub bound_input: f64,
    pub bound_ctc: f64,
    /// `bound_input - lhs`; negative means the first bound fails.
    pub margin_input: f64,
    /// `bound_ctc - lhs`; negative means the second bound fails.
    pub margin_ctc: f64,
    /// Both inputs were cloned perfectly, which is what the bounds assume.
    pub premise_holds: bool,
    pub distinct: bool,
    /// A bound failed while its premise held.
    pub violated: bool,
}

pub fn check_ctc_inequalities(
    rho_i: &DensityMatrix,
    rho_j: &DensityMatrix,
    out_i: &CloneOutcome,
    out_j: &CloneOutcome,
) -> Result<InequalityReport> {
    let f_in = fidelity(rho_i, rho_j)?;
    let f_ctc = fidelity(&out_i.fixed_point.rho_ctc, &out_j.fixed_point.rho_ctc)?;
    let lhs = f_in * f_ctc;
    let bound_input = f_in * f_in;
    let bound_ctc = f_ctc;
    let perfect = |o: &CloneOutcome| o.raw_f1 >= 1.0 - PREMISE_TOL && o.raw_f2 >= 1.0 - PREMISE_TOL;
    let premise_holds = perfect(out_i) && perfect(out_j);
    let distinct = f_in < 1.0 - DISTINCT_TOL;
    let margin_input = bound_input - lhs;
    let margin_ctc = bound_ctc - lhs;
    let violated = premise_holds && (margin_input < -BOUND_TOL || (distinct && margin_ctc < -BOUND_TOL));
    Ok(InequalityReport { lhs, bound_input, bound_ctc, margin_input, margin_ctc, premise_holds, distinct, violated })
}
