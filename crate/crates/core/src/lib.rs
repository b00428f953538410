//! Quantum state cloning with a Deutsch closed timelike curve (CTC).
//!
//! The crate is organised bottom-up:
//!
//! - [`qmath`]: dense complex linear algebra, density matrices, Uhlmann fidelity and
//!   the eigenvalue-one solver used for every self-consistency problem.
//! - [`sphere`]: Bloch-sphere points, Thomson-problem broadcast alphabets, Haar sampling.
//! - [`brun`]: the discrimination unitaries `U_k` with `U_k|psi_k> = |k>`.
//! - [`ctc`]: the broadcast circuit `T2 T1 S V W`, the Deutsch fixed point (dense channel
//!   iteration and the vectorised `n^2 x n^2` route), clone fidelities, the symmetriser
//!   and the no-signalling experiment.
//! - [`experiments`]: broadcast suites, scatter runs and fidelity-vs-N sweeps with
//!   deterministic seeding and CSV/JSON persistence.
//!
//! Subsystem ordering is fixed crate-wide: factor 0 is register A, factor 1 is
//! register B and factor 2 is the CTC register, with row-major tensor indices.

pub mod brun;
pub mod cache;
pub mod ctc;
pub mod error;
pub mod experiments;
pub mod qmath;
pub mod sphere;

pub use error::{Error, Result};

/// Maximum fidelity of a universal symmetric 1 -> 2 qubit cloner without a CTC, `sqrt(5/6)`.
pub fn no_cloning_bound() -> f64 {
    (5.0f64 / 6.0).sqrt()
}
