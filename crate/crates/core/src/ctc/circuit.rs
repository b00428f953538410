use crate::brun::UnitaryEnsemble;
use crate::error::{Error, Result};
use crate::qmath::{kron, matmul, permutation_operator, ComplexMatrix, ONE};

/// Largest alphabet for which the full `n^3 x n^3` circuit is built.
pub const DENSE_ORACLE_MAX_N: usize = 8;

/// `|i>|j> -> |i>|j + i mod n>` on two `n`-level factors.
pub fn csum(n: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            m[(i * n + (j + i) % n, i * n + j)] = ONE;
        }
    }
    m
}

/// Exchanges factors `i` and `j` of `⊗ dims` (which must have equal dimension).
pub fn swap_operator(dims: &[usize], i: usize, j: usize) -> Result<ComplexMatrix> {
    if i >= dims.len() || j >= dims.len() || dims[i] != dims[j] {
        return Err(Error::DimensionMismatch(format!("cannot swap factors {i} and {j} of {dims:?}")));
    }
    let mut perm: Vec<usize> = (0..dims.len()).collect();
    perm.swap(i, j);
    permutation_operator(dims, &perm)
}

/// The broadcast circuit `U = T2 T1 S V W` on `A ⊗ B ⊗ CTC`, each of dimension `n`:
///
/// - `W` swaps A and CTC,
/// - `V = CSUM_AB ⊗ 1`,
/// - `S = 1 ⊗ sum_k |k><k| ⊗ U_k`,
/// - `T1 = sum_l |l><l| ⊗ U_l^dagger ⊗ 1`,
/// - `T2 = sum_m U_m^dagger ⊗ 1 ⊗ |m><m|`.
pub fn broadcast_unitary(ensemble: &UnitaryEnsemble) -> Result<ComplexMatrix> {
    let n = ensemble.n;
    if n > DENSE_ORACLE_MAX_N {
        return Err(Error::OracleScaleExceeded { n, max: DENSE_ORACLE_MAX_N });
    }
    let d = n * n * n;
    let idx = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
    let w = swap_operator(&[n, n, n], 0, 2)?;
    let v = kron(&csum(n), &ComplexMatrix::identity(n, n));
    let adj: Vec<ComplexMatrix> = ensemble.unitaries.iter().map(|u| u.adjoint()).collect();
    let mut s = ComplexMatrix::zeros(d, d);
    let mut t1 = ComplexMatrix::zeros(d, d);
    let mut t2 = ComplexMatrix::zeros(d, d);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for x in 0..n {
                    // S acts on CTC controlled by B, T1 on B controlled by A, T2 on A controlled by CTC.
                    s[(idx(a, b, c), idx(a, b, x))] = ensemble.unitaries[b][(c, x)];
                    t1[(idx(a, b, c), idx(a, x, c))] = adj[a][(b, x)];
                    t2[(idx(a, b, c), idx(x, b, c))] = adj[c][(a, x)];
                }
            }
        }
    }
    Ok(matmul(&t2, &matmul(&t1, &matmul(&s, &matmul(&v, &w)))))
}

/// The no-signalling circuit on three qubits `A ⊗ B ⊗ CTC`: first `W1` swaps A and
/// CTC, then `W2` swaps B and CTC, then `V` applies CSUM with B as control and CTC
/// as target.
pub fn no_signalling_unitary() -> ComplexMatrix {
    let dims = [2, 2, 2];
    let w1 = swap_operator(&dims, 0, 2).expect("qubit factors");
    let w2 = swap_operator(&dims, 1, 2).expect("qubit factors");
    let v = kron(&ComplexMatrix::identity(2, 2), &csum(2));
    &v * &w2 * &w1
}
