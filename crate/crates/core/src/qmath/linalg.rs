use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{contract, Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Products at or above this many multiply-adds go through real GEMM kernels.
const SPLIT_GEMM_WORK: usize = 48 * 48 * 48;

/// Complex matrix product.
///
/// nalgebra's generic complex product is not blocked, so large products are
/// split into four real products which run on the optimised `f64` kernel.
pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    assert_eq!(a.ncols(), b.nrows(), "matmul: inner dimensions differ");
    if a.nrows() * a.ncols() * b.ncols() < SPLIT_GEMM_WORK {
        return a * b;
    }
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    ComplexMatrix::from_fn(a.nrows(), b.ncols(), |i, j| C64::new(re[(i, j)], im[(i, j)]))
}

/// `a * b^dagger` without materialising the adjoint twice.
pub fn matmul_adjoint(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    matmul(a, &b.adjoint())
}

fn split(m: &ComplexMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    (m.map(|z| z.re), m.map(|z| z.im))
}

/// Tensor product `a ⊗ b` with row-major block ordering.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

pub fn kron_vec(a: &ComplexVector, b: &ComplexVector) -> ComplexVector {
    a.kronecker(b)
}

/// Kronecker product of a list of factors, left to right.
pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a ComplexMatrix>) -> ComplexMatrix {
    factors.into_iter().fold(ComplexMatrix::identity(1, 1), |acc, f| acc.kronecker(f))
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

/// `|i><j|` in dimension `n`.
pub fn outer_basis(n: usize, i: usize, j: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(n, n);
    m[(i, j)] = ONE;
    m
}

pub fn basis_vector(n: usize, i: usize) -> ComplexVector {
    let mut v = ComplexVector::zeros(n);
    v[i] = ONE;
    v
}

pub fn outer(a: &ComplexVector, b: &ComplexVector) -> ComplexMatrix {
    a * b.adjoint()
}

/// Strides of a row-major multi-index over `dims`.
pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for f in (0..dims.len().saturating_sub(1)).rev() {
        s[f] = s[f + 1] * dims[f + 1];
    }
    s
}

/// Full-space offsets of every multi-index restricted to `factors`, enumerated
/// row-major over those factors in the given order.
pub(crate) fn offsets(dims: &[usize], factors: &[usize]) -> Vec<usize> {
    let st = strides(dims);
    let mut out = vec![0usize];
    for &f in factors {
        let mut next = Vec::with_capacity(out.len() * dims[f]);
        for &base in &out {
            for d in 0..dims[f] {
                next.push(base + d * st[f]);
            }
        }
        out = next;
    }
    out
}

/// Partial trace of an operator on `⊗ dims`, keeping `keep` (in original factor order).
///
/// An empty `keep` traces everything and yields the 1x1 matrix `[Tr m]`.
pub fn partial_trace_matrix(m: &ComplexMatrix, dims: &[usize], keep: &[usize]) -> Result<ComplexMatrix> {
    let total: usize = dims.iter().product();
    if m.nrows() != total || m.ncols() != total {
        return Err(Error::DimensionMismatch(format!(
            "operator is {}x{} but factor dims {:?} multiply to {}",
            m.nrows(),
            m.ncols(),
            dims,
            total
        )));
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.len() != keep.len() || kept.iter().any(|&k| k >= dims.len()) {
        return Err(contract(format!("invalid kept factor set {keep:?} for {} factors", dims.len())));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|f| !kept.contains(f)).collect();
    let keep_off = offsets(dims, &kept);
    let trace_off = offsets(dims, &traced);
    let d = keep_off.len();
    Ok(ComplexMatrix::from_fn(d, d, |i, j| trace_off.iter().map(|&t| m[(keep_off[i] + t, keep_off[j] + t)]).sum()))
}

/// Permutation operator that moves factor `perm[i]` of the input to position `i` of the output.
pub fn permutation_operator(dims: &[usize], perm: &[usize]) -> Result<ComplexMatrix> {
    let k = dims.len();
    let mut seen = vec![false; k];
    if perm.len() != k || perm.iter().any(|&p| p >= k || std::mem::replace(&mut seen[p], true)) {
        return Err(contract(format!("{perm:?} is not a permutation of {k} factors")));
    }
    let out_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let in_st = strides(dims);
    let out_st = strides(&out_dims);
    let total: usize = dims.iter().product();
    let mut op = ComplexMatrix::zeros(total, total);
    for idx in 0..total {
        let mut out = 0;
        for (i, &p) in perm.iter().enumerate() {
            let digit = (idx / in_st[p]) % dims[p];
            out += digit * out_st[i];
        }
        op[(out, idx)] = ONE;
    }
    Ok(op)
}

/// Largest entrywise modulus.
pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn hermitian_defect(m: &ComplexMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    max_abs(&(m - m.adjoint()))
}

pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn is_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Eigendecomposition of the Hermitian part of `m`: real eigenvalues and unitary eigenvectors.
pub fn hermitian_eigen(m: &ComplexMatrix) -> (DVector<f64>, ComplexMatrix) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    (eig.eigenvalues, eig.eigenvectors)
}

/// Rebuilds `V f(Λ) V^dagger` from an eigendecomposition.
pub fn spectral_apply(values: &DVector<f64>, vectors: &ComplexMatrix, f: impl Fn(f64) -> f64) -> ComplexMatrix {
    let mut scaled = vectors.clone();
    for (j, &l) in values.iter().enumerate() {
        let s = f(l);
        scaled.column_mut(j).scale_mut(s);
    }
    matmul_adjoint(&scaled, vectors)
}

/// Positive square root of a PSD matrix. Eigenvalues in `[-neg_tol, 0)` are clamped to zero;
/// anything more negative is a contract violation.
pub fn psd_sqrt(m: &ComplexMatrix, neg_tol: f64) -> Result<ComplexMatrix> {
    let (values, vectors) = hermitian_eigen(m);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -neg_tol {
        return Err(contract(format!("matrix is not positive semidefinite (eigenvalue {min:e})")));
    }
    // Eigenvalues at rounding level would otherwise contribute sqrt(eps) to the root.
    let scale = values.iter().fold(0.0f64, |acc, l| acc.max(l.abs()));
    let floor = 64.0 * f64::EPSILON * scale * values.len() as f64;
    Ok(spectral_apply(&values, &vectors, |l| if l <= floor { 0.0 } else { l.sqrt() }))
}

/// `max |U^dagger U - I|` entrywise.
pub fn unitarity_defect(u: &ComplexMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    let g = matmul(&u.adjoint(), u);
    max_abs(&(g - identity(u.nrows())))
}

pub fn is_unitary(u: &ComplexMatrix, tol: f64) -> bool {
    unitarity_defect(u) <= tol
}

/// Density-matrix predicate: Hermitian, unit trace and PSD, each to within `tol`.
pub fn is_density(rho: &ComplexMatrix, tol: f64) -> bool {
    if !rho.is_square() || rho.nrows() == 0 || !is_finite(rho) {
        return false;
    }
    if hermitian_defect(rho) > tol || (rho.trace() - ONE).norm() > tol {
        return false;
    }
    let (values, _) = hermitian_eigen(rho);
    values.iter().all(|&l| l >= -tol)
}

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Haar-random `d x d` unitary: QR of a complex Ginibre matrix with the phases of
/// `diag(R)` folded back into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    let z = ComplexMatrix::from_fn(d, d, |_, _| complex_gaussian(rng));
    let qr = z.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { ONE };
        for z in q.column_mut(j).iter_mut() {
            *z *= phase;
        }
    }
    q
}

/// Random density matrix `G G^dagger / Tr(G G^dagger)` from a `d x rank` Ginibre matrix.
pub fn random_density_matrix<R: Rng + ?Sized>(d: usize, rank: usize, rng: &mut R) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(d, rank.max(1), |_, _| complex_gaussian(rng));
    let m = matmul_adjoint(&g, &g);
    let t = m.trace();
    hermitian_part(&m.unscale(t.re))
}

pub fn random_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexVector {
    let v = ComplexVector::from_fn(d, |_, _| complex_gaussian(rng));
    let n = v.norm();
    v.unscale(n)
}

/// Row-major vectorisation: entry `(a, b)` lands at `a * cols + b`.
pub fn vec_row_major(m: &ComplexMatrix) -> ComplexVector {
    ComplexVector::from_iterator(m.len(), m.transpose().iter().copied())
}

/// Inverse of [`vec_row_major`] for a square `d x d` matrix.
pub fn unvec_row_major(v: &ComplexVector, d: usize) -> ComplexMatrix {
    assert_eq!(v.len(), d * d, "unvec: length is not a square");
    ComplexMatrix::from_fn(d, d, |a, b| v[a * d + b])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pauli_x() -> ComplexMatrix {
        ComplexMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
    }

    #[test]
    fn kron_identity_is_identity() {
        assert_eq!(kron(&identity(2), &identity(2)), identity(4));
    }

    #[test]
    fn kron_of_projectors_places_single_entry() {
        let p0 = outer_basis(2, 0, 0);
        let p1 = outer_basis(2, 1, 1);
        let k = kron(&p0, &p1);
        assert_eq!(k, outer_basis(4, 1, 1));
    }

    #[test]
    fn kron_xx_flips_both_qubits() {
        // |00> -> |11>
        let xx = kron(&pauli_x(), &pauli_x());
        let out = &xx * basis_vector(4, 0);
        assert_eq!(out, basis_vector(4, 3));
    }

    #[test]
    fn split_gemm_matches_naive_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = ComplexMatrix::from_fn(70, 64, |_, _| complex_gaussian(&mut rng));
        let b = ComplexMatrix::from_fn(64, 66, |_, _| complex_gaussian(&mut rng));
        let fast = matmul(&a, &b);
        let slow = &a * &b;
        assert!(max_abs(&(fast - slow)) < 1e-12);
    }

    #[test]
    fn partial_trace_of_product_projector() {
        let rho = kron(&outer_basis(2, 0, 0), &outer_basis(2, 1, 1));
        let r = partial_trace_matrix(&rho, &[2, 2], &[0]).unwrap();
        assert_eq!(r, outer_basis(2, 0, 0));
    }

    #[test]
    fn partial_trace_of_bell_state_is_maximally_mixed() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = (basis_vector(4, 1) + basis_vector(4, 2)).scale(s);
        let rho = outer(&psi, &psi);
        let r = partial_trace_matrix(&rho, &[2, 2], &[0]).unwrap();
        assert!(max_abs(&(r - identity(2).scale(0.5))) < 1e-15);
    }

    #[test]
    fn tracing_everything_gives_the_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rho = random_density_matrix(6, 6, &mut rng);
        let r = partial_trace_matrix(&rho, &[2, 3], &[]).unwrap();
        assert_eq!(r.shape(), (1, 1));
        assert!((r[(0, 0)] - ONE).norm() < 1e-14);
    }

    #[test]
    fn partial_trace_rejects_bad_dims() {
        let rho = identity(4);
        assert!(matches!(partial_trace_matrix(&rho, &[2, 3], &[0]), Err(Error::DimensionMismatch(_))));
        assert!(matches!(partial_trace_matrix(&rho, &[2, 2], &[2]), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn partial_trace_middle_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_density_matrix(2, 2, &mut rng);
        let b = random_density_matrix(3, 3, &mut rng);
        let c = random_density_matrix(2, 1, &mut rng);
        let abc = kron_all([&a, &b, &c]);
        let ac = partial_trace_matrix(&abc, &[2, 3, 2], &[0, 2]).unwrap();
        assert!(max_abs(&(ac - kron(&a, &c))) < 1e-14);
        let bonly = partial_trace_matrix(&abc, &[2, 3, 2], &[1]).unwrap();
        assert!(max_abs(&(bonly - b)) < 1e-14);
    }

    #[test]
    fn permutation_operator_reverses_three_factors() {
        let op = permutation_operator(&[2, 2, 2], &[2, 1, 0]).unwrap();
        // |a b c> -> |c b a| for |0 1 1> = index 3
        let out = &op * basis_vector(8, 0b011);
        assert_eq!(out, basis_vector(8, 0b110));
    }

    #[test]
    fn unitary_predicates() {
        assert!(is_unitary(&identity(3), 1e-12));
        assert!(!is_unitary(&identity(3).scale(2.0), 1e-9));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in 1..8 {
            assert!(is_unitary(&haar_unitary(d, &mut rng), 1e-12));
        }
    }

    #[test]
    fn bell_projector_is_density() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = (basis_vector(4, 0) + basis_vector(4, 3)).scale(s);
        assert!(is_density(&outer(&psi, &psi), 1e-12));
        assert!(!is_density(&identity(4), 1e-9));
        assert!(!is_density(&outer_basis(2, 0, 1), 1e-9));
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = random_density_matrix(5, 3, &mut rng);
        let s = psd_sqrt(&rho, 1e-9).unwrap();
        assert!(max_abs(&(&s * &s - &rho)) < 1e-12);
        let neg = identity(2).scale(-1.0);
        assert!(psd_sqrt(&neg, 1e-9).is_err());
    }

    #[test]
    fn row_major_vec_roundtrip() {
        let m = ComplexMatrix::from_fn(3, 3, |i, j| C64::new(i as f64, j as f64));
        let v = vec_row_major(&m);
        assert_eq!(v[1], m[(0, 1)]);
        assert_eq!(unvec_row_major(&v, 3), m);
    }
}
