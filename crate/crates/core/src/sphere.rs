//! Bloch-sphere points, Thomson-problem broadcast alphabets and Haar sampling.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::{invalid, write_atomic};
use crate::error::{contract, Error, Result};
use crate::qmath::{complex_gaussian, ComplexMatrix, ComplexVector, StateVector, C64};

/// Chord distances below this are treated as coincident points.
pub const COINCIDENT_THRESHOLD: f64 = 1e-9;
/// Tangent-gradient norm at which a Thomson descent counts as converged.
pub const GRADIENT_TOL: f64 = 1e-8;
pub const DEFAULT_RESTARTS: usize = 8;
pub const DEFAULT_MAX_ITERS: usize = 50_000;

const ARMIJO_C: f64 = 1e-4;
const INITIAL_STEP: f64 = 0.1;
const MAX_STEP: f64 = 10.0;
const MIN_STEP: f64 = 1e-18;
/// Relative tolerance on the energy re-read from a cache file.
const CACHE_ENERGY_RTOL: f64 = 1e-10;

type Vec3 = [f64; 3];

/// A point on the unit sphere, `theta` in `[0, pi]` and `phi` in `[0, 2 pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint {
    pub theta: f64,
    pub phi: f64,
}

impl SpherePoint {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        let p = Self { theta, phi };
        if !p.in_range() {
            return Err(contract(format!("sphere point ({theta}, {phi}) is out of range")));
        }
        Ok(p)
    }

    fn in_range(&self) -> bool {
        (0.0..=PI).contains(&self.theta) && (0.0..TAU).contains(&self.phi)
    }

    /// Spherical angles of a nonzero 3-vector (its length is ignored).
    pub fn from_cartesian(v: Vec3) -> Self {
        let theta = v[0].hypot(v[1]).atan2(v[2]);
        let mut phi = v[1].atan2(v[0]);
        if phi < 0.0 {
            phi += TAU;
        }
        if phi >= TAU {
            phi = 0.0;
        }
        Self { theta, phi }
    }

    pub fn to_cartesian(&self) -> Vec3 {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }
}

/// `cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>`.
pub fn bloch_ket(p: SpherePoint) -> StateVector {
    let (s, c) = (p.theta / 2.0).sin_cos();
    let amps = ComplexVector::from_column_slice(&[C64::new(c, 0.0), C64::from_polar(s, p.phi)]);
    // The two moduli are cos and sin of the same angle, so the norm is 1 up to rounding.
    StateVector::normalized(amps).expect("bloch ket has nonzero norm")
}

/// Bloch angles of a qubit state; the inverse of [`bloch_ket`] up to global phase.
pub fn bloch_point(q: &StateVector) -> Result<SpherePoint> {
    if q.dim() != 2 {
        return Err(Error::DimensionMismatch(format!("bloch_point expects a qubit, got dim {}", q.dim())));
    }
    let (alpha, beta) = (q.amplitudes()[0], q.amplitudes()[1]);
    let theta = 2.0 * beta.norm().atan2(alpha.norm());
    let mut phi = (beta.arg() - alpha.arg()).rem_euclid(TAU);
    if phi >= TAU || beta.norm() == 0.0 {
        phi = 0.0;
    }
    Ok(SpherePoint { theta: theta.min(PI), phi })
}

/// Copies a qubit state into the first two components of an `n`-dimensional space.
pub fn embed(q: &StateVector, n: usize) -> Result<StateVector> {
    if q.dim() != 2 {
        return Err(Error::DimensionMismatch(format!("embed expects a qubit, got dim {}", q.dim())));
    }
    if n < 2 {
        return Err(contract(format!("cannot embed a qubit into dimension {n}")));
    }
    let mut v = ComplexVector::zeros(n);
    v[0] = q.amplitudes()[0];
    v[1] = q.amplitudes()[1];
    StateVector::new(v)
}

/// Uniform point on the sphere: `cos(theta)` uniform on `[-1, 1]`, `phi` uniform on `[0, 2 pi)`.
pub fn sample_haar_point<R: Rng + ?Sized>(rng: &mut R) -> SpherePoint {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi = rng.random::<f64>() * TAU;
    SpherePoint { theta: z.acos(), phi: if phi >= TAU { 0.0 } else { phi } }
}

/// Haar-random SU(2) element `[[a, -b*], [b, a*]]` from a normalised complex Gaussian pair.
pub fn haar_su2<R: Rng + ?Sized>(rng: &mut R) -> ComplexMatrix {
    let (a, b) = loop {
        let a = complex_gaussian(rng);
        let b = complex_gaussian(rng);
        let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
        if norm > 1e-300 {
            break (a / norm, b / norm);
        }
    };
    ComplexMatrix::from_row_slice(2, 2, &[a, -b.conj(), b, a.conj()])
}

/// Coulomb energy `sum_{i<j} 1/|x_i - x_j|` of points on the unit sphere.
pub fn thomson_energy(points: &[SpherePoint]) -> Result<f64> {
    coulomb_energy(&cartesian(points))
}

/// Coulomb gradient at each point, projected onto that point's tangent plane.
pub fn thomson_gradient(points: &[SpherePoint]) -> Result<Vec<Vec3>> {
    tangent_gradient(&cartesian(points))
}

fn cartesian(points: &[SpherePoint]) -> Vec<Vec3> {
    points.iter().map(SpherePoint::to_cartesian).collect()
}

fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalize(v: Vec3) -> Vec3 {
    let n = dot(&v, &v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn coulomb_energy(x: &[Vec3]) -> Result<f64> {
    let mut e = 0.0;
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            let d = dot(&sub(&x[i], &x[j]), &sub(&x[i], &x[j])).sqrt();
            if d < COINCIDENT_THRESHOLD {
                return Err(Error::SingularConfiguration { i, j, threshold: COINCIDENT_THRESHOLD });
            }
            e += 1.0 / d;
        }
    }
    Ok(e)
}

fn tangent_gradient(x: &[Vec3]) -> Result<Vec<Vec3>> {
    Ok(forces(x)?.0)
}

/// Tangent gradients and radial components `grad_i . x_i` of the Coulomb energy.
fn forces(x: &[Vec3]) -> Result<(Vec<Vec3>, Vec<f64>)> {
    let mut g = vec![[0.0; 3]; x.len()];
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            let a = sub(&x[i], &x[j]);
            let d = dot(&a, &a).sqrt();
            if d < COINCIDENT_THRESHOLD {
                return Err(Error::SingularConfiguration { i, j, threshold: COINCIDENT_THRESHOLD });
            }
            let w = 1.0 / (d * d * d);
            for k in 0..3 {
                g[i][k] -= a[k] * w;
                g[j][k] += a[k] * w;
            }
        }
    }
    let mut radial = Vec::with_capacity(x.len());
    for (gi, xi) in g.iter_mut().zip(x) {
        let r = dot(gi, xi);
        for k in 0..3 {
            gi[k] -= r * xi[k];
        }
        radial.push(r);
    }
    Ok((g, radial))
}

/// `|v|^2 - 1` evaluated with error-free products and sums, accurate far below
/// the rounding level of `|v|^2` itself.
fn norm_defect(v: &Vec3) -> f64 {
    let (mut hi, mut lo) = (0.0f64, 0.0f64);
    for &c in v {
        let p = c * c;
        let e = c.mul_add(c, -p);
        let s = hi + p;
        let bp = s - hi;
        lo += (hi - (s - bp)) + (p - bp) + e;
        hi = s;
    }
    (hi - 1.0) + lo
}

/// First-order energy offset of `x` relative to the same points pulled exactly
/// onto the sphere. Renormalised points sit ~1e-16 off the sphere, and against
/// the large radial force that alone swamps the descent near convergence.
fn radial_offset(x: &[Vec3], radial: &[f64]) -> f64 {
    x.iter().zip(radial).map(|(xi, r)| r * 0.5 * norm_defect(xi)).sum()
}

/// Energy change from `x` to `y`, summed pairwise as `(d - d')/(d d')` so it stays
/// accurate when the change is far below the rounding level of the total energy.
fn energy_delta(x: &[Vec3], y: &[Vec3]) -> Result<f64> {
    // Per-point displacements are exact differences of nearby values; forming the
    // pair displacement from them avoids rounding both pair differences.
    let moves: Vec<Vec3> = x.iter().zip(y).map(|(xi, yi)| sub(yi, xi)).collect();
    let mut delta = 0.0;
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            let a = sub(&x[i], &x[j]);
            let b = sub(&moves[i], &moves[j]);
            let anew = sub(&y[i], &y[j]);
            let d = dot(&a, &a).sqrt();
            let dn = dot(&anew, &anew).sqrt();
            if dn < COINCIDENT_THRESHOLD {
                return Err(Error::SingularConfiguration { i, j, threshold: COINCIDENT_THRESHOLD });
            }
            // d^2 - d'^2 = -(2 a.b + |b|^2)
            let diff_sq = -(2.0 * dot(&a, &b) + dot(&b, &b));
            delta += diff_sq / (d * dn * (d + dn));
        }
    }
    Ok(delta)
}

/// `n` points on a golden-angle spiral, evenly spread in `z`.
pub fn fibonacci_lattice(n: usize) -> Vec<SpherePoint> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let t = golden * i as f64;
            SpherePoint::from_cartesian([r * t.cos(), r * t.sin(), z])
        })
        .collect()
}

/// Result of one projected gradient descent.
#[derive(Debug, Clone)]
pub struct Descent {
    pub points: Vec<SpherePoint>,
    pub energy: f64,
    pub gradient_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Energy after every accepted step, starting with the initial energy.
    pub trace: Vec<f64>,
}

/// Projected gradient descent with Armijo backtracking from `start`.
pub fn descend(start: &[SpherePoint], max_iters: usize) -> Result<Descent> {
    let mut x = cartesian(start);
    let mut energy = coulomb_energy(&x)?;
    let mut trace = vec![energy];
    let mut step = INITIAL_STEP;
    let (mut g, mut radial) = forces(&x)?;
    let mut gnorm2: f64 = g.iter().map(|v| dot(v, v)).sum();
    let mut iterations = 0;
    while gnorm2.sqrt() > GRADIENT_TOL && iterations < max_iters && step >= MIN_STEP {
        iterations += 1;
        let y: Vec<Vec3> = x
            .iter()
            .zip(&g)
            .map(|(xi, gi)| normalize([xi[0] - step * gi[0], xi[1] - step * gi[1], xi[2] - step * gi[2]]))
            .collect();
        let trial = energy_delta(&x, &y).and_then(|d| forces(&y).map(|f| (d, f)));
        let (raw, (gy, ry)) = match trial {
            Ok(t) => t,
            Err(Error::SingularConfiguration { .. }) => {
                step *= 0.5;
                continue;
            }
            Err(e) => return Err(e),
        };
        let delta = raw - radial_offset(&y, &ry) + radial_offset(&x, &radial);
        if delta <= -ARMIJO_C * step * gnorm2 {
            x = y;
            energy += delta;
            trace.push(energy);
            (g, radial) = (gy, ry);
            gnorm2 = g.iter().map(|v| dot(v, v)).sum();
            step = (step * 2.0).min(MAX_STEP);
        } else {
            step *= 0.5;
        }
    }
    let points: Vec<SpherePoint> = x.iter().map(|v| SpherePoint::from_cartesian(*v)).collect();
    let gradient_norm = gnorm2.sqrt();
    Ok(Descent {
        energy: thomson_energy(&points)?,
        points,
        gradient_norm,
        converged: gradient_norm <= GRADIENT_TOL,
        iterations,
        trace,
    })
}

/// `n` points on the sphere with their Coulomb energy and solver metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePointSet {
    pub n: usize,
    pub points: Vec<SpherePoint>,
    pub energy: f64,
    pub converged: bool,
    pub restarts_used: usize,
}

#[derive(Serialize, Deserialize)]
struct PointSetFile {
    n: usize,
    seed: u64,
    energy: f64,
    points: Vec<SpherePoint>,
    #[serde(default)]
    converged: bool,
    #[serde(default)]
    restarts_used: usize,
}

impl SpherePointSet {
    /// Wraps explicit points, computing their energy. Marked unconverged with no restarts.
    pub fn from_points(points: Vec<SpherePoint>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !p.in_range()) {
            return Err(contract(format!("sphere point {p:?} is out of range")));
        }
        let energy = thomson_energy(&points)?;
        Ok(Self { n: points.len(), points, energy, converged: false, restarts_used: 0 })
    }

    /// The qubit states of the points, each embedded into dimension `n`.
    pub fn embedded_states(&self) -> Vec<StateVector> {
        self.points
            .iter()
            .map(|&p| embed(&bloch_ket(p), self.n.max(2)).expect("embedding dimension is at least 2"))
            .collect()
    }

    pub fn to_json(&self, seed: u64) -> Result<String> {
        let file = PointSetFile {
            n: self.n,
            seed,
            energy: self.energy,
            points: self.points.clone(),
            converged: self.converged,
            restarts_used: self.restarts_used,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        write_atomic(path, self.to_json(seed)?.as_bytes())
    }

    /// Reads a cache file and revalidates it; returns the set and its recorded seed.
    pub fn load(path: &Path) -> Result<(Self, u64)> {
        let text = std::fs::read_to_string(path)?;
        let file: PointSetFile = serde_json::from_str(&text).map_err(|e| invalid(path, e.to_string()))?;
        if file.points.len() != file.n {
            return Err(invalid(path, format!("n = {} but {} points", file.n, file.points.len())));
        }
        if let Some(p) = file.points.iter().find(|p| !p.in_range()) {
            return Err(invalid(path, format!("point {p:?} is out of range")));
        }
        let energy = thomson_energy(&file.points).map_err(|e| invalid(path, e.to_string()))?;
        if (energy - file.energy).abs() > CACHE_ENERGY_RTOL * energy.abs().max(f64::MIN_POSITIVE) {
            return Err(invalid(path, format!("recorded energy {} but points give {energy}", file.energy)));
        }
        let set = Self {
            n: file.n,
            points: file.points,
            energy: file.energy,
            converged: file.converged,
            restarts_used: file.restarts_used,
        };
        Ok((set, file.seed))
    }
}

/// Best of `restarts` projected gradient descents for `n` points.
///
/// Restart 0 starts from the Fibonacci lattice and the rest from uniform random
/// points drawn from `rng` in restart order. Descents run concurrently; the lowest
/// energy wins with ties going to the lower restart index.
pub fn solve_thomson<R: Rng + ?Sized>(
    n: usize,
    rng: &mut R,
    restarts: usize,
    max_iters: usize,
) -> Result<SpherePointSet> {
    if n < 2 {
        return Err(contract(format!("the Thomson problem needs n >= 2, got {n}")));
    }
    let restarts = restarts.max(1);
    let mut starts = vec![fibonacci_lattice(n)];
    for _ in 1..restarts {
        starts.push((0..n).map(|_| sample_haar_point(rng)).collect());
    }
    let runs: Vec<Result<Descent>> = starts.par_iter().map(|s| descend(s, max_iters)).collect();
    let mut best: Option<Descent> = None;
    let mut first_err = None;
    for run in runs {
        match run {
            Ok(d) if best.as_ref().is_none_or(|b| d.energy < b.energy) => best = Some(d),
            Ok(_) => {}
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let best = match (best, first_err) {
        (Some(b), _) => b,
        (None, Some(e)) => return Err(e),
        (None, None) => unreachable!("at least one restart runs"),
    };
    Ok(SpherePointSet {
        n,
        energy: best.energy,
        converged: best.converged,
        points: best.points,
        restarts_used: restarts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::is_unitary;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bloch_ket_poles_and_equator() {
        let k0 = bloch_ket(SpherePoint::new(0.0, 0.0).unwrap());
        assert_eq!(k0.amplitudes()[0], C64::new(1.0, 0.0));
        let k1 = bloch_ket(SpherePoint::new(PI, 0.0).unwrap());
        assert!((k1.amplitudes()[1] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(k1.amplitudes()[0].norm() < 1e-15);
        // (|0> + i|1>)/sqrt(2)
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let k = bloch_ket(SpherePoint::new(PI / 2.0, PI / 2.0).unwrap());
        assert!((k.amplitudes()[0] - C64::new(s, 0.0)).norm() < 1e-15);
        assert!((k.amplitudes()[1] - C64::new(0.0, s)).norm() < 1e-15);
    }

    #[test]
    fn embed_copies_amplitudes() {
        let e = embed(&StateVector::basis(2, 1), 4).unwrap();
        assert_eq!(e, StateVector::basis(4, 1));
        assert!(embed(&StateVector::basis(2, 1), 1).is_err());
    }

    #[test]
    fn cartesian_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let p = sample_haar_point(&mut rng);
            let q = SpherePoint::from_cartesian(p.to_cartesian());
            assert!((p.theta - q.theta).abs() < 1e-12);
            let dphi = (p.phi - q.phi).abs();
            assert!(dphi < 1e-12 || (TAU - dphi) < 1e-12);
        }
    }

    #[test]
    fn two_and_three_point_energies() {
        let pair = [SpherePoint::new(0.0, 0.0).unwrap(), SpherePoint::new(PI, 0.0).unwrap()];
        assert!((thomson_energy(&pair).unwrap() - 0.5).abs() < 1e-15);
        let tri: Vec<SpherePoint> = (0..3).map(|k| SpherePoint::new(PI / 2.0, TAU * k as f64 / 3.0).unwrap()).collect();
        // Side sqrt(3), three pairs.
        assert!((thomson_energy(&tri).unwrap() - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn coincident_points_are_singular() {
        let p = SpherePoint::new(1.0, 1.0).unwrap();
        assert!(matches!(thomson_energy(&[p, p]), Err(Error::SingularConfiguration { i: 0, j: 1, .. })));
        assert!(thomson_gradient(&[p, p]).is_err());
    }

    #[test]
    fn energy_delta_matches_direct_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<Vec3> = (0..10).map(|_| sample_haar_point(&mut rng).to_cartesian()).collect();
        let b: Vec<Vec3> = (0..10).map(|_| sample_haar_point(&mut rng).to_cartesian()).collect();
        let direct = coulomb_energy(&b).unwrap() - coulomb_energy(&a).unwrap();
        assert!((energy_delta(&a, &b).unwrap() - direct).abs() < 1e-10);
    }

    #[test]
    fn norm_defect_resolves_sub_ulp_offsets() {
        assert_eq!(norm_defect(&[1.0, 0.0, 0.0]), 0.0);
        assert_eq!(norm_defect(&[2.0, 0.0, 0.0]), 3.0);
        // 1 + 2^-30 squares to 1 + 2^-29 + 2^-60; the last term is below one ulp of 1.
        let t = 1.0 + 2f64.powi(-30);
        assert_eq!(norm_defect(&[t, 0.0, 0.0]), 2f64.powi(-29) + 2f64.powi(-60));
    }

    #[test]
    fn haar_su2_is_unitary_and_reproducible() {
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let mut b = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let u = haar_su2(&mut a);
            assert!(is_unitary(&u, 1e-12));
            assert_eq!(u, haar_su2(&mut b));
        }
    }

    #[test]
    fn small_thomson_problems_converge() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = solve_thomson(2, &mut rng, 2, DEFAULT_MAX_ITERS).unwrap();
        assert!(s.converged);
        assert!((s.energy - 0.5).abs() < 1e-12);
        assert!(solve_thomson(1, &mut rng, 1, 10).is_err());
    }
}
