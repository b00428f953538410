//! Broadcast verification, scatter runs and fidelity-vs-N sweeps.
//!
//! Every random quantity is drawn from a generator seeded by [`derive_seed`], a stable
//! hash of `(master seed, n, index, stream)`. Samples are evaluated in parallel and
//! collected in index order, so outputs do not depend on the thread count.

mod io;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brun::{build_ensemble, UnitaryEnsemble, DEFAULT_MAX_RETRIES, DEFAULT_OVERLAP_FLOOR};
use crate::cache::sha256_file;
use crate::ctc::{clone_input, symmetrized_clone_with, CloneOutcome};
use crate::error::{contract, Error, Result};
use crate::qmath::{trace_distance, ComplexMatrix, ComplexVector, StateVector, FIXED_POINT_TOL};
use crate::sphere::{
    bloch_ket, embed, haar_su2, sample_haar_point, solve_thomson, SpherePoint, SpherePointSet, DEFAULT_MAX_ITERS,
    DEFAULT_RESTARTS,
};

pub use io::{
    read_samples_csv, read_summary_csv, write_samples_csv, write_summary_csv, Checkpoint, FailureRecord, OutputFile,
    RunManifest, SAMPLE_COLUMNS, SUMMARY_COLUMNS,
};

/// Tolerance for the perfect-broadcast checks.
pub const BROADCAST_TOL: f64 = 1e-9;
/// Fixed points with more than one extremal solution count as degenerate.
const DEGENERATE: usize = 1;

/// Independent random streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Thomson = 1,
    Ensemble = 2,
    Sample = 3,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable seed for item `index` of `stream` at alphabet size `n`.
///
/// Each component is folded in through a SplitMix64 finaliser, so the value depends
/// only on its arguments and never on evaluation order.
pub fn derive_seed(master: u64, n: usize, index: u64, stream: Stream) -> u64 {
    [n as u64, index, stream as u64].iter().fold(splitmix(master), |h, &x| splitmix(h ^ x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n_values: Vec<usize>,
    pub samples_per_n: usize,
    pub master_seed: u64,
    pub overlap_floor: f64,
    pub thomson_restarts: usize,
    pub solver_tol: f64,
    pub symmetrized: bool,
    /// Feed the broadcast states themselves (with no twirl) instead of Haar inputs.
    #[serde(default)]
    pub control: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_values: vec![5, 10, 15, 20, 25, 30],
            samples_per_n: 200,
            master_seed: 1,
            overlap_floor: DEFAULT_OVERLAP_FLOOR,
            thomson_restarts: DEFAULT_RESTARTS,
            solver_tol: FIXED_POINT_TOL,
            symmetrized: true,
            control: false,
        }
    }
}

impl SweepConfig {
    /// The large-N run: alphabets up to 65 states with 2000 samples each.
    pub fn long_run() -> Self {
        Self { n_values: vec![40, 45, 50, 55, 60, 65], samples_per_n: 2000, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples_per_n == 0 {
            return Err(contract("samples_per_n must be at least 1"));
        }
        if self.n_values.is_empty() || self.n_values.iter().any(|&n| n < 2) {
            return Err(contract(format!("every n must be at least 2, got {:?}", self.n_values)));
        }
        if !(self.solver_tol > 0.0 && self.overlap_floor >= 0.0) {
            return Err(contract("solver_tol must be positive and overlap_floor non-negative"));
        }
        Ok(())
    }

    pub fn mode(&self) -> SampleMode {
        SampleMode { symmetrized: self.symmetrized, control: self.control, tol: self.solver_tol }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMode {
    pub symmetrized: bool,
    pub control: bool,
    pub tol: f64,
}

/// One evaluated input, one line of the per-sample CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloneRecord {
    pub n: usize,
    pub sample_index: usize,
    pub theta: f64,
    pub phi: f64,
    pub f1: f64,
    pub f2: f64,
    pub f_sym: f64,
    pub degeneracy: usize,
    pub seed: u64,
}

/// A sample whose fixed point could not be found, kept with its seed for replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub n: usize,
    pub sample_index: usize,
    pub seed: u64,
    pub reason: String,
}

/// Aggregate over the samples at one `n`, one line of the summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub mean_f_sym: f64,
    pub std_f_sym: f64,
    pub mean_f1: f64,
    pub mean_f2: f64,
    pub samples: usize,
    pub degenerate_count: usize,
    pub wall_seconds: f64,
}

/// A cache file used by a run, with its content hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheKey {
    pub kind: String,
    pub n: usize,
    pub seed: u64,
    pub sha256: String,
    pub path: PathBuf,
}

impl CacheKey {
    fn new(kind: &str, n: usize, seed: u64, path: &Path) -> Result<Self> {
        Ok(Self { kind: kind.into(), n, seed, sha256: sha256_file(path)?, path: path.to_path_buf() })
    }

    /// Fails if the file no longer has the recorded hash.
    pub fn verify(&self) -> Result<()> {
        let now = sha256_file(&self.path)?;
        if now != self.sha256 {
            return Err(Error::InvalidCache {
                path: self.path.clone(),
                reason: "content changed during the run".into(),
            });
        }
        Ok(())
    }
}

/// A Thomson alphabet with its unitary ensemble.
#[derive(Debug, Clone)]
pub struct Alphabet {
    pub points: SpherePointSet,
    pub ensemble: UnitaryEnsemble,
    pub cache_keys: Vec<CacheKey>,
}

/// Relative energy slack when checking a cached point set against the seed it claims.
const STATE_MATCH_TOL: f64 = 1e-12;

/// Solves (or loads) the Thomson set for `n` and builds (or loads) its ensemble.
///
/// With a cache directory, files are named by `n` and derived seed. A file that
/// exists but fails validation is an error rather than silently rebuilt.
pub fn prepare_alphabet(
    n: usize,
    master_seed: u64,
    restarts: usize,
    overlap_floor: f64,
    cache_dir: Option<&Path>,
) -> Result<Alphabet> {
    let thomson_seed = derive_seed(master_seed, n, 0, Stream::Thomson);
    let ensemble_seed = derive_seed(master_seed, n, 0, Stream::Ensemble);
    let mut cache_keys = Vec::new();

    let solve = || solve_thomson(n, &mut ChaCha8Rng::seed_from_u64(thomson_seed), restarts, DEFAULT_MAX_ITERS);
    let points = match cache_dir {
        Some(dir) => {
            let path = dir.join(format!("thomson_n{n}_s{thomson_seed}.json"));
            let set = if path.exists() {
                let (set, seed) = SpherePointSet::load(&path)?;
                if set.n != n || seed != thomson_seed {
                    return Err(crate::cache::invalid(&path, format!("holds n = {} seed {seed}", set.n)));
                }
                set
            } else {
                let set = solve()?;
                set.save(&path, thomson_seed)?;
                set
            };
            cache_keys.push(CacheKey::new("thomson", n, thomson_seed, &path)?);
            set
        }
        None => solve()?,
    };

    let states = points.embedded_states();
    let build = || build_ensemble(&states, ensemble_seed, overlap_floor, DEFAULT_MAX_RETRIES);
    let ensemble = match cache_dir {
        Some(dir) => {
            let path = dir.join(format!("ensemble_n{n}_s{ensemble_seed}.json"));
            let ens = if path.exists() {
                let (ens, floor) = UnitaryEnsemble::load(&path)?;
                let same_states = ens.n == n
                    && ens
                        .states
                        .iter()
                        .zip(&states)
                        .all(|(a, b)| (a.amplitudes() - b.amplitudes()).norm() <= STATE_MATCH_TOL);
                if !same_states || ens.seed != ensemble_seed || floor != overlap_floor {
                    return Err(crate::cache::invalid(&path, "built for a different alphabet, seed or floor"));
                }
                ens
            } else {
                let ens = build()?;
                ens.save(&path, overlap_floor)?;
                ens
            };
            cache_keys.push(CacheKey::new("ensemble", n, ensemble_seed, &path)?);
            ens
        }
        None => build()?,
    };
    Ok(Alphabet { points, ensemble, cache_keys })
}

/// Outcome of checking perfect broadcasting for every alphabet state.
#[derive(Debug, Clone, PartialEq)]
pub struct BroadcastReport {
    pub n: usize,
    /// Largest `1 - F` over both modes and all inputs.
    pub worst_fidelity_defect: f64,
    /// Largest `D(rho_CTC, |j><j|)`.
    pub worst_ctc_distance: f64,
    pub worst_residual: f64,
    /// Inputs that failed, with the reason.
    pub failures: Vec<(usize, String)>,
}

impl BroadcastReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks `F1 = F2 = 1` and `rho_CTC = |j><j|` for every `psi_j` of an ensemble.
pub fn check_broadcast(ensemble: &UnitaryEnsemble, tol: f64) -> BroadcastReport {
    let n = ensemble.n;
    let mut report = BroadcastReport {
        n,
        worst_fidelity_defect: 0.0,
        worst_ctc_distance: 0.0,
        worst_residual: 0.0,
        failures: Vec::new(),
    };
    for (j, psi) in ensemble.states.iter().enumerate() {
        let out = match clone_input(ensemble, psi, tol) {
            Ok(out) => out,
            Err(e) => {
                report.failures.push((j, e.to_string()));
                continue;
            }
        };
        let defect = (1.0 - out.raw_f1).max(1.0 - out.raw_f2);
        let target = StateVector::basis(n, j).projector();
        let distance = trace_distance(out.fixed_point.rho_ctc.matrix(), target.matrix()).unwrap_or(f64::INFINITY);
        report.worst_fidelity_defect = report.worst_fidelity_defect.max(defect);
        report.worst_ctc_distance = report.worst_ctc_distance.max(distance);
        report.worst_residual = report.worst_residual.max(out.fixed_point.residual);
        if defect > BROADCAST_TOL || distance > BROADCAST_TOL || out.fixed_point.degeneracy != 1 {
            report.failures.push((
                j,
                format!(
                    "F1 = {:.12}, F2 = {:.12}, D(rho_CTC, |{j}><{j}|) = {distance:e}, degeneracy {}",
                    out.raw_f1, out.raw_f2, out.fixed_point.degeneracy
                ),
            ));
        }
    }
    report
}

/// Builds the Thomson alphabet for `n` and checks that every state is broadcast.
pub fn run_broadcast_suite(n: usize, seed: u64, cache_dir: Option<&Path>) -> Result<BroadcastReport> {
    if n < 2 {
        return Err(contract(format!("broadcast suite needs n >= 2, got {n}")));
    }
    let alphabet = prepare_alphabet(n, seed, DEFAULT_RESTARTS, DEFAULT_OVERLAP_FLOOR, cache_dir)?;
    Ok(check_broadcast(&alphabet.ensemble, FIXED_POINT_TOL))
}

/// A copy of `ensemble` (n >= 3) whose `U_0` and `U_2` break the overlap condition:
/// they send the components of `psi_1` orthogonal to `psi_0` and `psi_2` to `|2>` and
/// `|0>` respectively, so `{0, 2}` is closed for input `psi_1` and the CTC no longer
/// has to settle on `|1><1|`.
pub fn corrupted_ensemble(ensemble: &UnitaryEnsemble) -> Result<UnitaryEnsemble> {
    let n = ensemble.n;
    if n < 3 {
        return Err(contract(format!("corruption needs n >= 3, got {n}")));
    }
    let s = &ensemble.states;
    let route = |k: usize, other: usize| -> Result<ComplexMatrix> {
        let a = s[k].amplitudes().clone();
        let w = s[1].amplitudes() - &a * a.dotc(s[1].amplitudes());
        if w.norm() < 1e-8 {
            return Err(contract("psi_1 is parallel to another alphabet state"));
        }
        let mut from = vec![a, w.unscale(w.norm())];
        let mut to = vec![ComplexVector::from_element(n, crate::qmath::ZERO); 2];
        to[0][k] = crate::qmath::ONE;
        to[1][other] = crate::qmath::ONE;
        // Complete both frames; the remaining labels keep their relative order.
        let labels = (0..n).filter(|&l| l != k && l != other);
        for (l, e) in labels.zip(complement(&from, n)) {
            let mut t = ComplexVector::from_element(n, crate::qmath::ZERO);
            t[l] = crate::qmath::ONE;
            from.push(e);
            to.push(t);
        }
        Ok(from.iter().zip(&to).fold(ComplexMatrix::zeros(n, n), |acc, (f, t)| acc + t * f.adjoint()))
    };
    let mut unitaries = ensemble.unitaries.clone();
    unitaries[0] = route(0, 2)?;
    unitaries[2] = route(2, 0)?;
    Ok(UnitaryEnsemble::from_parts_unchecked(ensemble.states.clone(), unitaries, ensemble.seed))
}

/// Orthonormal completion of the orthonormal `frame` by Gram-Schmidt on basis vectors.
fn complement(frame: &[ComplexVector], n: usize) -> Vec<ComplexVector> {
    let mut all: Vec<ComplexVector> = frame.to_vec();
    let mut out = Vec::new();
    for k in 0..n {
        if all.len() == n {
            break;
        }
        let mut v = ComplexVector::from_element(n, crate::qmath::ZERO);
        v[k] = crate::qmath::ONE;
        for _ in 0..2 {
            for f in &all {
                v -= f * f.dotc(&v);
            }
        }
        if v.norm() > 1e-6 {
            let v = v.unscale(v.norm());
            all.push(v.clone());
            out.push(v);
        }
    }
    out
}

/// Evaluates sample `index` at alphabet size `n`.
///
/// Haar mode draws a point and, when symmetrized, a twirl from the sample's own
/// generator. Control mode uses alphabet point `index mod n` with no twirl.
pub fn evaluate_sample(
    alphabet: &Alphabet,
    master_seed: u64,
    index: usize,
    mode: SampleMode,
) -> std::result::Result<CloneRecord, SampleFailure> {
    let n = alphabet.ensemble.n;
    let seed = derive_seed(master_seed, n, index as u64, Stream::Sample);
    let fail = |e: Error| SampleFailure { n, sample_index: index, seed, reason: e.to_string() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = if mode.control { alphabet.points.points[index % n] } else { sample_haar_point(&mut rng) };
    let outcome = evaluate_point(&alphabet.ensemble, point, mode, &mut rng).map_err(fail)?;
    Ok(CloneRecord {
        n,
        sample_index: index,
        theta: point.theta,
        phi: point.phi,
        f1: outcome.f1,
        f2: outcome.f2,
        f_sym: outcome.f_sym,
        degeneracy: outcome.fixed_point.degeneracy,
        seed,
    })
}

fn evaluate_point(
    ensemble: &UnitaryEnsemble,
    point: SpherePoint,
    mode: SampleMode,
    rng: &mut ChaCha8Rng,
) -> Result<CloneOutcome> {
    match (mode.symmetrized, mode.control) {
        (true, true) => symmetrized_clone_with(ensemble, point, &ComplexMatrix::identity(2, 2), mode.tol),
        (true, false) => symmetrized_clone_with(ensemble, point, &haar_su2(rng), mode.tol),
        (false, _) => {
            let mut out = clone_input(ensemble, &embed(&bloch_ket(point), ensemble.n)?, mode.tol)?;
            out.input_point = Some(point);
            Ok(out)
        }
    }
}

/// Samples `0..samples` evaluated in parallel and returned in index order.
pub fn run_samples(
    alphabet: &Alphabet,
    master_seed: u64,
    samples: usize,
    mode: SampleMode,
) -> (Vec<CloneRecord>, Vec<SampleFailure>) {
    let results: Vec<_> =
        (0..samples).into_par_iter().map(|i| evaluate_sample(alphabet, master_seed, i, mode)).collect();
    let mut records = Vec::with_capacity(samples);
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(f) => failures.push(f),
        }
    }
    (records, failures)
}

/// Per-point fidelities for sphere plots.
#[derive(Debug, Clone)]
pub struct ScatterRun {
    pub alphabet: Alphabet,
    pub records: Vec<CloneRecord>,
    pub failures: Vec<SampleFailure>,
}

pub fn run_scatter(
    n: usize,
    samples: usize,
    seed: u64,
    mode: SampleMode,
    cache_dir: Option<&Path>,
) -> Result<ScatterRun> {
    let alphabet = prepare_alphabet(n, seed, DEFAULT_RESTARTS, DEFAULT_OVERLAP_FLOOR, cache_dir)?;
    let (records, failures) = run_samples(&alphabet, seed, samples, mode);
    Ok(ScatterRun { alphabet, records, failures })
}

/// Sum of `values` in sorted order, so the result does not depend on input order.
fn ordered_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

fn mean(values: &[f64]) -> f64 {
    ordered_sum(&mut values.to_vec()) / values.len() as f64
}

/// Means of the fidelities and the sample standard deviation of `f_sym`.
pub fn aggregate(records: &[CloneRecord], wall_seconds: f64) -> Result<SweepRow> {
    let first = records.first().ok_or_else(|| contract("cannot aggregate an empty sample"))?;
    if records.iter().any(|r| r.n != first.n) {
        return Err(contract("records from different n cannot be aggregated together"));
    }
    let f_sym: Vec<f64> = records.iter().map(|r| r.f_sym).collect();
    let m = mean(&f_sym);
    let std = if records.len() > 1 {
        let mut sq: Vec<f64> = f_sym.iter().map(|f| (f - m) * (f - m)).collect();
        (ordered_sum(&mut sq) / (records.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(SweepRow {
        n: first.n,
        mean_f_sym: m,
        std_f_sym: std,
        mean_f1: mean(&records.iter().map(|r| r.f1).collect::<Vec<_>>()),
        mean_f2: mean(&records.iter().map(|r| r.f2).collect::<Vec<_>>()),
        samples: records.len(),
        degenerate_count: records.iter().filter(|r| r.degeneracy > DEGENERATE).count(),
        wall_seconds,
    })
}

/// Everything produced at one `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NResult {
    pub n: usize,
    /// `None` when the alphabet could not be prepared or every sample failed.
    pub row: Option<SweepRow>,
    pub records: Vec<CloneRecord>,
    pub failures: Vec<SampleFailure>,
    /// Why the whole `n` failed, if it did.
    pub error: Option<String>,
    pub cache_keys: Vec<CacheKey>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutput {
    pub results: Vec<NResult>,
}

impl SweepOutput {
    pub fn rows(&self) -> Vec<SweepRow> {
        self.results.iter().filter_map(|r| r.row.clone()).collect()
    }

    pub fn records(&self) -> Vec<CloneRecord> {
        self.results.iter().flat_map(|r| r.records.iter().cloned()).collect()
    }

    pub fn failures(&self) -> Vec<FailureRecord> {
        self.results.iter().flat_map(FailureRecord::from_result).collect()
    }

    pub fn cache_keys(&self) -> Vec<CacheKey> {
        self.results.iter().flat_map(|r| r.cache_keys.iter().cloned()).collect()
    }

    /// True when every `n` produced a row and no sample failed.
    pub fn complete(&self) -> bool {
        self.results.iter().all(|r| r.row.is_some() && r.failures.is_empty() && r.error.is_none())
    }
}

/// Runs one `n` of a sweep.
pub fn run_sweep_point(config: &SweepConfig, n: usize, cache_dir: Option<&Path>) -> NResult {
    let start = Instant::now();
    let alphabet =
        match prepare_alphabet(n, config.master_seed, config.thomson_restarts, config.overlap_floor, cache_dir) {
            Ok(a) => a,
            Err(e) => {
                return NResult {
                    n,
                    row: None,
                    records: Vec::new(),
                    failures: Vec::new(),
                    error: Some(e.to_string()),
                    cache_keys: Vec::new(),
                }
            }
        };
    let (records, failures) = run_samples(&alphabet, config.master_seed, config.samples_per_n, config.mode());
    let row = aggregate(&records, start.elapsed().as_secs_f64()).ok();
    let error = row.is_none().then(|| "every sample failed".to_string());
    NResult { n, row, records, failures, error, cache_keys: alphabet.cache_keys }
}

/// Fidelity-vs-N sweep.
///
/// With a checkpoint path, each finished `n` is written there before the next starts,
/// and a rerun with the same configuration resumes after the last finished `n`.
/// `progress` sees each result as it completes.
pub fn run_fidelity_sweep(
    config: &SweepConfig,
    cache_dir: Option<&Path>,
    checkpoint: Option<&Path>,
    mut progress: impl FnMut(&NResult),
) -> Result<SweepOutput> {
    config.validate()?;
    let mut done = match checkpoint {
        Some(path) if path.exists() => {
            Checkpoint::load(path)?.filter(|c| c.config == *config).map_or_else(Vec::new, |c| c.completed)
        }
        _ => Vec::new(),
    };
    let mut results = Vec::with_capacity(config.n_values.len());
    for &n in &config.n_values {
        if let Some(pos) = done.iter().position(|r| r.n == n) {
            let r = done.swap_remove(pos);
            progress(&r);
            results.push(r);
            continue;
        }
        let r = run_sweep_point(config, n, cache_dir);
        progress(&r);
        results.push(r);
        if let Some(path) = checkpoint {
            Checkpoint { config: config.clone(), completed: results.clone() }.save(path)?;
        }
    }
    Ok(SweepOutput { results })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(contract("spearman needs two equal-length series of at least 2 values"));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (vx * vy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}
