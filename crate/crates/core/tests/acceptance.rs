//! One PASS/FAIL line per acceptance criterion. Exits nonzero if any criterion fails.
//! The long-run crossing check runs only with `CTC_LONG_RUN=1`.

use std::f64::consts::PI;
use std::time::Instant;

use ctc_clone::brun::UnitaryEnsemble;
use ctc_clone::ctc::*;
use ctc_clone::experiments::{prepare_alphabet, run_broadcast_suite, run_fidelity_sweep, spearman, SweepConfig};
use ctc_clone::qmath::{
    basis_vector, fidelity, haar_unitary, is_density, kron_vec, partial_trace, random_density_matrix, trace_distance,
    DensityMatrix, StateVector, CHECK_TOL, FIXED_POINT_TOL,
};
use ctc_clone::sphere::{bloch_ket, embed, sample_haar_point, solve_thomson, DEFAULT_MAX_ITERS, DEFAULT_RESTARTS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Residual and density checks shared by every criterion that produces a CTC state.
#[derive(Default)]
struct SelfConsistency {
    count: usize,
    worst_residual: f64,
    bad: usize,
}

impl SelfConsistency {
    fn record(&mut self, kernel: &CloneKernel<'_>, rho: &DensityMatrix) {
        let r = kernel.residual(rho.matrix());
        self.count += 1;
        self.worst_residual = self.worst_residual.max(r);
        if r > FIXED_POINT_TOL || !is_density(rho.matrix(), CHECK_TOL) {
            self.bad += 1;
        }
    }
}

fn broadcast() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for n in [2, 3, 4, 8] {
        let rep = run_broadcast_suite(n, 1, None).map_err(err)?;
        ok &= rep.passed() && rep.worst_fidelity_defect <= 1e-9 && rep.worst_ctc_distance <= 1e-9;
        lines.push(format!("n={n} 1-F={:.1e} D={:.1e}", rep.worst_fidelity_defect, rep.worst_ctc_distance));
    }
    check(ok, lines.join(", "))
}

fn circuit_route(ens: &UnitaryEnsemble, psi: &StateVector) -> Result<(DensityMatrix, f64, f64), String> {
    let n = ens.n;
    let input = StateVector::new(kron_vec(psi.amplitudes(), &basis_vector(n, 0))).map_err(err)?;
    let sys =
        DeutschSystem::new(&broadcast_unitary(ens).map_err(err)?, &[n, n, n], 2, &input.projector()).map_err(err)?;
    let fp =
        deutsch_channel_fixed_point(&sys, &DensityMatrix::maximally_mixed(n), 1e-12, CHANNEL_MAX_ITERS).map_err(err)?;
    let out = sys.cr_output(fp.rho_ctc.matrix()).map_err(err)?;
    let a = partial_trace(&out, &[n, n], &[0]).map_err(err)?;
    let b = partial_trace(&out, &[n, n], &[1]).map_err(err)?;
    let f = |rho: &DensityMatrix| fidelity(&psi.projector(), rho);
    Ok((fp.rho_ctc, f(&a).map_err(err)?, f(&b).map_err(err)?))
}

fn dual_path(sc: &mut SelfConsistency) -> Outcome {
    let (mut worst_d, mut worst_f) = (0.0f64, 0.0f64);
    for n in [2, 3, 4] {
        let alphabet = prepare_alphabet(n, 1, DEFAULT_RESTARTS, 1e-4, None).map_err(err)?;
        let ens = &alphabet.ensemble;
        let mut r = rng(100 + n as u64);
        for _ in 0..50 {
            let psi = embed(&bloch_ket(sample_haar_point(&mut r)), n).map_err(err)?;
            let m = fixed_point_matrix(ens, &psi).map_err(err)?;
            let eig = solve_fixed_point_matrix(&m, FIXED_POINT_TOL).map_err(err)?;
            let (f1, f2) = output_fidelities(ens, &psi, &eig.rho_ctc).map_err(err)?;
            let (slow, g1, g2) = circuit_route(ens, &psi)?;
            worst_d = worst_d.max(trace_distance(eig.rho_ctc.matrix(), slow.matrix()).map_err(err)?);
            worst_f = worst_f.max((f1 - g1).abs()).max((f2 - g2).abs());
            sc.record(&CloneKernel::new(ens, &psi).map_err(err)?, &eig.rho_ctc);
        }
    }
    check(worst_d <= 1e-7 && worst_f <= 1e-8, format!("150 inputs, max D={worst_d:.1e}, max |dF|={worst_f:.1e}"))
}

fn fidelity_properties() -> Outcome {
    const CASES: usize = 500;
    let mut r = rng(7);
    let density = |d: usize, r: &mut ChaCha8Rng| {
        let rank = r.random_range(1..=d);
        DensityMatrix::new(random_density_matrix(d, rank, r)).unwrap()
    };
    let (mut sym, mut unit, mut mult, mut mono) = (0.0f64, 0.0f64, 0.0f64, f64::NEG_INFINITY);
    for _ in 0..CASES {
        let d = r.random_range(1..=5);
        let (a, b) = (density(d, &mut r), density(d, &mut r));
        let fab = fidelity(&a, &b).map_err(err)?;
        sym = sym.max((fab - fidelity(&b, &a).map_err(err)?).abs());

        let u = haar_unitary(d, &mut r);
        let rot = |m: &DensityMatrix| DensityMatrix::from_noisy(&(&u * m.matrix() * u.adjoint()), 1e-9).unwrap();
        unit = unit.max((fab - fidelity(&rot(&a), &rot(&b)).map_err(err)?).abs());

        let d2 = r.random_range(1..=3);
        let (c, e) = (density(d2, &mut r), density(d2, &mut r));
        let joint = fidelity(&a.tensor(&c), &b.tensor(&e)).map_err(err)?;
        mult = mult.max((joint - fab * fidelity(&c, &e).map_err(err)?).abs());

        let (p, q) = (density(d * d2, &mut r), density(d * d2, &mut r));
        let full = fidelity(&p, &q).map_err(err)?;
        let reduced = fidelity(
            &partial_trace(&p, &[d, d2], &[0]).map_err(err)?,
            &partial_trace(&q, &[d, d2], &[0]).map_err(err)?,
        )
        .map_err(err)?;
        mono = mono.max(full - reduced);
    }
    check(
        sym <= 1e-8 && unit <= 1e-8 && mult <= 1e-8 && mono <= 1e-8,
        format!("{CASES} each: symmetry {sym:.1e}, unitary {unit:.1e}, product {mult:.1e}, monotone excess {mono:.1e}"),
    )
}

fn inequalities(sc: &mut SelfConsistency) -> Outcome {
    let (mut pairs, mut premise_failures, mut violations) = (0, 0, 0);
    let mut worst_margin = f64::INFINITY;
    for n in 2..=6 {
        let alphabet = prepare_alphabet(n, 1, DEFAULT_RESTARTS, 1e-4, None).map_err(err)?;
        let ens = &alphabet.ensemble;
        let mut outs = Vec::with_capacity(n);
        for s in &ens.states {
            let out = clone_input(ens, s, FIXED_POINT_TOL).map_err(err)?;
            sc.record(&CloneKernel::new(ens, s).map_err(err)?, &out.fixed_point.rho_ctc);
            outs.push(out);
        }
        for i in 0..n {
            for j in 0..n {
                let rep =
                    check_ctc_inequalities(&ens.states[i].projector(), &ens.states[j].projector(), &outs[i], &outs[j])
                        .map_err(err)?;
                pairs += 1;
                premise_failures += usize::from(!rep.premise_holds);
                violations += usize::from(rep.violated);
                worst_margin = worst_margin.min(rep.margin_input);
                if rep.distinct {
                    worst_margin = worst_margin.min(rep.margin_ctc);
                }
            }
        }
    }
    check(
        violations == 0 && premise_failures == 0,
        format!(
            "{pairs} pairs, {violations} violations, {premise_failures} without premise, min margin {worst_margin:.1e}"
        ),
    )
}

fn no_signalling() -> Outcome {
    let rep = no_signalling_experiment(&mut rng(1)).map_err(err)?;
    check(
        rep.ab_vs_mixed <= 1e-9 && rep.r_vs_mixed <= 1e-9 && rep.r_shift <= 1e-9,
        format!(
            "D_AB={:.1e} D_R={:.1e} shift_R={:.1e} (A-R correlation {:.1e})",
            rep.ab_vs_mixed, rep.r_vs_mixed, rep.r_shift, rep.ar_correlation
        ),
    )
}

fn coulomb(points: &[[f64; 3]]) -> f64 {
    let mut e = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d: f64 = (0..3).map(|k| (points[i][k] - points[j][k]).powi(2)).sum();
            e += 1.0 / d.sqrt();
        }
    }
    e
}

/// Regular configurations: antipodes, equilateral triangle, tetrahedron, octahedron, icosahedron.
fn polytope(n: usize) -> Vec<[f64; 3]> {
    let unit = |v: [f64; 3]| {
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / r, v[1] / r, v[2] / r]
    };
    match n {
        2 => vec![[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]],
        3 => (0..3).map(|k| [(2.0 * PI * k as f64 / 3.0).cos(), (2.0 * PI * k as f64 / 3.0).sin(), 0.0]).collect(),
        4 => [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]].map(unit).to_vec(),
        6 => (0..3)
            .flat_map(|k| {
                [1.0, -1.0].map(|s| {
                    let mut v = [0.0; 3];
                    v[k] = s;
                    v
                })
            })
            .collect(),
        12 => {
            let g = (1.0 + 5f64.sqrt()) / 2.0;
            let mut pts = Vec::new();
            for a in [1.0, -1.0] {
                for b in [g, -g] {
                    pts.extend([[0.0, a, b], [a, b, 0.0], [b, 0.0, a]].map(unit));
                }
            }
            pts
        }
        _ => unreachable!(),
    }
}

fn thomson() -> Outcome {
    let published = [(2, 0.5), (3, 3f64.sqrt()), (4, 3.674234614), (6, 9.985281374), (12, 49.165253058)];
    let mut ok = true;
    let mut lines = Vec::new();
    for (n, value) in published {
        let oracle = coulomb(&polytope(n));
        let set = solve_thomson(n, &mut rng(1), DEFAULT_RESTARTS, DEFAULT_MAX_ITERS).map_err(err)?;
        let rel = (set.energy - oracle).abs() / oracle;
        ok &= rel <= 1e-5 && (oracle - value).abs() / value <= 1e-9;
        lines.push(format!("n={n} E={:.9} rel={rel:.1e}", set.energy));
    }
    check(ok, lines.join(", "))
}

fn desk_trend() -> Outcome {
    let config = SweepConfig::default();
    let start = Instant::now();
    let out = run_fidelity_sweep(&config, None, None, |r| {
        if let Some(row) = &r.row {
            eprintln!("  n={:>2} mean F_sym={:.6} ({:.1}s)", row.n, row.mean_f_sym, row.wall_seconds);
        }
    })
    .map_err(err)?;
    let rows = out.rows();
    if !out.complete() || rows.len() != config.n_values.len() {
        return Err(format!(
            "sweep incomplete: {} of {} rows, {} failures",
            rows.len(),
            config.n_values.len(),
            out.failures().len()
        ));
    }
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let means: Vec<f64> = rows.iter().map(|r| r.mean_f_sym).collect();
    let rho = spearman(&ns, &means).map_err(err)?;
    let curve: Vec<String> = rows.iter().map(|r| format!("{}:{:.4}", r.n, r.mean_f_sym)).collect();
    check(
        rho >= 0.9,
        format!(
            "spearman={rho:.3} over [{}], {} samples each, {:.0}s",
            curve.join(" "),
            config.samples_per_n,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn long_run() -> Option<Outcome> {
    if std::env::var("CTC_LONG_RUN").as_deref() != Ok("1") {
        return None;
    }
    let config = SweepConfig { n_values: vec![65], ..SweepConfig::long_run() };
    let bound = (5.0f64 / 6.0).sqrt();
    Some((|| {
        let out = run_fidelity_sweep(&config, None, None, |_| {}).map_err(err)?;
        let row = out.rows().into_iter().next().ok_or_else(|| "n=65 produced no row".to_string())?;
        check(
            row.samples >= 2000 && row.mean_f_sym > bound,
            format!(
                "n=65 mean F_sym={:.6} +- {:.1e} over {} samples, bound {bound:.6}",
                row.mean_f_sym,
                row.std_f_sym / (row.samples as f64).sqrt(),
                row.samples
            ),
        )
    })())
}

fn main() {
    let mut sc = SelfConsistency::default();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("perfect broadcasting", broadcast()),
        ("dual-path equivalence", dual_path(&mut sc)),
        ("fidelity properties", fidelity_properties()),
        ("CTC inequalities", inequalities(&mut sc)),
    ];
    results.push((
        "fixed-point self-consistency",
        check(
            sc.bad == 0 && sc.count > 0,
            format!("{} states, worst residual {:.1e}, {} bad", sc.count, sc.worst_residual, sc.bad),
        ),
    ));
    results.push(("no-signalling", no_signalling()));
    results.push(("Thomson minima", thomson()));
    results.push(("desk-scale trend", desk_trend()));

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    match long_run() {
        None => println!("SKIP  long-run crossing: set CTC_LONG_RUN=1"),
        Some(Ok(detail)) => println!("PASS  long-run crossing: {detail}"),
        Some(Err(detail)) => {
            failed += 1;
            println!("FAIL  long-run crossing: {detail}");
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
