//! `ctc-clone`: run the broadcast, cloning and no-signalling experiments from the shell.
//!
//! Exit codes: 0 success, 1 I/O or usage error, 2 solver did not converge, 3 a physics
//! check failed, 4 the unitary ensemble could not be built or loaded, 5 a sweep
//! finished with some samples or alphabet sizes missing.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ctc_clone::brun::DEFAULT_OVERLAP_FLOOR;
use ctc_clone::experiments::{
    check_broadcast, prepare_alphabet, run_fidelity_sweep, run_samples, write_samples_csv, write_summary_csv,
    FailureRecord, NResult, RunManifest, SampleMode, SweepConfig,
};
use ctc_clone::qmath::FIXED_POINT_TOL;
use ctc_clone::sphere::{solve_thomson, DEFAULT_MAX_ITERS, DEFAULT_RESTARTS};
use ctc_clone::{no_cloning_bound, Error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EXIT_IO: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_PHYSICS: u8 = 3;
const EXIT_ENSEMBLE: u8 = 4;
const EXIT_PARTIAL: u8 = 5;

/// Trace distances the no-signalling check must stay under.
const NOSIGNAL_TOL: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "ctc-clone", version, about = "Quantum cloning with a Deutsch closed timelike curve")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Thomson problem for n points and write the point set as JSON.
    Thomson {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_RESTARTS)]
        restarts: usize,
        /// Defaults to thomson_n<N>_s<SEED>.json in the current directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that every alphabet state is broadcast perfectly.
    Broadcast {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        alphabet: AlphabetArgs,
    },
    /// Fidelity against alphabet size, averaged over Haar-random inputs.
    CloneSweep {
        /// Comma-separated alphabet sizes.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = FIXED_POINT_TOL)]
        tol: f64,
        /// Output directory for samples.csv, summary.csv and manifest.json.
        #[arg(long, default_value = "sweep_out")]
        out: PathBuf,
        /// Use the alphabet states as inputs; every fidelity should be 1.
        #[arg(long)]
        control: bool,
        /// Large-N defaults (n = 40..65, 2000 samples) unless --n/--samples are given.
        #[arg(long)]
        long_run: bool,
        #[command(flatten)]
        mode: ModeArgs,
        #[command(flatten)]
        alphabet: AlphabetArgs,
    },
    /// Per-point fidelities over random inputs, for sphere plots.
    Scatter {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = FIXED_POINT_TOL)]
        tol: f64,
        /// Defaults to scatter_n<N>.csv in the current directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        control: bool,
        #[command(flatten)]
        mode: ModeArgs,
        #[command(flatten)]
        alphabet: AlphabetArgs,
    },
    /// Entangled input on the cloned register: check the reference is unaffected.
    Nosignal {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct AlphabetArgs {
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    restarts: usize,
    #[arg(long, default_value_t = DEFAULT_OVERLAP_FLOOR)]
    overlap_floor: f64,
    /// Directory for Thomson and ensemble caches.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ModeArgs {
    /// Twirl each input and score the symmetrized output.
    #[arg(long, conflicts_with = "raw")]
    symmetrized: bool,
    /// Score both output modes without twirling.
    #[arg(long)]
    raw: bool,
}

impl ModeArgs {
    fn symmetrized(&self, default: bool) -> bool {
        if self.symmetrized {
            true
        } else if self.raw {
            false
        } else {
            default
        }
    }
}

/// Maps a library error to its exit code.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NoFixedPoint { .. } => EXIT_NOT_CONVERGED,
        Error::OverlapConditionUnsatisfied { .. }
        | Error::InvalidCache { .. }
        | Error::SingularConfiguration { .. } => EXIT_ENSEMBLE,
        _ => EXIT_IO,
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(&e))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_IO) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(threads) = std::env::var("THREADS").ok().and_then(|t| t.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("warning: THREADS ignored: {e}");
        }
    }
    let result = match cli.command {
        Command::Thomson { n, seed, restarts, out } => cmd_thomson(n, seed, restarts, out),
        Command::Broadcast { n, seed, alphabet } => cmd_broadcast(n, seed, &alphabet),
        Command::CloneSweep { n, samples, seed, tol, out, control, long_run, mode, alphabet } => {
            let base = if long_run { SweepConfig::long_run() } else { SweepConfig::default() };
            let config = SweepConfig {
                n_values: if n.is_empty() { base.n_values } else { n },
                samples_per_n: samples.unwrap_or(base.samples_per_n),
                master_seed: seed,
                overlap_floor: alphabet.overlap_floor,
                thomson_restarts: alphabet.restarts,
                solver_tol: tol,
                symmetrized: mode.symmetrized(true),
                control,
            };
            let cache = alphabet.cache_dir.unwrap_or_else(|| out.join("cache"));
            cmd_clone_sweep(&config, &out, &cache)
        }
        Command::Scatter { n, samples, seed, tol, out, control, mode, alphabet } => {
            let mode = SampleMode { symmetrized: mode.symmetrized(false), control, tol };
            let out = out.unwrap_or_else(|| PathBuf::from(format!("scatter_n{n}.csv")));
            cmd_scatter(n, samples, seed, mode, &out, &alphabet)
        }
        Command::Nosignal { seed } => cmd_nosignal(seed),
    };
    result.unwrap_or_else(fail)
}

fn cmd_thomson(n: usize, seed: u64, restarts: usize, out: Option<PathBuf>) -> Result<ExitCode, Error> {
    let set = solve_thomson(n, &mut ChaCha8Rng::seed_from_u64(seed), restarts, DEFAULT_MAX_ITERS)?;
    let out = out.unwrap_or_else(|| PathBuf::from(format!("thomson_n{n}_s{seed}.json")));
    set.save(&out, seed)?;
    println!("n = {n}  energy = {:.6}  converged = {}", set.energy, set.converged);
    println!("wrote {}", out.display());
    Ok(if set.converged { ExitCode::SUCCESS } else { ExitCode::from(EXIT_NOT_CONVERGED) })
}

fn cmd_broadcast(n: usize, seed: u64, args: &AlphabetArgs) -> Result<ExitCode, Error> {
    if n < 2 {
        eprintln!("error: broadcast needs n >= 2");
        return Ok(ExitCode::from(EXIT_IO));
    }
    let alphabet = prepare_alphabet(n, seed, args.restarts, args.overlap_floor, args.cache_dir.as_deref())?;
    let report = check_broadcast(&alphabet.ensemble, FIXED_POINT_TOL);
    println!(
        "n = {n}  min overlap = {:.3e}  worst 1 - F = {:.3e}  worst D(rho_CTC, |j><j|) = {:.3e}  worst residual = {:.3e}",
        alphabet.ensemble.min_overlap, report.worst_fidelity_defect, report.worst_ctc_distance, report.worst_residual
    );
    for (j, reason) in &report.failures {
        println!("FAIL j = {j}: {reason}");
    }
    if report.passed() {
        println!("PASS: all {n} alphabet states broadcast");
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(EXIT_PHYSICS))
    }
}

fn print_row(r: &NResult) {
    match (&r.row, &r.error) {
        (Some(row), _) => println!(
            "n = {:>3}  mean F_sym = {:.6}  std = {:.6}  samples = {}  degenerate = {}  failed = {}  ({:.1} s)",
            row.n,
            row.mean_f_sym,
            row.std_f_sym,
            row.samples,
            row.degenerate_count,
            r.failures.len(),
            row.wall_seconds
        ),
        (None, err) => println!("n = {:>3}  FAILED: {}", r.n, err.as_deref().unwrap_or("unknown")),
    }
}

fn cmd_clone_sweep(config: &SweepConfig, out: &Path, cache: &Path) -> Result<ExitCode, Error> {
    config.validate()?;
    std::fs::create_dir_all(out)?;
    let bound = no_cloning_bound();
    println!("no-cloning bound sqrt(5/6) = {bound:.6}");
    let output = run_fidelity_sweep(config, Some(cache), Some(&out.join("checkpoint.json")), print_row)?;

    let samples = out.join("samples.csv");
    let summary = out.join("summary.csv");
    write_samples_csv(&samples, &output.records())?;
    write_summary_csv(&summary, &output.rows())?;
    let mut manifest = RunManifest::new("clone-sweep", serde_json::to_value(config)?);
    manifest.cache_keys = output.cache_keys();
    manifest.failures = output.failures();
    manifest.add_output(&samples)?;
    manifest.add_output(&summary)?;
    manifest.finish(&out.join("manifest.json"))?;

    let above: Vec<usize> = output.rows().iter().filter(|r| r.mean_f_sym > bound).map(|r| r.n).collect();
    if above.is_empty() {
        println!("no alphabet size exceeds the bound");
    } else {
        println!("exceeds the bound at n = {above:?}");
    }
    println!("wrote {}, {} and manifest.json", samples.display(), summary.display());
    Ok(if output.complete() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_PARTIAL) })
}

fn cmd_scatter(
    n: usize,
    samples: usize,
    seed: u64,
    mode: SampleMode,
    out: &Path,
    args: &AlphabetArgs,
) -> Result<ExitCode, Error> {
    let alphabet = prepare_alphabet(n, seed, args.restarts, args.overlap_floor, args.cache_dir.as_deref())?;
    let (records, failures) = run_samples(&alphabet, seed, samples, mode);
    write_samples_csv(out, &records)?;
    for f in &failures {
        let f =
            FailureRecord { n: f.n, sample_index: Some(f.sample_index), seed: Some(f.seed), reason: f.reason.clone() };
        eprintln!("sample failed: {}", serde_json::to_string(&f)?);
    }
    println!("wrote {} rows to {}", records.len(), out.display());
    Ok(if failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_PARTIAL) })
}

fn cmd_nosignal(seed: u64) -> Result<ExitCode, Error> {
    let report = ctc_clone::ctc::no_signalling_experiment(&mut ChaCha8Rng::seed_from_u64(seed))?;
    println!("D(Tr_R rho_tot, rho_A ⊗ rho_A) = {:.3e}", report.ab_vs_mixed);
    println!("D(rho_R, 1/2)                  = {:.3e}", report.r_vs_mixed);
    println!("D(rho_R, rho_R without CTC)    = {:.3e}", report.r_shift);
    println!("clone-reference correlation    = {:.3e}", report.ar_correlation);
    let ok = [report.ab_vs_mixed, report.r_vs_mixed, report.r_shift].iter().all(|&d| d <= NOSIGNAL_TOL);
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(EXIT_PHYSICS) })
}
