use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trajq::cli::{self, ExperimentManifest, Overrides, SolverName};
use trajq::encoding::EncodingKind;
use trajq::Result;

/// Portfolio trajectories as QUBO: generate, compile, solve, benchmark.
///
/// Exit codes: 0 success, 2 validation error, 3 guard or limit, 4 IO.
///
/// Setting TRAJQ_GUARD_OVERRIDE=1 lifts the size guards on the exhaustive
/// solvers. This is dangerous: enumeration is exponential and can run for
/// days or exhaust memory.
#[derive(Parser)]
#[command(name = "trajq", version)]
struct Opts {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct SolverFlags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reads: Option<usize>,
    #[arg(long)]
    gauges: Option<usize>,
    #[arg(long)]
    sweeps: Option<usize>,
    /// Chain-strength factor relative to the largest logical coefficient (repeatable).
    #[arg(long = "chain-strength")]
    chain_strength: Vec<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Chimera hardware fixture (JSON).
    #[arg(long)]
    hardware: Option<PathBuf>,
}

impl SolverFlags {
    fn overrides(&self, alphas: Vec<f64>) -> Overrides {
        Overrides {
            seed: self.seed,
            reads: self.reads,
            gauges: self.gauges,
            sweeps: self.sweeps,
            chain_strengths: self.chain_strength.clone(),
            epsilon: self.epsilon,
            alphas,
            hardware: self.hardware.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write one instance file per grid cell and instance index.
    Gen {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compile an instance file into a QUBO artifact.
    Compile {
        spec: PathBuf,
        #[arg(long, default_value = "binary")]
        encoding: EncodingKind,
        /// Penalty strength M, replacing the value stored in the instance.
        #[arg(long)]
        penalty: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a QUBO artifact with exhaustive, sa or pipeline.
    Solve {
        qubo: PathBuf,
        #[arg(long, default_value = "sa")]
        solver: SolverName,
        #[command(flatten)]
        flags: SolverFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a benchmark manifest; completed cells are reused on rerun.
    Benchmark {
        manifest: PathBuf,
        #[command(flatten)]
        flags: SolverFlags,
        /// Perturbation level in percent (repeatable).
        #[arg(long)]
        alpha: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render text and gnuplot tables from a results.csv.
    Report {
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(opts: Opts) -> Result<()> {
    if let Some(jobs) = opts.jobs {
        // Ignored if a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match opts.command {
        Command::Gen { manifest, out, seed } => {
            let mut m = ExperimentManifest::read(&manifest)?;
            if let Some(s) = seed {
                m.seed = s;
            }
            let files = cli::cmd_gen(&m, &out)?;
            println!("wrote {} instance files to {}", files.len(), out.display());
        }
        Command::Compile {
            spec,
            encoding,
            penalty,
            out,
        } => {
            let s = cli::cmd_compile(&spec, encoding, penalty, &out)?;
            println!("vars={} density={:.2} M={}", s.vars, s.density, s.penalty_strength);
        }
        Command::Solve {
            qubo,
            solver,
            flags,
            out,
        } => {
            let sol = cli::cmd_solve(&qubo, solver, &flags.overrides(Vec::new()), &out)?;
            println!(
                "solver={} energy={} value={} feasible={}",
                sol.solver, sol.energy, sol.value, sol.feasible
            );
        }
        Command::Benchmark {
            manifest,
            flags,
            alpha,
            out,
        } => {
            let mut m = ExperimentManifest::read(&manifest)?;
            flags.overrides(alpha).apply_to_manifest(&mut m);
            let summary = cli::cmd_benchmark(&m, &out, opts.jobs)?;
            print!("{}", std::fs::read_to_string(out.join("results.txt")).unwrap_or_default());
            println!(
                "{} cells computed, {} reused, {} failed",
                summary.computed,
                summary.reused,
                summary.failed.len()
            );
            if let Some(first) = summary.failed.first() {
                eprintln!(
                    "error: {} benchmark cell(s) failed; first: {}",
                    summary.failed.len(),
                    first.error.as_deref().unwrap_or("unknown error")
                );
                std::process::exit(first.exit_code);
            }
        }
        Command::Report { csv, out } => {
            let report = cli::cmd_report(&csv, &out)?;
            print!("{}", report.text);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Opts::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
