use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use haldane_core::sweep::{Refinement, DEFAULT_DELTA, DEFAULT_TRUNCATION_LIMIT};
use haldane_core::{run_sweep, DmrgConfig, Mode, PGrid, SweepConfig, SweepError, SweepOutcome};

const EXIT_PARTIAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    Ed,
    Dmrg,
}

/// Scan the anisotropy `p` of the spin-1 chain and record energy, fidelity,
/// fidelity susceptibility and central-pair entropy.
#[derive(Debug, Parser)]
#[command(name = "haldane", version)]
struct Args {
    /// Ground-state solver.
    #[arg(long, value_enum, default_value = "dmrg")]
    mode: Backend,
    /// Chain length; repeat for several.
    #[arg(long = "n", required = true)]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    p_min: f64,
    #[arg(long, default_value_t = 1.2)]
    p_max: f64,
    #[arg(long, default_value_t = 0.01)]
    p_step: f64,
    /// Lower edge of the finer grid.
    #[arg(long, default_value_t = 0.8)]
    refine_min: f64,
    #[arg(long, default_value_t = 0.9)]
    refine_max: f64,
    #[arg(long, default_value_t = 0.002)]
    refine_step: f64,
    /// Use only the uniform grid.
    #[arg(long)]
    no_refine: bool,
    /// Fidelity step in `p`.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    /// Maximum kept bond dimension.
    #[arg(long)]
    m: Option<usize>,
    /// Maximum number of DMRG sweeps.
    #[arg(long, conflicts_with = "paper_protocol")]
    sweeps: Option<usize>,
    /// Exactly three sweeps at m = 70 unless `--m` is given.
    #[arg(long)]
    paper_protocol: bool,
    /// Seed of the random starting vectors.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Re-solve chains with N <= --ed-cap exactly and compare.
    #[arg(long)]
    oracle_check: bool,
    /// Largest N solved by exact diagonalization.
    #[arg(long)]
    ed_cap: Option<usize>,
    /// Discarded weight above which a point is flagged.
    #[arg(long, default_value_t = DEFAULT_TRUNCATION_LIMIT)]
    truncation_limit: f64,
    #[arg(long, default_value = "sweep.csv")]
    output: PathBuf,
    /// Keep finished points of an existing dataset.
    #[arg(long)]
    resume: bool,
}

fn config(args: &Args) -> SweepConfig {
    let mode = match args.mode {
        Backend::Ed => Mode::Ed,
        Backend::Dmrg => Mode::Dmrg,
    };
    let mut cfg = SweepConfig::new(mode, args.sizes.clone(), &args.output);
    cfg.grid = PGrid {
        min: args.p_min,
        max: args.p_max,
        step: args.p_step,
        refine: (!args.no_refine).then_some(Refinement {
            min: args.refine_min,
            max: args.refine_max,
            step: args.refine_step,
        }),
    };
    cfg.delta = args.delta;
    cfg.dmrg = if args.paper_protocol {
        DmrgConfig::paper_protocol()
    } else {
        DmrgConfig::default()
    };
    if let Some(m) = args.m {
        cfg.dmrg.max_bond = m;
    }
    if let Some(s) = args.sweeps {
        cfg.dmrg.max_sweeps = s;
        cfg.dmrg.min_sweeps = cfg.dmrg.min_sweeps.min(s);
    }
    if let Some(seed) = args.seed {
        cfg.dmrg.seed = seed;
        cfg.ed.seed = seed;
    }
    if let Some(cap) = args.ed_cap {
        cfg.ed.cap = cap;
    }
    cfg.workers = args.workers;
    cfg.oracle_check = args.oracle_check;
    cfg.resume = args.resume;
    cfg.truncation_limit = args.truncation_limit;
    cfg
}

fn summarize(outcome: &SweepOutcome) {
    eprintln!(
        "{} points ({} computed, {} reused) -> {}",
        outcome.records.len(),
        outcome.computed,
        outcome.reused,
        outcome.csv_path.display()
    );
    for f in &outcome.failures {
        eprintln!("failed: N={} p={}: {}", f.n, f.p, f.error);
    }
    if !outcome.truncation_flags.is_empty() {
        eprintln!(
            "{} points above the discarded-weight limit (see {})",
            outcome.truncation_flags.len(),
            outcome.manifest_path.display()
        );
    }
    if let Some(o) = &outcome.oracle {
        eprintln!(
            "oracle check {}: max |dE| {:.2e}, |dF| {:.2e}, |dS| {:.2e}",
            if o.passed { "passed" } else { "FAILED" },
            o.max_abs_energy(),
            o.max_abs_fidelity(),
            o.max_abs_entropy()
        );
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let cfg = config(&args);
    match run_sweep(&cfg) {
        Ok(outcome) => {
            summarize(&outcome);
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e @ (SweepError::InvalidConfig(_) | SweepError::CapExceeded { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_PARTIAL)
        }
    }
}
