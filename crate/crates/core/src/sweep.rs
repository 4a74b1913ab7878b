//! Parameter scans over `(N, p)` with CSV output and a TOML manifest.
//!
//! Each grid point needs ground states at `p - δ`, `p` and `p + δ`. Points of
//! one chain length are solved in increasing `p`, each solve warm-starting
//! from the previous one, and solves shared between neighbouring points are
//! computed once. Distinct chain lengths run concurrently.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::dmrg::{dmrg_ground_state, dmrg_ground_state_from, DmrgConfig, DmrgError};
use crate::ed::{ed_ground_state_with, EdConfig, EdError, EdGroundState};
use crate::model::{ModelError, ModelParams};
use crate::mps::Mps;
use crate::observables::{
    central_pair_entropy, entropy_derivative, fidelity, fidelity_susceptibility, ObservableError,
};

/// Column names of the dataset, in order.
pub const CSV_HEADER: [&str; 11] = [
    "N",
    "p",
    "delta",
    "energy",
    "fidelity",
    "susceptibility",
    "entropy_pair",
    "dE_dp",
    "max_discarded_weight",
    "sweeps_run",
    "wall_time_s",
];

/// Grid values are identified after rounding to this many decimals.
const P_KEY_SCALE: f64 = 1e9;

pub const DEFAULT_DELTA: f64 = 0.001;
pub const DEFAULT_TRUNCATION_LIMIT: f64 = 1e-10;
/// Largest deviation from the ED route accepted by the oracle check.
pub const ORACLE_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("N = {n} exceeds the exact-diagonalization cap {cap}")]
    CapExceeded { n: usize, cap: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot read existing dataset {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("cannot encode manifest: {0}")]
    Manifest(#[from] toml::ser::Error),
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ed(#[from] EdError),
    #[error(transparent)]
    Dmrg(#[from] DmrgError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ed,
    Dmrg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Refinement {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

/// Uniform grid in `p`, optionally with a finer step inside a window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
    pub refine: Option<Refinement>,
}

impl Default for PGrid {
    fn default() -> Self {
        Self {
            min: 0.5,
            max: 1.2,
            step: 0.01,
            refine: Some(Refinement {
                min: 0.8,
                max: 0.9,
                step: 0.002,
            }),
        }
    }
}

pub fn p_key(p: f64) -> i64 {
    (p * P_KEY_SCALE).round() as i64
}

fn key_value(key: i64) -> f64 {
    key as f64 / P_KEY_SCALE
}

fn uniform_keys(min: f64, max: f64, step: f64) -> Vec<i64> {
    let count = ((max - min) / step + 1e-9).floor() as i64;
    (0..=count).map(|i| p_key(min + i as f64 * step)).collect()
}

impl PGrid {
    pub fn uniform(min: f64, max: f64, step: f64) -> Self {
        Self {
            min,
            max,
            step,
            refine: None,
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let bad = |m: String| Err(SweepError::InvalidConfig(m));
        let finite = [self.min, self.max, self.step].iter().all(|v| v.is_finite());
        if !finite || self.min > self.max || !(self.step > 0.0) {
            return bad(format!(
                "need finite p_min <= p_max and p_step > 0 (got {}, {}, {})",
                self.min, self.max, self.step
            ));
        }
        if let Some(r) = &self.refine {
            if !(r.min <= r.max) || !(r.step > 0.0) || !r.step.is_finite() {
                return bad("refinement window needs min <= max and step > 0".into());
            }
        }
        Ok(())
    }

    /// Sorted distinct grid values, each rounded to 1e-9.
    pub fn points(&self) -> Vec<f64> {
        let mut keys: BTreeSet<i64> = uniform_keys(self.min, self.max, self.step)
            .into_iter()
            .collect();
        if let Some(r) = &self.refine {
            let (lo, hi) = (p_key(self.min), p_key(self.max));
            keys.extend(
                uniform_keys(r.min, r.max, r.step)
                    .into_iter()
                    .filter(|k| (lo..=hi).contains(k)),
            );
        }
        keys.into_iter().map(key_value).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub mode: Mode,
    pub sizes: Vec<usize>,
    pub grid: PGrid,
    pub delta: f64,
    pub dmrg: DmrgConfig,
    pub ed: EdConfig,
    pub workers: usize,
    /// Also solve by exact diagonalization where `N` allows and compare.
    pub oracle_check: bool,
    pub output: PathBuf,
    pub resume: bool,
    /// Records whose discarded weight exceeds this are flagged.
    pub truncation_limit: f64,
}

impl SweepConfig {
    pub fn new(mode: Mode, sizes: Vec<usize>, output: impl Into<PathBuf>) -> Self {
        Self {
            mode,
            sizes,
            grid: PGrid::default(),
            delta: DEFAULT_DELTA,
            dmrg: DmrgConfig::default(),
            ed: EdConfig::default(),
            workers: 1,
            oracle_check: false,
            output: output.into(),
            resume: false,
            truncation_limit: DEFAULT_TRUNCATION_LIMIT,
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let bad = |m: String| Err(SweepError::InvalidConfig(m));
        if self.sizes.is_empty() {
            return bad("no chain lengths given".into());
        }
        for &n in &self.sizes {
            ModelParams::new(n, 1.0).map_err(|e| SweepError::InvalidConfig(e.to_string()))?;
            if self.mode == Mode::Ed && n > self.ed.cap {
                return Err(SweepError::CapExceeded { n, cap: self.ed.cap });
            }
        }
        self.grid.validate()?;
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        self.dmrg
            .validate()
            .map_err(|e| SweepError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    pub fn manifest_path(&self) -> PathBuf {
        manifest_path(&self.output)
    }
}

/// `<output stem>.manifest.toml` next to the dataset.
pub fn manifest_path(output: &Path) -> PathBuf {
    output.with_extension("manifest.toml")
}

/// One dataset row. Failed points carry NaN in every computed field.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub n: usize,
    pub p: f64,
    pub delta: f64,
    pub energy: f64,
    pub fidelity: f64,
    pub susceptibility: f64,
    pub entropy_pair: f64,
    pub d_entropy_dp: f64,
    pub max_discarded_weight: f64,
    pub sweeps_run: usize,
    pub wall_time_s: f64,
}

impl SweepRecord {
    fn failed(n: usize, p: f64, delta: f64, wall_time_s: f64) -> Self {
        Self {
            n,
            p,
            delta,
            energy: f64::NAN,
            fidelity: f64::NAN,
            susceptibility: f64::NAN,
            entropy_pair: f64::NAN,
            d_entropy_dp: f64::NAN,
            max_discarded_weight: f64::NAN,
            sweeps_run: 0,
            wall_time_s,
        }
    }

    pub fn is_complete(&self) -> bool {
        [
            self.energy,
            self.fidelity,
            self.susceptibility,
            self.entropy_pair,
            self.d_entropy_dp,
            self.max_discarded_weight,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    pub fn key(&self) -> (usize, i64) {
        (self.n, p_key(self.p))
    }

    /// CSV fields in [`CSV_HEADER`] order.
    pub fn csv_fields(&self) -> [String; 11] {
        [
            self.n.to_string(),
            format_sig(self.p),
            format_sig(self.delta),
            format_sig(self.energy),
            format_sig(self.fidelity),
            format_sig(self.susceptibility),
            format_sig(self.entropy_pair),
            format_sig(self.d_entropy_dp),
            format_sig(self.max_discarded_weight),
            self.sweeps_run.to_string(),
            format_sig(self.wall_time_s),
        ]
    }

    fn from_csv(row: &csv::StringRecord) -> Option<Self> {
        if row.len() != CSV_HEADER.len() {
            return None;
        }
        let f = |i: usize| row[i].trim().parse::<f64>().ok();
        Some(Self {
            n: row[0].trim().parse().ok()?,
            p: f(1)?,
            delta: f(2)?,
            energy: f(3)?,
            fidelity: f(4)?,
            susceptibility: f(5)?,
            entropy_pair: f(6)?,
            d_entropy_dp: f(7)?,
            max_discarded_weight: f(8)?,
            sweeps_run: row[9].trim().parse().ok()?,
            wall_time_s: f(10)?,
        })
    }
}

/// Formats with 12 significant digits, dropping trailing zeros; exponent
/// notation outside `[1e-5, 1e12)`.
pub fn format_sig(x: f64) -> String {
    const DIGITS: usize = 12;
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..DIGITS as i32).contains(&exp) {
        let decimals = (DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[derive(Debug, Clone)]
enum SolvedState {
    Ed(EdGroundState),
    Dmrg(Mps),
}

#[derive(Debug, Clone)]
struct Solve {
    energy: f64,
    entropy: f64,
    state: SolvedState,
    max_discarded: f64,
    sweeps: usize,
    converged: bool,
    wall: f64,
}

fn solve_point(
    mode: Mode,
    n: usize,
    p: f64,
    cfg: &SweepConfig,
    warm: Option<&SolvedState>,
) -> Result<Solve, SolveError> {
    let start = Instant::now();
    let params = ModelParams::new(n, p)?;
    let out = match mode {
        Mode::Ed => {
            let gs = ed_ground_state_with(&params, 0, &cfg.ed)?;
            Solve {
                energy: gs.energy,
                entropy: central_pair_entropy(&gs)?,
                state: SolvedState::Ed(gs),
                max_discarded: 0.0,
                sweeps: 0,
                converged: true,
                wall: 0.0,
            }
        }
        Mode::Dmrg => {
            let (psi, report) = match warm {
                Some(SolvedState::Dmrg(init)) => dmrg_ground_state_from(&params, &cfg.dmrg, init)?,
                _ => dmrg_ground_state(&params, &cfg.dmrg)?,
            };
            Solve {
                energy: report.energy,
                entropy: central_pair_entropy(&psi)?,
                state: SolvedState::Dmrg(psi),
                max_discarded: report.max_discarded_weight,
                sweeps: report.sweeps_run,
                converged: report.converged,
                wall: 0.0,
            }
        }
    };
    Ok(Solve {
        wall: start.elapsed().as_secs_f64(),
        ..out
    })
}

fn state_fidelity(a: &SolvedState, b: &SolvedState) -> Result<f64, SolveError> {
    Ok(match (a, b) {
        (SolvedState::Ed(x), SolvedState::Ed(y)) => fidelity(x, y)?,
        (SolvedState::Dmrg(x), SolvedState::Dmrg(y)) => fidelity(x, y)?,
        _ => return Err(ObservableError::Mismatch.into()),
    })
}

/// Outcome of one grid point as produced by a worker.
#[derive(Debug, Clone)]
struct PointResult {
    record: SweepRecord,
    error: Option<String>,
    unconverged: bool,
}

/// Solves one chain length over `points` (increasing), sending each finished
/// point through `emit`.
fn run_chain(mode: Mode, n: usize, points: &[f64], cfg: &SweepConfig, mut emit: impl FnMut(PointResult)) {
    let mut cache: BTreeMap<i64, Result<Solve, String>> = BTreeMap::new();
    let mut last: Option<SolvedState> = None;
    let dk = p_key(cfg.delta);
    for &p in points {
        let key = p_key(p);
        let p = key_value(key);
        cache.retain(|&k, _| k >= key - dk);
        let mut wall = 0.0;
        for k in [key - dk, key, key + dk] {
            if cache.contains_key(&k) {
                continue;
            }
            let solved = solve_point(mode, n, key_value(k), cfg, last.as_ref());
            match &solved {
                Ok(s) => {
                    wall += s.wall;
                    last = Some(s.state.clone());
                    log::debug!("N={n} p={:.6} E={:.12} sweeps={}", key_value(k), s.energy, s.sweeps);
                }
                Err(e) => log::warn!("N={n} p={:.6}: {e}", key_value(k)),
            }
            cache.insert(k, solved.map_err(|e| e.to_string()));
        }
        let get = |k: i64| cache[&k].as_ref().map_err(|e| e.clone());
        let result = (|| -> Result<(SweepRecord, bool), String> {
            let (lo, mid, hi) = (get(key - dk)?, get(key)?, get(key + dk)?);
            let f = state_fidelity(&mid.state, &hi.state).map_err(|e| e.to_string())?;
            let s = fidelity_susceptibility(f, cfg.delta, n).map_err(|e| e.to_string())?;
            let d = entropy_derivative(lo.entropy, hi.entropy, cfg.delta).map_err(|e| e.to_string())?;
            let record = SweepRecord {
                n,
                p,
                delta: cfg.delta,
                energy: mid.energy,
                fidelity: f,
                susceptibility: s,
                entropy_pair: mid.entropy,
                d_entropy_dp: d,
                max_discarded_weight: lo.max_discarded.max(mid.max_discarded).max(hi.max_discarded),
                sweeps_run: mid.sweeps,
                wall_time_s: wall,
            };
            Ok((record, !(lo.converged && mid.converged && hi.converged)))
        })();
        let point = match result {
            Ok((record, unconverged)) => {
                log::info!(
                    "N={n} p={p:.4} F={:.12} S={:.6} E_pair={:.8} ({wall:.2}s)",
                    record.fidelity,
                    record.susceptibility,
                    record.entropy_pair
                );
                PointResult {
                    record,
                    error: None,
                    unconverged,
                }
            }
            Err(e) => PointResult {
                record: SweepRecord::failed(n, p, cfg.delta, wall),
                error: Some(e),
                unconverged: false,
            },
        };
        emit(point);
    }
}

/// Runs `jobs` on up to `workers` threads; results arrive at `sink` on the
/// calling thread.
fn run_jobs(
    jobs: Vec<(Mode, usize, Vec<f64>)>,
    cfg: &SweepConfig,
    mut sink: impl FnMut(PointResult),
) {
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<PointResult>();
    let jobs = &jobs;
    std::thread::scope(|scope| {
        for _ in 0..cfg.workers.min(jobs.len()) {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((mode, n, points)) = jobs.get(i) else { break };
                run_chain(*mode, *n, points, cfg, |r| {
                    let _ = tx.send(r);
                });
            });
        }
        drop(tx);
        for r in rx {
            sink(r);
        }
    });
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointFailure {
    pub n: usize,
    pub p: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationFlag {
    pub n: usize,
    pub p: f64,
    pub max_discarded_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleComparison {
    pub n: usize,
    pub points: usize,
    pub max_abs_energy: f64,
    pub max_abs_fidelity: f64,
    pub max_abs_entropy: f64,
    pub passed: bool,
}

fn compare(n: usize, a: &[SweepRecord], b: &[SweepRecord]) -> OracleComparison {
    let mut out = OracleComparison {
        n,
        points: 0,
        max_abs_energy: 0.0,
        max_abs_fidelity: 0.0,
        max_abs_entropy: 0.0,
        passed: true,
    };
    let by_key: BTreeMap<_, _> = b.iter().map(|r| (r.key(), r)).collect();
    for ra in a.iter().filter(|r| r.n == n) {
        let Some(rb) = by_key.get(&ra.key()) else {
            out.passed = false;
            continue;
        };
        out.points += 1;
        let d = |x: f64, y: f64| if x.is_finite() && y.is_finite() { (x - y).abs() } else { f64::INFINITY };
        out.max_abs_energy = out.max_abs_energy.max(d(ra.energy, rb.energy));
        out.max_abs_fidelity = out.max_abs_fidelity.max(d(ra.fidelity, rb.fidelity));
        out.max_abs_entropy = out.max_abs_entropy.max(d(ra.entropy_pair, rb.entropy_pair));
    }
    out.passed &= out.points > 0
        && out.max_abs_energy < ORACLE_TOLERANCE
        && out.max_abs_fidelity < ORACLE_TOLERANCE
        && out.max_abs_entropy < ORACLE_TOLERANCE;
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub tolerance: f64,
    pub comparisons: Vec<OracleComparison>,
    pub passed: bool,
}

impl OracleReport {
    pub fn max_abs_energy(&self) -> f64 {
        self.comparisons.iter().map(|c| c.max_abs_energy).fold(0.0, f64::max)
    }

    pub fn max_abs_fidelity(&self) -> f64 {
        self.comparisons.iter().map(|c| c.max_abs_fidelity).fold(0.0, f64::max)
    }

    pub fn max_abs_entropy(&self) -> f64 {
        self.comparisons.iter().map(|c| c.max_abs_entropy).fold(0.0, f64::max)
    }
}

fn collect(jobs: Vec<(Mode, usize, Vec<f64>)>, cfg: &SweepConfig) -> Vec<SweepRecord> {
    let mut out = Vec::new();
    run_jobs(jobs, cfg, |r| out.push(r.record));
    out.sort_by_key(|r| r.key());
    out
}

/// Solves the configured grid with both backends and compares energy,
/// fidelity and central-pair entropy point by point. No files are written.
pub fn verify_against_oracle(cfg: &SweepConfig) -> Result<OracleReport, SweepError> {
    let cfg = SweepConfig {
        mode: Mode::Dmrg,
        ..cfg.clone()
    };
    cfg.validate()?;
    if let Some(&n) = cfg.sizes.iter().find(|&&n| n > cfg.ed.cap) {
        return Err(SweepError::CapExceeded { n, cap: cfg.ed.cap });
    }
    let points = cfg.grid.points();
    let jobs = |mode| cfg.sizes.iter().map(|&n| (mode, n, points.clone())).collect();
    let dmrg = collect(jobs(Mode::Dmrg), &cfg);
    let ed = collect(jobs(Mode::Ed), &cfg);
    let comparisons: Vec<_> = cfg.sizes.iter().map(|&n| compare(n, &dmrg, &ed)).collect();
    Ok(OracleReport {
        tolerance: ORACLE_TOLERANCE,
        passed: comparisons.iter().all(|c| c.passed),
        comparisons,
    })
}

/// Summary of a finished [`run_sweep`].
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    /// All records in the dataset, ordered by `(N, p)`.
    pub records: Vec<SweepRecord>,
    pub computed: usize,
    pub reused: usize,
    pub failures: Vec<PointFailure>,
    pub truncation_flags: Vec<TruncationFlag>,
    pub unconverged: Vec<(usize, f64)>,
    pub oracle: Option<OracleReport>,
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
}

impl SweepOutcome {
    /// `0` when every point succeeded (and the oracle agreed, if run),
    /// otherwise `1`.
    pub fn exit_code(&self) -> i32 {
        let oracle_ok = self.oracle.as_ref().is_none_or(|o| o.passed);
        if self.failures.is_empty() && oracle_ok {
            0
        } else {
            1
        }
    }

    pub fn records_for(&self, n: usize) -> Vec<&SweepRecord> {
        self.records.iter().filter(|r| r.n == n).collect()
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SweepError + '_ {
    move |source| SweepError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a dataset written by [`write_csv`]. Rows that fail to parse are
/// skipped.
pub fn read_csv(path: &Path) -> Result<Vec<SweepRecord>, SweepError> {
    let mut reader = csv::Reader::from_path(path).map_err(|source| SweepError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|source| SweepError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        if let Some(r) = SweepRecord::from_csv(&row) {
            out.push(r);
        }
    }
    Ok(out)
}

/// Writes `records` atomically (temporary file, then rename).
pub fn write_csv<'a>(path: &Path, records: impl IntoIterator<Item = &'a SweepRecord>) -> Result<(), SweepError> {
    let tmp = path.with_extension("csv.partial");
    {
        let file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        let mut w = csv::Writer::from_writer(io::BufWriter::new(file));
        let to_io = |e: csv::Error| io::Error::other(e.to_string());
        w.write_record(CSV_HEADER).map_err(to_io).map_err(io_err(&tmp))?;
        for r in records {
            w.write_record(r.csv_fields()).map_err(to_io).map_err(io_err(&tmp))?;
        }
        w.flush().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Serialize)]
struct Manifest<'a> {
    format_version: u32,
    library_version: &'static str,
    status: &'static str,
    records: usize,
    computed: usize,
    reused: usize,
    wall_time_s: f64,
    columns: Vec<&'static str>,
    config: ManifestConfig<'a>,
    conventions: Conventions,
    failures: &'a [PointFailure],
    truncation_flags: &'a [TruncationFlag],
    unconverged: Vec<PointRef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<&'a OracleReport>,
}

#[derive(Serialize)]
struct PointRef {
    n: usize,
    p: f64,
}

#[derive(Serialize)]
struct ManifestConfig<'a> {
    mode: Mode,
    sizes: &'a [usize],
    grid: &'a PGrid,
    grid_points: usize,
    delta: f64,
    workers: usize,
    oracle_check: bool,
    resume: bool,
    output: String,
    truncation_limit: f64,
    dmrg: &'a DmrgConfig,
    ed: &'a EdConfig,
}

#[derive(Serialize)]
struct Conventions {
    fidelity_pair: &'static str,
    susceptibility: &'static str,
    entropy: &'static str,
    entropy_derivative: &'static str,
    target_state: &'static str,
    failed_records: &'static str,
}

impl Conventions {
    fn current() -> Self {
        Self {
            fidelity_pair: "forward: |<psi(p)|psi(p+delta)>|",
            susceptibility: "2 (1 - F) / (N delta^2)",
            entropy: "von Neumann, log2, sites N/2 and N/2+1 (1-based)",
            entropy_derivative: "central: (E(p+delta) - E(p-delta)) / (2 delta)",
            target_state: "lowest Sz = 0 state, spin-flip even unless odd is strictly lower",
            failed_records: "NaN in every computed column",
        }
    }
}

fn write_manifest(cfg: &SweepConfig, outcome: &SweepOutcome, wall: f64) -> Result<(), SweepError> {
    let manifest = Manifest {
        format_version: 1,
        library_version: env!("CARGO_PKG_VERSION"),
        status: if outcome.exit_code() == 0 { "ok" } else { "partial" },
        records: outcome.records.len(),
        computed: outcome.computed,
        reused: outcome.reused,
        wall_time_s: wall,
        columns: CSV_HEADER.to_vec(),
        config: ManifestConfig {
            mode: cfg.mode,
            sizes: &cfg.sizes,
            grid: &cfg.grid,
            grid_points: cfg.grid.points().len(),
            delta: cfg.delta,
            workers: cfg.workers,
            oracle_check: cfg.oracle_check,
            resume: cfg.resume,
            output: cfg.output.display().to_string(),
            truncation_limit: cfg.truncation_limit,
            dmrg: &cfg.dmrg,
            ed: &cfg.ed,
        },
        conventions: Conventions::current(),
        failures: &outcome.failures,
        truncation_flags: &outcome.truncation_flags,
        unconverged: outcome
            .unconverged
            .iter()
            .map(|&(n, p)| PointRef { n, p })
            .collect(),
        oracle: outcome.oracle.as_ref(),
    };
    let text = toml::to_string(&manifest)?;
    let path = &outcome.manifest_path;
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(text.as_bytes()).map_err(io_err(path))
}

/// Runs the scan, writing the dataset to `cfg.output` (rewritten in `(N, p)`
/// order as points complete) and the manifest next to it.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome, SweepError> {
    cfg.validate()?;
    let start = Instant::now();
    let points = cfg.grid.points();
    let wanted: BTreeSet<(usize, i64)> = cfg
        .sizes
        .iter()
        .flat_map(|&n| points.iter().map(move |&p| (n, p_key(p))))
        .collect();

    let mut done: BTreeMap<(usize, i64), SweepRecord> = BTreeMap::new();
    if cfg.resume && cfg.output.exists() {
        for r in read_csv(&cfg.output)? {
            let same_delta = (r.delta - cfg.delta).abs() <= 1e-12 * cfg.delta;
            if r.is_complete() && same_delta && wanted.contains(&r.key()) {
                done.insert(r.key(), r);
            }
        }
    }
    let reused = done.len();

    // One job per maximal run of missing points of each chain length.
    let mut jobs = Vec::new();
    let mut sizes = cfg.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    for &n in &sizes {
        let mut run: Vec<f64> = Vec::new();
        for &p in &points {
            if done.contains_key(&(n, p_key(p))) {
                if !run.is_empty() {
                    jobs.push((cfg.mode, n, std::mem::take(&mut run)));
                }
            } else {
                run.push(p);
            }
        }
        if !run.is_empty() {
            jobs.push((cfg.mode, n, run));
        }
    }

    if let Some(dir) = cfg.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut failures = Vec::new();
    let mut unconverged = Vec::new();
    let mut computed = 0;
    let write_error = Mutex::new(None);
    run_jobs(jobs, cfg, |point| {
        computed += 1;
        if let Some(e) = point.error {
            failures.push(PointFailure {
                n: point.record.n,
                p: point.record.p,
                error: e,
            });
        }
        if point.unconverged {
            unconverged.push((point.record.n, point.record.p));
        }
        done.insert(point.record.key(), point.record);
        if let Err(e) = write_csv(&cfg.output, done.values()) {
            write_error.lock().unwrap().get_or_insert(e);
        }
    });
    if let Some(e) = write_error.into_inner().unwrap() {
        return Err(e);
    }
    write_csv(&cfg.output, done.values())?;
    let records: Vec<SweepRecord> = done.into_values().collect();

    let truncation_flags: Vec<TruncationFlag> = records
        .iter()
        .filter(|r| r.max_discarded_weight > cfg.truncation_limit)
        .map(|r| TruncationFlag {
            n: r.n,
            p: r.p,
            max_discarded_weight: r.max_discarded_weight,
        })
        .collect();
    for f in &truncation_flags {
        log::warn!(
            "N={} p={}: discarded weight {:e} above {:e}",
            f.n,
            f.p,
            f.max_discarded_weight,
            cfg.truncation_limit
        );
    }

    let oracle = if cfg.oracle_check && cfg.mode == Mode::Dmrg {
        let eligible: Vec<usize> = sizes.iter().copied().filter(|&n| n <= cfg.ed.cap).collect();
        if eligible.is_empty() {
            None
        } else {
            let ed_jobs = eligible.iter().map(|&n| (Mode::Ed, n, points.clone())).collect();
            let ed = collect(ed_jobs, cfg);
            let comparisons: Vec<_> = eligible.iter().map(|&n| compare(n, &records, &ed)).collect();
            Some(OracleReport {
                tolerance: ORACLE_TOLERANCE,
                passed: comparisons.iter().all(|c| c.passed),
                comparisons,
            })
        }
    } else {
        None
    };

    let outcome = SweepOutcome {
        records,
        computed,
        reused,
        failures,
        truncation_flags,
        unconverged,
        oracle,
        csv_path: cfg.output.clone(),
        manifest_path: cfg.manifest_path(),
    };
    write_manifest(cfg, &outcome, start.elapsed().as_secs_f64())?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_refined_window() {
        let pts = PGrid::default().points();
        // 71 coarse points plus 40 extra inside [0.80, 0.90]
        assert_eq!(pts.len(), 71 + 40);
        assert_eq!(pts[0], 0.5);
        assert_eq!(*pts.last().unwrap(), 1.2);
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
        assert!(pts.contains(&0.802) && pts.contains(&0.85));
        assert!(!pts.contains(&0.792));
    }

    #[test]
    fn degenerate_grid_has_one_point() {
        assert_eq!(PGrid::uniform(0.85, 0.85, 0.01).points(), vec![0.85]);
        assert!(PGrid::uniform(0.9, 0.8, 0.01).validate().is_err());
        assert!(PGrid::uniform(0.8, 0.9, 0.0).validate().is_err());
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(0.85), "0.85");
        assert_eq!(format_sig(-49.7992895269475), "-49.7992895269");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(9.45e-9), "9.45e-9");
        assert_eq!(format_sig(0.999999999999951), "1");
        assert_eq!(format_sig(1.23456789012345e-3), "0.00123456789012");
        assert_eq!(format_sig(f64::NAN), "NaN");
        for x in [0.1234567890123456, -3.3e-17, 123456.7890123456] {
            let back: f64 = format_sig(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 1e-11);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = SweepConfig::new(Mode::Ed, vec![14], "x.csv");
        assert!(matches!(cfg.validate(), Err(SweepError::CapExceeded { n: 14, cap: 12 })));
        cfg.sizes = vec![7];
        assert!(matches!(cfg.validate(), Err(SweepError::InvalidConfig(_))));
        cfg.sizes = vec![8];
        cfg.delta = 0.0;
        assert!(cfg.validate().is_err());
        cfg.delta = 0.001;
        cfg.workers = 0;
        assert!(cfg.validate().is_err());
        cfg.workers = 2;
        assert!(cfg.validate().is_ok());
    }
}
