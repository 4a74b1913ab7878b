//! Two-site DMRG for the anisotropic spin-1 chain.
//!
//! The Hamiltonian is encoded as a bond-dimension-5 MPO. An optional sixth
//! channel carries the global spin flip `F`, so the solver minimizes
//! `H - (shift/2) F` and lands on the flip-even ground state even when the
//! flip-odd partner is almost degenerate. Energies are always reported as
//! `<H>` without the shift.

use std::time::Instant;

use thiserror::Error;

use crate::lanczos::{lowest_eigenpair, LanczosOptions};
use crate::linalg::{gemm, view};
use crate::model::{ModelError, ModelParams, LOCAL_DIM};
use crate::mps::{inner_product, random_mps, svd_truncate, Mps, MpsError, SiteTensor};

const D: usize = LOCAL_DIM;

#[derive(Debug, Error)]
pub enum DmrgError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mps(#[from] MpsError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("initial state has {got} sites, model has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("energy rose by {rise:e} in sweep {sweep}")]
    EnergyIncrease { sweep: usize, rise: f64 },
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DmrgConfig {
    /// Maximum kept bond dimension `m`.
    pub max_bond: usize,
    pub max_sweeps: usize,
    /// Sweeps run before the energy criterion is consulted.
    pub min_sweeps: usize,
    /// Stop when the energy changes by less than this between sweeps.
    pub energy_tol: f64,
    /// Residual bound of the local eigensolver per site of the chain; the
    /// bound actually used is relaxed while the energy is still moving or
    /// when truncation dominates the error.
    pub lanczos_tol: f64,
    pub lanczos_max_iter: usize,
    /// Krylov basis size before the local eigensolver restarts.
    pub lanczos_max_basis: usize,
    /// Energy penalty on the flip-odd sector; `0` disables it.
    pub parity_shift: f64,
    /// Bond dimension of the random starting state.
    pub init_bond: usize,
    pub seed: u64,
}

pub const DMRG_DEFAULT_SEED: u64 = 0xD3A6_2017;

impl Default for DmrgConfig {
    fn default() -> Self {
        Self {
            max_bond: 70,
            max_sweeps: 20,
            min_sweeps: 2,
            energy_tol: 1e-10,
            lanczos_tol: 1e-12,
            lanczos_max_iter: 200,
            lanczos_max_basis: 40,
            parity_shift: 1.0,
            init_bond: 10,
            seed: DMRG_DEFAULT_SEED,
        }
    }
}

impl DmrgConfig {
    /// Exactly three sweeps at `m = 70`.
    pub fn paper_protocol() -> Self {
        Self {
            max_sweeps: 3,
            min_sweeps: 3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DmrgError> {
        let bad = |msg: &str| Err(DmrgError::InvalidConfig(msg.to_string()));
        if self.max_bond == 0 {
            return bad("max_bond must be positive");
        }
        if self.max_sweeps == 0 || self.min_sweeps > self.max_sweeps {
            return bad("need 0 < min_sweeps <= max_sweeps");
        }
        if !(self.energy_tol >= 0.0) || !(self.lanczos_tol > 0.0) {
            return bad("tolerances must be non-negative");
        }
        if self.lanczos_max_iter == 0 || self.init_bond == 0 {
            return bad("lanczos_max_iter and init_bond must be positive");
        }
        if !self.parity_shift.is_finite() || self.parity_shift < 0.0 {
            return bad("parity_shift must be finite and non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmrgReport {
    /// `<H>` of the returned state.
    pub energy: f64,
    /// Lowest eigenvalue of the shifted problem at the end of each sweep.
    pub sweep_energies: Vec<f64>,
    pub sweeps_run: usize,
    pub converged: bool,
    /// Largest discarded weight of any truncation in the final sweep.
    pub max_discarded_weight: f64,
    /// Bond (index of the left site) where that weight was discarded.
    pub bond_at_max_discarded: usize,
    pub max_bond_dim: usize,
    /// `<F>` of the returned state.
    pub flip_expectation: f64,
    /// Largest local eigensolver residual in the final sweep.
    pub max_local_residual: f64,
    /// Local solves in the final sweep that hit the iteration limit.
    pub unconverged_local_solves: usize,
    /// Effective-Hamiltonian applications over all sweeps.
    pub matvecs: usize,
    pub wall_time_s: f64,
}

type Op = [[f64; D]; D];

fn spin_ops() -> (Op, Op, Op, Op, Op) {
    let s2 = 2f64.sqrt();
    let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let sp = [[0.0, s2, 0.0], [0.0, 0.0, s2], [0.0, 0.0, 0.0]];
    let sm = [[0.0, 0.0, 0.0], [s2, 0.0, 0.0], [0.0, s2, 0.0]];
    let sz = [[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, -1.0]];
    let flip = [[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]];
    (id, sp, sm, sz, flip)
}

fn scaled(op: Op, c: f64) -> Op {
    op.map(|row| row.map(|x| c * x))
}

/// Sparse `9×9` operator on two sites, as `(row, col, value)` triplets.
type PairOp = Vec<(usize, usize, f64)>;

/// Uniform MPO with bulk tensor `W[a][b]` and boundary vectors.
#[derive(Debug, Clone)]
struct Mpo {
    dw: usize,
    entries: Vec<(usize, usize, Op)>,
    left: Vec<f64>,
    right: Vec<f64>,
    /// Two-site kernels `K_ac = Σ_b W[a][b] ⊗ W[b][c]`.
    pair: Vec<(usize, usize, PairOp)>,
}

impl Mpo {
    /// Channels: 0 nothing placed, 1/2/3 after `S+`/`S-`/`Sz`, 4 complete,
    /// 5 flip string.
    fn new(p: f64, flip_coeff: f64) -> Self {
        let (id, sp, sm, sz, flip) = spin_ops();
        let mut entries = vec![
            (0, 0, id),
            (0, 1, sp),
            (0, 2, sm),
            (0, 3, sz),
            (1, 4, scaled(sm, 0.5 * p)),
            (2, 4, scaled(sp, 0.5 * p)),
            (3, 4, sz),
            (4, 4, id),
        ];
        let dw = if flip_coeff != 0.0 { 6 } else { 5 };
        let mut left = vec![0.0; dw];
        let mut right = vec![0.0; dw];
        left[0] = 1.0;
        right[4] = 1.0;
        if dw == 6 {
            entries.push((5, 5, flip));
            left[5] = flip_coeff;
            right[5] = 1.0;
        }
        let pair = pair_kernels(dw, &entries);
        Self {
            dw,
            entries,
            left,
            right,
            pair,
        }
    }
}

fn pair_kernels(dw: usize, entries: &[(usize, usize, Op)]) -> Vec<(usize, usize, PairOp)> {
    let mut out = Vec::new();
    for a in 0..dw {
        for c in 0..dw {
            let mut k = [[0.0; D * D]; D * D];
            let mut any = false;
            for (_, b1, o1) in entries.iter().filter(|e| e.0 == a) {
                for (_, _, o2) in entries.iter().filter(|e| e.0 == *b1 && e.1 == c) {
                    any = true;
                    for (i, j, k1, l) in index_quads() {
                        k[3 * i + j][3 * k1 + l] += o1[i][k1] * o2[j][l];
                    }
                }
            }
            if any {
                let trip: PairOp = (0..D * D)
                    .flat_map(|r| (0..D * D).map(move |s| (r, s)))
                    .filter(|&(r, s)| k[r][s] != 0.0)
                    .map(|(r, s)| (r, s, k[r][s]))
                    .collect();
                if !trip.is_empty() {
                    out.push((a, c, trip));
                }
            }
        }
    }
    out
}

fn index_quads() -> impl Iterator<Item = (usize, usize, usize, usize)> {
    (0..D).flat_map(|i| {
        (0..D).flat_map(move |j| (0..D).flat_map(move |k| (0..D).map(move |l| (i, j, k, l))))
    })
}

/// Stacked environment blocks. Left environments hold `L_a[bra, ket]` and
/// right environments hold `R_c[ket, bra]`, each as `dw` consecutive
/// row-major `dim × dim` blocks.
#[derive(Debug, Clone)]
struct Env {
    dim: usize,
    data: Vec<f64>,
}

impl Env {
    fn boundary(coeffs: &[f64]) -> Self {
        Self {
            dim: 1,
            data: coeffs.to_vec(),
        }
    }

    fn block(&self, a: usize) -> &[f64] {
        let s = self.dim * self.dim;
        &self.data[a * s..(a + 1) * s]
    }
}

/// Applies the one-site MPO entries to a `[x, s, y]` buffer for each input
/// channel, producing one `[x, s', y]` buffer per output channel.
fn apply_site_channels(
    mpo: &Mpo,
    input: &[f64],
    rows: usize,
    cols: usize,
    out_by_input: bool,
) -> Vec<Vec<f64>> {
    // input: dw blocks of rows × D × cols
    let block = rows * D * cols;
    let mut out = vec![vec![0.0; block]; mpo.dw];
    for &(a, b, op) in &mpo.entries {
        let (src, dst) = if out_by_input { (b, a) } else { (a, b) };
        let x = &input[src * block..(src + 1) * block];
        let y = &mut out[dst];
        for r in 0..rows {
            for sp in 0..D {
                for s in 0..D {
                    let w = op[sp][s];
                    if w == 0.0 {
                        continue;
                    }
                    let xo = (r * D + s) * cols;
                    let yo = (r * D + sp) * cols;
                    crate::linalg::axpy(w, &x[xo..xo + cols], &mut y[yo..yo + cols]);
                }
            }
        }
    }
    out
}

fn extend_left(env: &Env, a: &SiteTensor, mpo: &Mpo) -> Env {
    let (dl, dr, dw) = (a.left(), a.right(), mpo.dw);
    assert_eq!(env.dim, dl);
    // X_a = L_a · A  as [l', s, r]
    let mut x = vec![0.0; dw * dl * D * dr];
    gemm(&mut x, view(&env.data, dw * dl, dl), a.right_matrix(), false);
    let y = apply_site_channels(mpo, &x, dl, dr, false);
    let mut data = vec![0.0; dw * dr * dr];
    for (b, yb) in y.iter().enumerate() {
        gemm(
            &mut data[b * dr * dr..(b + 1) * dr * dr],
            a.left_matrix().transpose(),
            view(yb, dl * D, dr),
            false,
        );
    }
    Env { dim: dr, data }
}

fn extend_right(env: &Env, b: &SiteTensor, mpo: &Mpo) -> Env {
    let (dl, dr, dw) = (b.left(), b.right(), mpo.dw);
    assert_eq!(env.dim, dr);
    // X_c = B · Rt_c as [l, s, r']
    let mut x = vec![0.0; dw * dl * D * dr];
    for c in 0..dw {
        gemm(
            &mut x[c * dl * D * dr..(c + 1) * dl * D * dr],
            b.left_matrix(),
            view(env.block(c), dr, dr),
            false,
        );
    }
    let y = apply_site_channels(mpo, &x, dl, dr, true);
    let mut data = vec![0.0; dw * dl * dl];
    for (a, ya) in y.iter().enumerate() {
        gemm(
            &mut data[a * dl * dl..(a + 1) * dl * dl],
            view(ya, dl, D * dr),
            b.right_matrix().transpose(),
            false,
        );
    }
    Env { dim: dl, data }
}

/// Effective two-site Hamiltonian between a left and a right environment.
struct EffectiveH<'a> {
    mpo: &'a Mpo,
    left: &'a Env,
    right: &'a Env,
    t: Vec<f64>,
    u: Vec<f64>,
}

impl<'a> EffectiveH<'a> {
    fn new(mpo: &'a Mpo, left: &'a Env, right: &'a Env) -> Self {
        let len = mpo.dw * left.dim * D * D * right.dim;
        Self {
            mpo,
            left,
            right,
            t: vec![0.0; len],
            u: vec![0.0; len],
        }
    }

    fn dim(&self) -> usize {
        self.left.dim * D * D * self.right.dim
    }

    fn apply(&mut self, x: &[f64], y: &mut [f64]) {
        let (dl, dr, dw) = (self.left.dim, self.right.dim, self.mpo.dw);
        let d2 = D * D;
        gemm(
            &mut self.t,
            view(&self.left.data, dw * dl, dl),
            view(x, dl, d2 * dr),
            false,
        );
        self.u.iter_mut().for_each(|v| *v = 0.0);
        let row = dw * dr;
        for (a, c, kernel) in &self.mpo.pair {
            let ta = &self.t[a * dl * d2 * dr..(a + 1) * dl * d2 * dr];
            for l in 0..dl {
                for &(i, j, w) in kernel {
                    let src = &ta[(l * d2 + j) * dr..(l * d2 + j + 1) * dr];
                    let off = (l * d2 + i) * row + c * dr;
                    crate::linalg::axpy(w, src, &mut self.u[off..off + dr]);
                }
            }
        }
        gemm(
            y,
            view(&self.u, dl * d2, row),
            view(&self.right.data, row, dr),
            false,
        );
    }
}

struct Sweeper<'a> {
    cfg: &'a DmrgConfig,
    mpo: Mpo,
    psi: Mps,
    left: Vec<Option<Env>>,
    right: Vec<Option<Env>>,
}

#[derive(Default)]
struct SweepStats {
    energy: f64,
    max_discarded: f64,
    bond_at_max: usize,
    max_residual: f64,
    unconverged: usize,
    matvecs: usize,
}

impl SweepStats {
    fn record(&mut self, bond: usize, discarded: f64, residual: f64, converged: bool) {
        if discarded > self.max_discarded {
            self.max_discarded = discarded;
            self.bond_at_max = bond;
        }
        self.max_residual = self.max_residual.max(residual);
        if !converged {
            self.unconverged += 1;
        }
    }
}

impl<'a> Sweeper<'a> {
    fn new(cfg: &'a DmrgConfig, mpo: Mpo, mut psi: Mps) -> Result<Self, DmrgError> {
        let n = psi.n();
        psi.canonicalize_in_place(0)?;
        psi.normalize()?;
        let mut left = vec![None; n + 1];
        let mut right = vec![None; n + 1];
        left[0] = Some(Env::boundary(&mpo.left));
        right[n] = Some(Env::boundary(&mpo.right));
        for j in (2..n).rev() {
            let next = extend_right(right[j + 1].as_ref().unwrap(), psi.tensor(j), &mpo);
            right[j] = Some(next);
        }
        Ok(Self {
            cfg,
            mpo,
            psi,
            left,
            right,
        })
    }

    fn optimize_pair(
        &mut self,
        i: usize,
        moving_right: bool,
        tol: f64,
        stats: &mut SweepStats,
    ) -> Result<(), DmrgError> {
        let a = self.psi.tensor(i);
        let b = self.psi.tensor(i + 1);
        let (dl, dr) = (a.left(), b.right());
        let mut theta = vec![0.0; dl * D * D * dr];
        gemm(&mut theta, a.left_matrix(), b.right_matrix(), false);

        let left = self.left[i].as_ref().expect("left environment");
        let right = self.right[i + 2].as_ref().expect("right environment");
        let mut heff = EffectiveH::new(&self.mpo, left, right);
        debug_assert_eq!(heff.dim(), theta.len());
        let opts = LanczosOptions {
            tol,
            max_iter: self.cfg.lanczos_max_iter,
            max_basis: self.cfg.lanczos_max_basis,
            explicit_residual: true,
        };
        let pair = lowest_eigenpair(&theta, &opts, |x, y| heff.apply(x, y), None);
        stats.energy = pair.value;
        stats.matvecs += pair.matvecs;

        let split = svd_truncate(view(&pair.vector, dl * D, D * dr), self.cfg.max_bond)?;
        stats.record(i, split.report.discarded_weight, pair.residual, pair.converged);
        self.psi.add_truncation(split.report.discarded_weight);
        let k = split.report.kept;
        let norm: f64 = split.singular_values.iter().map(|s| s * s).sum::<f64>().sqrt();
        let sv: Vec<f64> = split.singular_values.iter().map(|s| s / norm).collect();

        let mut u = split.left;
        let mut vt = split.right;
        if moving_right {
            for (row, s) in vt.chunks_mut(D * dr).zip(&sv) {
                row.iter_mut().for_each(|x| *x *= s);
            }
        } else {
            for row in u.chunks_mut(k) {
                row.iter_mut().zip(&sv).for_each(|(x, s)| *x *= s);
            }
        }
        let ta = SiteTensor::new(dl, k, u)?;
        let tb = SiteTensor::new(k, dr, vt)?;
        self.psi.set_tensor(i, ta);
        self.psi.set_tensor(i + 1, tb);
        if moving_right {
            self.psi.set_center(Some(i + 1));
            let env = extend_left(self.left[i].as_ref().unwrap(), self.psi.tensor(i), &self.mpo);
            self.left[i + 1] = Some(env);
        } else {
            self.psi.set_center(Some(i));
            let env = extend_right(
                self.right[i + 2].as_ref().unwrap(),
                self.psi.tensor(i + 1),
                &self.mpo,
            );
            self.right[i + 1] = Some(env);
        }
        Ok(())
    }

    fn sweep(&mut self, tol: f64) -> Result<SweepStats, DmrgError> {
        let n = self.psi.n();
        let mut stats = SweepStats::default();
        for i in 0..n - 1 {
            self.optimize_pair(i, true, tol, &mut stats)?;
        }
        for i in (0..n - 1).rev() {
            self.optimize_pair(i, false, tol, &mut stats)?;
        }
        Ok(stats)
    }
}

/// Ground state from a seeded random start.
pub fn dmrg_ground_state(params: &ModelParams, cfg: &DmrgConfig) -> Result<(Mps, DmrgReport), DmrgError> {
    cfg.validate()?;
    let init = random_mps(params.n(), cfg.init_bond.min(cfg.max_bond), cfg.seed);
    dmrg_ground_state_from(params, cfg, &init)
}

/// Ground state starting from `init`, typically the converged state at a
/// nearby anisotropy.
pub fn dmrg_ground_state_from(
    params: &ModelParams,
    cfg: &DmrgConfig,
    init: &Mps,
) -> Result<(Mps, DmrgReport), DmrgError> {
    cfg.validate()?;
    if init.n() != params.n() {
        return Err(DmrgError::LengthMismatch {
            expected: params.n(),
            got: init.n(),
        });
    }
    let start = Instant::now();
    let mpo = Mpo::new(params.p(), -0.5 * cfg.parity_shift);
    let mut sweeper = Sweeper::new(cfg, mpo, init.clone())?;
    let mut energies: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut last = SweepStats::default();
    let mut matvecs = 0;
    let floor = cfg.lanczos_tol * params.n() as f64;
    let mut tol = LOOSE_RESIDUAL.max(floor);
    for sweep in 1..=cfg.max_sweeps {
        let stats = sweeper.sweep(tol)?;
        matvecs += stats.matvecs;
        let target = residual_target(floor, stats.max_discarded);
        let change = energies.last().map(|prev| stats.energy - prev);
        if let Some(rise) = change {
            if rise > 1e-6 {
                return Err(DmrgError::EnergyIncrease { sweep, rise });
            }
        }
        let settled = change.is_some_and(|d| d.abs() < cfg.energy_tol);
        converged = settled && sweep >= cfg.min_sweeps && tol <= 2.0 * target;
        tol = match change {
            Some(d) if !settled => (1e-2 * d.abs().sqrt()).clamp(target, target.max(LOOSE_RESIDUAL)),
            Some(_) => target,
            None => tol,
        };
        energies.push(stats.energy);
        last = stats;
        if converged {
            break;
        }
    }
    let psi = sweeper.psi;
    let energy = energy_expectation(&psi, params.p())?;
    let flip = flip_expectation(&psi)?;
    let report = DmrgReport {
        energy,
        sweeps_run: energies.len(),
        sweep_energies: energies,
        converged,
        max_discarded_weight: last.max_discarded,
        bond_at_max_discarded: last.bond_at_max,
        max_bond_dim: psi.max_bond_dim(),
        flip_expectation: flip,
        max_local_residual: last.max_residual,
        unconverged_local_solves: last.unconverged,
        matvecs,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((psi, report))
}

const LOOSE_RESIDUAL: f64 = 1e-6;

/// Local residual worth resolving given the truncation of the last sweep:
/// a discarded weight `w` already perturbs the state by about `sqrt(w)`.
fn residual_target(floor: f64, discarded: f64) -> f64 {
    (1e-2 * discarded.sqrt()).clamp(floor, floor.max(LOOSE_RESIDUAL))
}

fn mpo_expectation(psi: &Mps, mpo: &Mpo) -> Result<f64, DmrgError> {
    let mut env = Env::boundary(&mpo.left);
    for t in psi.tensors() {
        env = extend_left(&env, t, mpo);
    }
    let num: f64 = (0..mpo.dw).map(|b| env.block(b)[0] * mpo.right[b]).sum();
    let norm2 = inner_product(psi, psi)?;
    if norm2 <= 0.0 {
        return Err(MpsError::ZeroNorm.into());
    }
    Ok(num / norm2)
}

/// `<psi|H(p)|psi> / <psi|psi>`.
pub fn energy_expectation(psi: &Mps, p: f64) -> Result<f64, DmrgError> {
    mpo_expectation(psi, &Mpo::new(p, 0.0))
}

/// `<psi|F|psi> / <psi|psi>` for the global spin flip `F`.
pub fn flip_expectation(psi: &Mps) -> Result<f64, DmrgError> {
    let num = inner_product(psi, &psi.flipped())?;
    let norm2 = inner_product(psi, psi)?;
    if norm2 <= 0.0 {
        return Err(MpsError::ZeroNorm.into());
    }
    Ok(num / norm2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ed::{ed_ground_state, FlipParity};
    use crate::model::full_hamiltonian;

    fn dense_energy(psi: &Mps, p: f64) -> f64 {
        let params = ModelParams::new(psi.n(), p).unwrap();
        let h = full_hamiltonian(&params, 12).unwrap();
        let v = psi.to_dense();
        let mut hv = vec![0.0; v.len()];
        h.matvec(&v, &mut hv);
        let num: f64 = v.iter().zip(&hv).map(|(a, b)| a * b).sum();
        num / v.iter().map(|a| a * a).sum::<f64>()
    }

    #[test]
    fn mpo_energy_matches_sparse_hamiltonian() {
        for (n, p) in [(2, 1.0), (4, 0.3), (6, 1.2)] {
            let psi = random_mps(n, 5, n as u64);
            let e = energy_expectation(&psi, p).unwrap();
            assert!((e - dense_energy(&psi, p)).abs() < 1e-12, "N={n} p={p}");
        }
    }

    #[test]
    fn flip_expectation_of_symmetric_product() {
        let s = 0.5f64.sqrt();
        let even = Mps::product_state(&[[s, 0.0, s], [0.0, 1.0, 0.0]]).unwrap();
        assert!((flip_expectation(&even).unwrap() - 1.0).abs() < 1e-14);
        let odd = Mps::product_state(&[[s, 0.0, -s], [0.0, 1.0, 0.0]]).unwrap();
        assert!((flip_expectation(&odd).unwrap() + 1.0).abs() < 1e-14);
    }

    #[test]
    fn effective_hamiltonian_is_consistent_with_global_energy() {
        let p = 0.7;
        let cfg = DmrgConfig::default();
        let mpo = Mpo::new(p, 0.0);
        let psi = random_mps(6, 7, 11);
        let sweeper = Sweeper::new(&cfg, mpo.clone(), psi.clone()).unwrap();
        let i = 1;
        let mut moved = sweeper.psi.clone();
        moved.canonicalize_in_place(i).unwrap();
        let left = extend_left(&Env::boundary(&mpo.left), moved.tensor(0), &mpo);
        let right = sweeper.right[i + 2].as_ref().unwrap();
        let (ta, tb) = (moved.tensor(i), moved.tensor(i + 1));
        let mut theta = vec![0.0; ta.left() * 9 * tb.right()];
        gemm(&mut theta, ta.left_matrix(), tb.right_matrix(), false);
        let mut heff = EffectiveH::new(&mpo, &left, right);
        let mut y = vec![0.0; theta.len()];
        heff.apply(&theta, &mut y);
        let num: f64 = theta.iter().zip(&y).map(|(a, b)| a * b).sum();
        let den: f64 = theta.iter().map(|a| a * a).sum();
        assert!((num / den - dense_energy(&psi, p)).abs() < 1e-11);

        // Symmetry of H_eff.
        let probe: Vec<f64> = (0..theta.len()).map(|k| ((k * 7919) % 13) as f64 - 6.0).collect();
        let mut hp = vec![0.0; theta.len()];
        heff.apply(&probe, &mut hp);
        let lhs: f64 = theta.iter().zip(&hp).map(|(a, b)| a * b).sum();
        let rhs: f64 = probe.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn two_site_chain_is_exact() {
        let params = ModelParams::new(2, 1.0).unwrap();
        let (psi, report) = dmrg_ground_state(&params, &DmrgConfig::default()).unwrap();
        assert!((report.energy + 2.0).abs() < 1e-12);
        assert!((psi.norm() - 1.0).abs() < 1e-12);
        assert!((report.flip_expectation - 1.0).abs() < 1e-10);
    }

    #[test]
    fn matches_exact_diagonalization_at_eight_sites() {
        for p in [0.2, 0.85, 1.1] {
            let params = ModelParams::new(8, p).unwrap();
            let (psi, report) = dmrg_ground_state(&params, &DmrgConfig::default()).unwrap();
            let ed = ed_ground_state(&params, 0, 1e-12).unwrap();
            assert_eq!(ed.parity, Some(FlipParity::Even));
            assert!((report.energy - ed.energy).abs() < 1e-9, "p={p}: {} vs {}", report.energy, ed.energy);
            assert!(report.converged);
            let dense = psi.to_dense();
            let overlap: f64 = dense.iter().zip(ed.to_dense()).map(|(a, b)| a * b).sum();
            assert!((overlap.abs() - 1.0).abs() < 1e-9, "p={p}: overlap {overlap}");
        }
    }

    #[test]
    fn variational_bound_holds_without_penalty() {
        let params = ModelParams::new(8, 0.5).unwrap();
        let ed = ed_ground_state(&params, 0, 1e-12).unwrap();
        let cfg = DmrgConfig {
            max_bond: 4,
            parity_shift: 0.0,
            ..DmrgConfig::default()
        };
        let (_, report) = dmrg_ground_state(&params, &cfg).unwrap();
        assert!(report.energy >= ed.energy - 1e-12);
        assert!(report.max_bond_dim <= 4);
    }

    #[test]
    fn warm_start_agrees_with_cold_start() {
        let cfg = DmrgConfig::default();
        let a = ModelParams::new(12, 0.9).unwrap();
        let b = ModelParams::new(12, 0.91).unwrap();
        let (psi_a, _) = dmrg_ground_state(&a, &cfg).unwrap();
        let (_, warm) = dmrg_ground_state_from(&b, &cfg, &psi_a).unwrap();
        let (_, cold) = dmrg_ground_state(&b, &cfg).unwrap();
        assert!((warm.energy - cold.energy).abs() < 1e-9);
        assert!(warm.sweeps_run <= cold.sweeps_run);
    }

    #[test]
    fn paper_protocol_runs_three_sweeps() {
        let params = ModelParams::new(6, 1.0).unwrap();
        let (_, report) = dmrg_ground_state(&params, &DmrgConfig::paper_protocol()).unwrap();
        assert_eq!(report.sweeps_run, 3);
        assert_eq!(report.sweep_energies.len(), 3);
    }

    #[test]
    fn rejects_bad_configuration() {
        let params = ModelParams::new(4, 1.0).unwrap();
        let cfg = DmrgConfig {
            max_bond: 0,
            ..DmrgConfig::default()
        };
        assert!(matches!(dmrg_ground_state(&params, &cfg), Err(DmrgError::InvalidConfig(_))));
        let wrong = random_mps(6, 2, 0);
        assert!(matches!(
            dmrg_ground_state_from(&params, &DmrgConfig::default(), &wrong),
            Err(DmrgError::LengthMismatch { expected: 4, got: 6 })
        ));
    }
}
