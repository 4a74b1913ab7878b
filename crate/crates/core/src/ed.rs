//! Exact diagonalization in a fixed total-`Sz` sector.
//!
//! This is the independent truth source for small chains. The sector
//! Hamiltonian is built explicitly as a sparse matrix and its lowest state is
//! found by Lanczos with full reorthogonalization.
//!
//! In the `Sz = 0` sector the global spin flip `|m> -> |-m>` commutes with the
//! Hamiltonian. Both flip-parity subsectors are solved separately and the lower
//! one is kept, with exact ties resolved to the even subsector. This makes the
//! answer unique even when the two lowest sector states are split only by an
//! exponentially small tunneling energy (the Néel regime at small `p`).

use std::sync::Arc;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::lanczos::{lowest_eigenpair, LanczosOptions};
use crate::model::{
    code_digits, digits_code, for_each_hamiltonian_element, ModelParams, SparseMatrix,
    DEFAULT_ED_CAP, LOCAL_DIM, LOCAL_M,
};

/// Seed of the deterministic Lanczos start vector.
pub const ED_DEFAULT_SEED: u64 = 0x5EED_0ED0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EdError {
    #[error("chain length {n} exceeds the exact-diagonalization cap {cap}")]
    CapExceeded { n: usize, cap: usize },
    #[error("magnetization {sz_total} impossible for {n} spin-1 sites")]
    EmptySector { n: usize, sz_total: i32 },
    #[error("Lanczos did not converge: residual {residual:.3e} after {matvecs} iterations")]
    NotConverged { residual: f64, matvecs: usize },
    #[error("states live in different sectors")]
    BasisMismatch,
    #[error("site pair ({0}, {0}+1) outside the chain of {1} sites")]
    SiteOutOfRange(usize, usize),
}

/// Ordered enumeration of all configurations with a given total magnetization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectorBasis {
    n: usize,
    sz_total: i32,
    states: Vec<u64>,
}

impl SectorBasis {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sz_total(&self) -> i32 {
        self.sz_total
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Base-3 codes in strictly increasing order.
    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn index_of(&self, code: u64) -> Option<usize> {
        self.states.binary_search(&code).ok()
    }

    /// Position of the spin-flipped partner of every state. Only defined for
    /// the `Sz = 0` sector, which the flip maps onto itself.
    fn flip_partners(&self) -> Vec<usize> {
        let n = self.n;
        self.states
            .iter()
            .map(|&code| {
                let flipped: Vec<u8> = code_digits(code as usize, n).iter().map(|d| 2 - d).collect();
                self.index_of(digits_code(&flipped) as u64)
                    .expect("flip maps the Sz = 0 sector onto itself")
            })
            .collect()
    }
}

pub fn build_sector_basis(n: usize, sz_total: i32, cap: usize) -> Result<SectorBasis, EdError> {
    if n > cap {
        return Err(EdError::CapExceeded { n, cap });
    }
    if sz_total.unsigned_abs() as usize > n {
        return Err(EdError::EmptySector { n, sz_total });
    }
    fn descend(site: usize, n: usize, remaining: i32, code: u64, out: &mut Vec<u64>) {
        if site == n {
            if remaining == 0 {
                out.push(code);
            }
            return;
        }
        let left_after = (n - site - 1) as i32;
        // digits in increasing order keep the output sorted
        for (digit, &m) in LOCAL_M.iter().enumerate() {
            let rest = remaining - m;
            if rest.abs() <= left_after {
                descend(site + 1, n, rest, code * 3 + digit as u64, out);
            }
        }
    }
    let mut states = Vec::new();
    descend(0, n, sz_total, 0, &mut states);
    Ok(SectorBasis { n, sz_total, states })
}

/// Hamiltonian restricted to a magnetization sector.
pub fn sector_hamiltonian(params: &ModelParams, basis: &SectorBasis) -> SparseMatrix {
    let n = basis.n();
    let mut scratch = Vec::with_capacity(n);
    let rows = basis
        .states()
        .iter()
        .map(|&code| {
            let digits = code_digits(code as usize, n);
            let mut row = Vec::with_capacity(2 * n);
            for_each_hamiltonian_element(&digits, params.p(), &mut scratch, |target, v| {
                let col = basis
                    .index_of(digits_code(target) as u64)
                    .expect("Hamiltonian conserves total Sz");
                row.push((col, v));
            });
            row
        })
        .collect();
    SparseMatrix::from_rows(rows)
}

/// Eigenvalue of the global spin flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FlipParity {
    Even,
    Odd,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EdConfig {
    /// Residual bound `‖Hv - Ev‖`.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub cap: usize,
}

impl Default for EdConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 500,
            seed: ED_DEFAULT_SEED,
            cap: DEFAULT_ED_CAP,
        }
    }
}

/// Lowest state of one sector.
#[derive(Debug, Clone)]
pub struct EdGroundState {
    pub energy: f64,
    /// Unit-norm amplitudes over [`EdGroundState::basis`]; the entry of
    /// largest magnitude is positive.
    pub amplitudes: Vec<f64>,
    pub residual: f64,
    /// Spin-flip parity when the sector is `Sz = 0`.
    pub parity: Option<FlipParity>,
    basis: Arc<SectorBasis>,
}

impl EdGroundState {
    pub fn basis(&self) -> &SectorBasis {
        &self.basis
    }

    pub fn n(&self) -> usize {
        self.basis.n()
    }

    /// Amplitudes embedded in the full `3^N` product basis.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut full = vec![0.0; 3usize.pow(self.n() as u32)];
        for (&code, &a) in self.basis.states().iter().zip(&self.amplitudes) {
            full[code as usize] = a;
        }
        full
    }
}

fn start_vector(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn fix_sign(v: &mut [f64]) {
    let mut pivot = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[pivot].abs() {
            pivot = i;
        }
    }
    if v[pivot] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub fn ed_ground_state(
    params: &ModelParams,
    sz_total: i32,
    tol: f64,
) -> Result<EdGroundState, EdError> {
    ed_ground_state_with(params, sz_total, &EdConfig { tol, ..EdConfig::default() })
}

pub fn ed_ground_state_with(
    params: &ModelParams,
    sz_total: i32,
    cfg: &EdConfig,
) -> Result<EdGroundState, EdError> {
    let basis = Arc::new(build_sector_basis(params.n(), sz_total, cfg.cap)?);
    let h = sector_hamiltonian(params, &basis);
    let opts = LanczosOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        max_basis: cfg.max_iter,
        explicit_residual: true,
    };
    let start = start_vector(basis.len(), cfg.seed);
    let apply = |x: &[f64], y: &mut [f64]| h.matvec(x, y);

    let solve = |parity: Option<FlipParity>| {
        let partners = parity.map(|_| basis.flip_partners());
        let project = partners.as_ref().map(|partner| {
            let sign = if parity == Some(FlipParity::Even) { 1.0 } else { -1.0 };
            move |v: &mut [f64]| {
                let orig = v.to_vec();
                for (i, x) in v.iter_mut().enumerate() {
                    *x = 0.5 * (orig[i] + sign * orig[partner[i]]);
                }
            }
        });
        let proj_ref: Option<&dyn Fn(&mut [f64])> =
            project.as_ref().map(|f| f as &dyn Fn(&mut [f64]));
        let pair = lowest_eigenpair(&start, &opts, apply, proj_ref);
        if !pair.converged {
            return Err(EdError::NotConverged {
                residual: pair.residual,
                matvecs: pair.matvecs,
            });
        }
        Ok(pair)
    };

    let (pair, parity) = if sz_total == 0 && basis.len() > 1 {
        let even = solve(Some(FlipParity::Even))?;
        let odd = solve(Some(FlipParity::Odd))?;
        let scale = even.value.abs().max(1.0);
        if odd.value < even.value - 1e-12 * scale {
            (odd, Some(FlipParity::Odd))
        } else {
            (even, Some(FlipParity::Even))
        }
    } else if basis.len() == 1 {
        let mut y = [0.0];
        h.matvec(&[1.0], &mut y);
        let pair = crate::lanczos::Eigenpair {
            value: y[0],
            vector: vec![1.0],
            residual: 0.0,
            matvecs: 1,
            converged: true,
        };
        let parity = (sz_total == 0).then_some(FlipParity::Even);
        (pair, parity)
    } else {
        (solve(None)?, None)
    };

    let mut amplitudes = pair.vector;
    fix_sign(&mut amplitudes);
    Ok(EdGroundState {
        energy: pair.value,
        amplitudes,
        residual: pair.residual,
        parity,
        basis,
    })
}

/// `|<a|b>|` for two states of the same sector.
pub fn ed_overlap(a: &EdGroundState, b: &EdGroundState) -> Result<f64, EdError> {
    if a.basis.n() != b.basis.n() || a.basis.sz_total() != b.basis.sz_total() {
        return Err(EdError::BasisMismatch);
    }
    let s: f64 = a.amplitudes.iter().zip(&b.amplitudes).map(|(x, y)| x * y).sum();
    Ok(s.abs())
}

/// Reduced density matrix of sites `(site, site + 1)` (0-based), 9×9 with row
/// index `3 s_site + s_next`.
pub fn ed_pair_rdm(state: &EdGroundState, site: usize) -> Result<Mat<f64>, EdError> {
    let n = state.n();
    if site + 1 >= n {
        return Err(EdError::SiteOutOfRange(site, n));
    }
    let psi = state.to_dense();
    let left = 3usize.pow(site as u32);
    let right = 3usize.pow((n - site - 2) as u32);
    let d2 = LOCAL_DIM * LOCAL_DIM;
    let mut rho = Mat::<f64>::zeros(d2, d2);
    for l in 0..left {
        for r in 0..right {
            let amp = |s: usize| psi[(l * d2 + s) * right + r];
            for s in 0..d2 {
                let a = amp(s);
                if a == 0.0 {
                    continue;
                }
                for t in 0..d2 {
                    rho[(s, t)] += a * amp(t);
                }
            }
        }
    }
    Ok(rho)
}

/// Reduced density matrices of the blocks `[0, cut)` and `[cut, N)`.
pub fn ed_block_density_matrices(
    state: &EdGroundState,
    cut: usize,
) -> Result<(Mat<f64>, Mat<f64>), EdError> {
    let n = state.n();
    if cut == 0 || cut >= n {
        return Err(EdError::SiteOutOfRange(cut, n));
    }
    let psi = state.to_dense();
    let rows = 3usize.pow(cut as u32);
    let cols = 3usize.pow((n - cut) as u32);
    let m = faer::MatRef::from_row_major_slice(&psi, rows, cols);
    Ok((m * m.transpose(), m.transpose() * m))
}
