//! Spin-1 operator algebra and the anisotropic Heisenberg Hamiltonian
//!
//! ```text
//! H = J Σ_{i=1}^{N-1} [ p (Sx_i Sx_{i+1} + Sy_i Sy_{i+1}) + Sz_i Sz_{i+1} ],   p = 1/Δ
//! ```
//!
//! with open boundaries and `J = 1`. The XY part is written with ladder
//! operators, `SxSx + SySy = (S+S- + S-S+)/2`, so every matrix stays real.
//!
//! The local basis is ordered `(m = +1, m = 0, m = -1)`. Many-site basis
//! states are base-3 codes with site 0 as the most significant digit and digit
//! `d` standing for `m = 1 - d`; this matches `kron(site_0, site_1, ...)`.

use faer::Mat;
use thiserror::Error;

/// Dimension of the local spin-1 Hilbert space.
pub const LOCAL_DIM: usize = 3;

/// Largest chain handled by the full-matrix and exact-diagonalization paths.
pub const DEFAULT_ED_CAP: usize = 12;

/// Magnetic quantum number of each local basis index.
pub const LOCAL_M: [i32; LOCAL_DIM] = [1, 0, -1];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("chain length must be even and at least 2, got {0}")]
    InvalidLength(usize),
    #[error("anisotropy p must be finite, got {0}")]
    NonFiniteAnisotropy(f64),
    #[error("chain length {n} exceeds the exact-diagonalization cap {cap}")]
    CapExceeded { n: usize, cap: usize },
}

/// Parameters of an open spin-1 chain.
///
/// The coupling is fixed to `J = 1` and the boundary is open; neither can be
/// changed. `N` is even so the central pair `(N/2, N/2 + 1)` exists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    n: usize,
    p: f64,
}

impl ModelParams {
    pub fn new(n: usize, p: f64) -> Result<Self, ModelError> {
        if n < 2 || n % 2 != 0 {
            return Err(ModelError::InvalidLength(n));
        }
        if !p.is_finite() {
            return Err(ModelError::NonFiniteAnisotropy(p));
        }
        Ok(Self { n, p })
    }

    /// Builds parameters from the original anisotropy `Δ` via `p = 1/Δ`.
    pub fn from_delta(n: usize, delta: f64) -> Result<Self, ModelError> {
        Self::new(n, 1.0 / delta)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn coupling(&self) -> f64 {
        1.0
    }

    pub fn with_p(&self, p: f64) -> Result<Self, ModelError> {
        Self::new(self.n, p)
    }

    /// Left site (0-based) of the central pair.
    pub fn central_site(&self) -> usize {
        self.n / 2 - 1
    }
}

/// Single-site spin-1 operators in the `(+1, 0, -1)` basis.
#[derive(Debug, Clone)]
pub struct LocalOps {
    pub s_plus: Mat<f64>,
    pub s_minus: Mat<f64>,
    pub s_z: Mat<f64>,
    pub id: Mat<f64>,
}

/// `<m+1|S+|m> = sqrt(2 - m(m+1))` for spin 1.
pub fn raise_amplitude(m: i32) -> f64 {
    ((2 - m * (m + 1)) as f64).sqrt()
}

/// `<m-1|S-|m> = sqrt(2 - m(m-1))` for spin 1.
pub fn lower_amplitude(m: i32) -> f64 {
    ((2 - m * (m - 1)) as f64).sqrt()
}

pub fn spin1_operators() -> LocalOps {
    let mut s_plus = Mat::<f64>::zeros(LOCAL_DIM, LOCAL_DIM);
    let mut s_z = Mat::<f64>::zeros(LOCAL_DIM, LOCAL_DIM);
    for (col, &m) in LOCAL_M.iter().enumerate() {
        s_z[(col, col)] = m as f64;
        if m < 1 {
            // index col - 1 carries m + 1
            s_plus[(col - 1, col)] = raise_amplitude(m);
        }
    }
    let s_minus = s_plus.transpose().to_owned();
    LocalOps {
        s_plus,
        s_minus,
        s_z,
        id: Mat::identity(LOCAL_DIM, LOCAL_DIM),
    }
}

/// Kronecker product of two dense matrices.
pub fn kron(a: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
    let (ar, ac) = (a.nrows(), a.ncols());
    let (br, bc) = (b.nrows(), b.ncols());
    Mat::from_fn(ar * br, ac * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

/// Two-site coupling `h(p) = (p/2)(S+⊗S- + S-⊗S+) + Sz⊗Sz` (9×9, row index
/// `3 s_left + s_right`).
pub fn bond_hamiltonian(p: f64) -> Mat<f64> {
    let ops = spin1_operators();
    let pm = kron(&ops.s_plus, &ops.s_minus);
    let mp = kron(&ops.s_minus, &ops.s_plus);
    let zz = kron(&ops.s_z, &ops.s_z);
    Mat::from_fn(9, 9, |i, j| 0.5 * p * (pm[(i, j)] + mp[(i, j)]) + zz[(i, j)])
}

/// Compressed-sparse-row real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from per-row `(col, value)` lists; duplicate columns are summed
    /// and explicit zeros dropped.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let dim = rows.len();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        let mut m = Self {
            dim,
            row_ptr,
            cols,
            values,
        };
        m.drop_zeros();
        m
    }

    fn drop_zeros(&mut self) {
        let mut row_ptr = vec![0];
        let mut cols = Vec::with_capacity(self.cols.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.values[k] != 0.0 {
                    cols.push(self.cols[k]);
                    values.push(self.values[k]);
                }
            }
            row_ptr.push(cols.len());
        }
        self.row_ptr = row_ptr;
        self.cols = cols;
        self.values = values;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate().take(self.dim) {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.cols[k]];
            }
            *out = acc;
        }
    }

    /// Exact structural and numerical symmetry.
    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|r| self.row(r).all(|(c, v)| self.get(c, r) == v))
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }
}

/// Base-3 digits of `code` for an `n`-site chain, site 0 first.
pub fn code_digits(code: usize, n: usize) -> Vec<u8> {
    let mut digits = vec![0u8; n];
    let mut rest = code;
    for d in digits.iter_mut().rev() {
        *d = (rest % 3) as u8;
        rest /= 3;
    }
    digits
}

pub fn digits_code(digits: &[u8]) -> usize {
    digits.iter().fold(0usize, |acc, &d| acc * 3 + d as usize)
}

/// Total magnetization of a configuration.
pub fn digits_magnetization(digits: &[u8]) -> i32 {
    digits.iter().map(|&d| LOCAL_M[d as usize]).sum()
}

/// Visits every nonzero matrix element `<target|H|config>` of the open chain.
///
/// `emit(target_digits, value)` is called once for the diagonal (summed over
/// bonds) and once per off-diagonal hop. `scratch` must have the same length as
/// `digits` and is used to build target configurations.
pub(crate) fn for_each_hamiltonian_element<F>(
    digits: &[u8],
    p: f64,
    scratch: &mut Vec<u8>,
    mut emit: F,
) where
    F: FnMut(&[u8], f64),
{
    let n = digits.len();
    let mut diag = 0.0;
    for i in 0..n.saturating_sub(1) {
        let (mi, mj) = (LOCAL_M[digits[i] as usize], LOCAL_M[digits[i + 1] as usize]);
        diag += (mi * mj) as f64;
    }
    emit(digits, diag);
    if p == 0.0 {
        return;
    }
    for i in 0..n - 1 {
        let (mi, mj) = (LOCAL_M[digits[i] as usize], LOCAL_M[digits[i + 1] as usize]);
        // S+_i S-_{i+1}
        if mi < 1 && mj > -1 {
            let amp = 0.5 * p * raise_amplitude(mi) * lower_amplitude(mj);
            scratch.clear();
            scratch.extend_from_slice(digits);
            scratch[i] -= 1;
            scratch[i + 1] += 1;
            emit(scratch, amp);
        }
        // S-_i S+_{i+1}
        if mi > -1 && mj < 1 {
            let amp = 0.5 * p * lower_amplitude(mi) * raise_amplitude(mj);
            scratch.clear();
            scratch.extend_from_slice(digits);
            scratch[i] += 1;
            scratch[i + 1] -= 1;
            emit(scratch, amp);
        }
    }
}

/// Full `3^N × 3^N` Hamiltonian with open boundaries.
pub fn full_hamiltonian(params: &ModelParams, cap: usize) -> Result<SparseMatrix, ModelError> {
    let n = params.n();
    if n > cap {
        return Err(ModelError::CapExceeded { n, cap });
    }
    let dim = 3usize.pow(n as u32);
    let mut scratch = Vec::with_capacity(n);
    let rows = (0..dim)
        .map(|code| {
            let digits = code_digits(code, n);
            let mut row = Vec::with_capacity(2 * n);
            for_each_hamiltonian_element(&digits, params.p(), &mut scratch, |target, v| {
                row.push((digits_code(target), v));
            });
            row
        })
        .collect();
    Ok(SparseMatrix::from_rows(rows))
}
