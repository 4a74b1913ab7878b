//! Open-boundary matrix product states.
//!
//! Site tensors are stored row-major with indices `(left bond, physical,
//! right bond)`, so the same buffer can be read as a `(left·3) × right`
//! matrix or as a `left × (3·right)` matrix without copying.

use std::io::{self, Read, Write};

use faer::{Mat, MatRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{gemm, to_row_major, view};
use crate::model::LOCAL_DIM;

const D: usize = LOCAL_DIM;

/// Singular values below this fraction of the matrix norm are never kept.
pub const SINGULAR_VALUE_FLOOR: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum MpsError {
    #[error("bond dimensions do not match between sites {0} and {1}")]
    BondMismatch(usize, usize),
    #[error("boundary bonds must have dimension 1")]
    OpenBoundary,
    #[error("states have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("site {0} outside chain of {1} sites")]
    SiteOutOfRange(usize, usize),
    #[error("tensor data length {got} does not match shape ({left}, 3, {right})")]
    DataLength { left: usize, right: usize, got: usize },
    #[error("cannot factor an all-zero matrix")]
    ZeroMatrix,
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("empty chain")]
    Empty,
    #[error("SVD failed to converge")]
    Svd,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One rank-3 site tensor `(left, physical, right)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteTensor {
    left: usize,
    right: usize,
    data: Vec<f64>,
}

impl SiteTensor {
    pub fn new(left: usize, right: usize, data: Vec<f64>) -> Result<Self, MpsError> {
        if data.len() != left * D * right {
            return Err(MpsError::DataLength {
                left,
                right,
                got: data.len(),
            });
        }
        Ok(Self { left, right, data })
    }

    pub fn zeros(left: usize, right: usize) -> Self {
        Self {
            left,
            right,
            data: vec![0.0; left * D * right],
        }
    }

    pub fn left(&self) -> usize {
        self.left
    }

    pub fn right(&self) -> usize {
        self.right
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, l: usize, s: usize, r: usize) -> f64 {
        self.data[(l * D + s) * self.right + r]
    }

    /// `(left·3) × right` view.
    pub fn left_matrix(&self) -> MatRef<'_, f64> {
        view(&self.data, self.left * D, self.right)
    }

    /// `left × (3·right)` view.
    pub fn right_matrix(&self) -> MatRef<'_, f64> {
        view(&self.data, self.left, D * self.right)
    }

    /// Largest deviation of `A^† A` from the identity (left isometry).
    pub fn left_isometry_error(&self) -> f64 {
        let m = self.left_matrix();
        (m.transpose() * m - Mat::<f64>::identity(self.right, self.right)).norm_max()
    }

    /// Largest deviation of `B B^†` from the identity (right isometry).
    pub fn right_isometry_error(&self) -> f64 {
        let m = self.right_matrix();
        (m * m.transpose() - Mat::<f64>::identity(self.left, self.left)).norm_max()
    }
}

/// Open-boundary MPS with an optional orthogonality center.
#[derive(Debug, Clone, PartialEq)]
pub struct Mps {
    tensors: Vec<SiteTensor>,
    center: Option<usize>,
    cum_truncation: f64,
}

impl Mps {
    pub fn from_tensors(tensors: Vec<SiteTensor>) -> Result<Self, MpsError> {
        if tensors.is_empty() {
            return Err(MpsError::Empty);
        }
        if tensors[0].left != 1 || tensors.last().unwrap().right != 1 {
            return Err(MpsError::OpenBoundary);
        }
        for i in 1..tensors.len() {
            if tensors[i - 1].right != tensors[i].left {
                return Err(MpsError::BondMismatch(i - 1, i));
            }
        }
        Ok(Self {
            tensors,
            center: None,
            cum_truncation: 0.0,
        })
    }

    /// Product state from one (unnormalized) local vector per site.
    pub fn product_state(locals: &[[f64; D]]) -> Result<Self, MpsError> {
        let tensors = locals
            .iter()
            .map(|v| SiteTensor::new(1, 1, v.to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_tensors(tensors)
    }

    pub fn n(&self) -> usize {
        self.tensors.len()
    }

    pub fn tensors(&self) -> &[SiteTensor] {
        &self.tensors
    }

    pub fn tensor(&self, site: usize) -> &SiteTensor {
        &self.tensors[site]
    }

    pub(crate) fn set_tensor(&mut self, site: usize, t: SiteTensor) {
        self.tensors[site] = t;
    }

    /// Bond dimensions `[1, D_1, ..., D_{N-1}, 1]`.
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = self.tensors.iter().map(|t| t.left).collect();
        dims.push(1);
        dims
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    pub(crate) fn set_center(&mut self, center: Option<usize>) {
        self.center = center;
    }

    /// Running sum of discarded weight over all truncations applied to this
    /// state.
    pub fn cum_truncation(&self) -> f64 {
        self.cum_truncation
    }

    pub(crate) fn add_truncation(&mut self, w: f64) {
        self.cum_truncation += w;
    }

    /// Number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn norm(&self) -> f64 {
        inner_product(self, self).expect("same state").max(0.0).sqrt()
    }

    pub fn normalize(&mut self) -> Result<(), MpsError> {
        let nrm = self.norm();
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(MpsError::ZeroNorm);
        }
        let site = self.center.unwrap_or(0);
        self.tensors[site].data.iter_mut().for_each(|x| *x /= nrm);
        Ok(())
    }

    /// Applies the global spin flip `|m> -> |-m>` on every site.
    pub fn flipped(&self) -> Mps {
        let mut out = self.clone();
        for t in &mut out.tensors {
            for l in 0..t.left {
                for r in 0..t.right {
                    let i0 = (l * D) * t.right + r;
                    let i2 = (l * D + 2) * t.right + r;
                    t.data.swap(i0, i2);
                }
            }
        }
        out
    }

    /// Contracts the state into a dense `3^N` vector (site 0 most
    /// significant). Intended for small chains.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut acc = vec![1.0];
        let mut rows = 1;
        for t in &self.tensors {
            // acc: rows × t.left
            let mut next = vec![0.0; rows * D * t.right];
            gemm(&mut next, view(&acc, rows, t.left), t.right_matrix(), false);
            acc = next;
            rows *= D;
        }
        acc
    }

    /// Moves the orthogonality center to `center` in place.
    pub fn canonicalize_in_place(&mut self, center: usize) -> Result<(), MpsError> {
        let n = self.n();
        if center >= n {
            return Err(MpsError::SiteOutOfRange(center, n));
        }
        let (from_left, from_right) = match self.center {
            Some(c) => (c, c),
            None => (0, n - 1),
        };
        for site in from_left..center {
            self.left_orthonormalize(site);
        }
        for site in ((center + 1)..=from_right).rev() {
            self.right_orthonormalize(site);
        }
        self.center = Some(center);
        Ok(())
    }

    /// QR-factors site `site` into a left isometry, pushing the remainder
    /// into `site + 1`.
    fn left_orthonormalize(&mut self, site: usize) {
        let t = &self.tensors[site];
        let (left, right) = (t.left, t.right);
        let qr = t.left_matrix().qr();
        let q = qr.compute_thin_Q();
        let r = qr.thin_R();
        let k = q.ncols();
        let new_site = SiteTensor {
            left,
            right: k,
            data: to_row_major(q.as_ref()),
        };
        let next = &self.tensors[site + 1];
        let mut data = vec![0.0; k * D * next.right];
        gemm(&mut data, r, next.right_matrix(), false);
        let next_right = next.right;
        debug_assert_eq!(r.ncols(), right);
        self.tensors[site] = new_site;
        self.tensors[site + 1] = SiteTensor {
            left: k,
            right: next_right,
            data,
        };
    }

    /// LQ-factors site `site` into a right isometry, pushing the remainder
    /// into `site - 1`.
    fn right_orthonormalize(&mut self, site: usize) {
        let t = &self.tensors[site];
        let right = t.right;
        let qr = t.right_matrix().transpose().qr();
        let q = qr.compute_thin_Q(); // (3·right) × k
        let r = qr.thin_R(); // k × left
        let k = q.ncols();
        let new_site = SiteTensor {
            left: k,
            right,
            data: to_row_major(q.transpose()),
        };
        let prev = &self.tensors[site - 1];
        let mut data = vec![0.0; prev.left * D * k];
        gemm(&mut data, prev.left_matrix(), r.transpose(), false);
        let prev_left = prev.left;
        self.tensors[site] = new_site;
        self.tensors[site - 1] = SiteTensor {
            left: prev_left,
            right: k,
            data,
        };
    }

    /// Reduced density matrix of sites `(site, site + 1)` (0-based); 9×9 with
    /// row index `3 s_site + s_next`, normalized to unit trace.
    pub fn pair_rdm(&self, site: usize) -> Result<Mat<f64>, MpsError> {
        let n = self.n();
        if site + 1 >= n {
            return Err(MpsError::SiteOutOfRange(site, n));
        }
        let mut psi = self.clone();
        psi.canonicalize_in_place(site)?;
        let a = &psi.tensors[site];
        let b = &psi.tensors[site + 1];
        let (dl, dr) = (a.left, b.right);
        // theta: (dl·3) × (3·dr)
        let mut theta = vec![0.0; dl * D * D * dr];
        gemm(&mut theta, a.left_matrix(), b.right_matrix(), false);
        let d2 = D * D;
        let mut rho = Mat::<f64>::zeros(d2, d2);
        for l in 0..dl {
            let block = &theta[l * d2 * dr..(l + 1) * d2 * dr];
            let m = view(block, d2, dr);
            rho += m * m.transpose();
        }
        let trace: f64 = (0..d2).map(|i| rho[(i, i)]).sum();
        if trace <= 0.0 {
            return Err(MpsError::ZeroNorm);
        }
        Ok(rho * faer::Scale(1.0 / trace))
    }

    /// Writes the flat little-endian layout: `N` as u64, the `N + 1` bond
    /// dimensions as u64, then every site tensor in row-major
    /// `(left, physical, right)` order as f64.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), MpsError> {
        w.write_all(&(self.n() as u64).to_le_bytes())?;
        for d in self.bond_dims() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for t in &self.tensors {
            for x in &t.data {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads the layout produced by [`Mps::write_binary`]. The orthogonality
    /// center is not stored and comes back unset.
    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, MpsError> {
        let mut word = [0u8; 8];
        let mut read_u64 = |r: &mut R| -> Result<u64, MpsError> {
            r.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let n = read_u64(&mut r)? as usize;
        if n == 0 {
            return Err(MpsError::Empty);
        }
        let dims = (0..=n)
            .map(|_| read_u64(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let mut tensors = Vec::with_capacity(n);
        for site in 0..n {
            let len = dims[site] * D * dims[site + 1];
            let mut data = Vec::with_capacity(len);
            let mut buf = [0u8; 8];
            for _ in 0..len {
                r.read_exact(&mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            tensors.push(SiteTensor::new(dims[site], dims[site + 1], data)?);
        }
        Self::from_tensors(tensors)
    }
}

/// Random normalized MPS with bond dimension `min(chi0, 3^k, 3^(N-k))`,
/// reproducible from `seed`, returned in right-canonical form (center 0).
pub fn random_mps(n: usize, chi0: usize, seed: u64) -> Mps {
    assert!(n >= 1 && chi0 >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bond = |k: usize| -> usize {
        let cap = |e: usize| 3usize.checked_pow(e as u32).unwrap_or(usize::MAX);
        chi0.min(cap(k)).min(cap(n - k))
    };
    let tensors = (0..n)
        .map(|site| {
            let (left, right) = (bond(site), bond(site + 1));
            let data = (0..left * D * right)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            SiteTensor { left, right, data }
        })
        .collect();
    let mut mps = Mps {
        tensors,
        center: None,
        cum_truncation: 0.0,
    };
    mps.canonicalize_in_place(0).expect("site 0 exists");
    mps.normalize().expect("random state has nonzero norm");
    mps
}

/// Returns a copy with the orthogonality center moved to `center`.
pub fn canonicalize(psi: &Mps, center: usize) -> Result<Mps, MpsError> {
    let mut out = psi.clone();
    out.canonicalize_in_place(center)?;
    Ok(out)
}

/// `<a|b>` by left-to-right transfer-matrix contraction.
pub fn inner_product(a: &Mps, b: &Mps) -> Result<f64, MpsError> {
    if a.n() != b.n() {
        return Err(MpsError::LengthMismatch(a.n(), b.n()));
    }
    let mut env = vec![1.0];
    for (ta, tb) in a.tensors.iter().zip(&b.tensors) {
        // env: ta.left × tb.left
        let mut t = vec![0.0; ta.left * D * tb.right];
        gemm(&mut t, view(&env, ta.left, tb.left), tb.right_matrix(), false);
        let mut next = vec![0.0; ta.right * tb.right];
        gemm(
            &mut next,
            ta.left_matrix().transpose(),
            view(&t, ta.left * D, tb.right),
            false,
        );
        env = next;
    }
    Ok(env[0])
}

/// Discarded-weight bookkeeping of one truncated factorization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationReport {
    /// `Σ_discarded σ² / Σ_all σ²`
    pub discarded_weight: f64,
    /// `Σ_kept σ² / Σ_all σ²`
    pub kept_weight: f64,
    pub kept: usize,
}

/// Truncated SVD `theta ≈ U diag(σ) V^T`.
#[derive(Debug, Clone)]
pub struct SvdSplit {
    /// Row-major `rows × kept` left isometry.
    pub left: Vec<f64>,
    pub singular_values: Vec<f64>,
    /// Row-major `kept × cols` right isometry.
    pub right: Vec<f64>,
    pub report: TruncationReport,
}

/// Keeps at most `max_keep` singular values of `theta`, dropping any below
/// [`SINGULAR_VALUE_FLOOR`] relative to `‖theta‖`.
pub fn svd_truncate(theta: MatRef<'_, f64>, max_keep: usize) -> Result<SvdSplit, MpsError> {
    assert!(max_keep >= 1, "must keep at least one singular value");
    let svd = theta.thin_svd().map_err(|_| MpsError::Svd)?;
    let s = svd.S().column_vector();
    let sv: Vec<f64> = (0..s.nrows()).map(|i| s[i]).collect();
    let total: f64 = sv.iter().map(|x| x * x).sum();
    if total == 0.0 || !total.is_finite() {
        return Err(MpsError::ZeroMatrix);
    }
    let floor = SINGULAR_VALUE_FLOOR * total.sqrt();
    let kept = sv
        .iter()
        .take(max_keep)
        .take_while(|&&x| x > floor)
        .count()
        .max(1);
    let kept_sum: f64 = sv[..kept].iter().map(|x| x * x).sum();
    let discarded_sum: f64 = sv[kept..].iter().map(|x| x * x).sum();
    let u = svd.U();
    let v = svd.V();
    let left = to_row_major(u.subcols(0, kept));
    let right = to_row_major(v.subcols(0, kept).transpose());
    Ok(SvdSplit {
        left,
        singular_values: sv[..kept].to_vec(),
        right,
        report: TruncationReport {
            discarded_weight: discarded_sum / total,
            kept_weight: kept_sum / total,
            kept,
        },
    })
}
