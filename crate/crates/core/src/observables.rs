//! Fidelity, fidelity susceptibility, two-site entanglement entropy and peak
//! location.

use faer::{Mat, Side};
use thiserror::Error;

use crate::ed::{ed_overlap, ed_pair_rdm, EdError, EdGroundState};
use crate::mps::{inner_product, Mps, MpsError};

/// Eigenvalues of a density matrix down to this value are treated as
/// roundoff and clamped to zero.
pub const NEGATIVE_EIGENVALUE_SLACK: f64 = 1e-12;
/// Eigenvalues below this contribute nothing to the entropy.
pub const ENTROPY_CUTOFF: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum ObservableError {
    #[error("states describe different systems")]
    Mismatch,
    #[error("chain length {0} must be even")]
    OddLength(usize),
    #[error("delta must be positive and finite, got {0}")]
    InvalidDelta(f64),
    #[error("fidelity {0} outside [0, 1]")]
    InvalidFidelity(f64),
    #[error("density matrix has eigenvalue {0}")]
    NotPositive(f64),
    #[error("density matrix is not square")]
    NotSquare,
    #[error("need at least 3 points with matching lengths, got {xs} and {ys}")]
    TooFewPoints { xs: usize, ys: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Ed(#[from] EdError),
    #[error(transparent)]
    Mps(#[from] MpsError),
    #[error("eigendecomposition failed")]
    Eigen,
}

/// A pure state on which the probes can be evaluated.
pub trait QuantumState {
    fn n_sites(&self) -> usize;
    /// `|<self|other>|` for normalized states.
    fn overlap(&self, other: &Self) -> Result<f64, ObservableError>;
    /// 9×9 reduced density matrix of sites `(site, site + 1)`, 0-based.
    fn pair_rdm(&self, site: usize) -> Result<Mat<f64>, ObservableError>;
}

impl QuantumState for Mps {
    fn n_sites(&self) -> usize {
        self.n()
    }

    fn overlap(&self, other: &Self) -> Result<f64, ObservableError> {
        if self.n() != other.n() {
            return Err(ObservableError::Mismatch);
        }
        let ab = inner_product(self, other)?;
        let aa = inner_product(self, self)?;
        let bb = inner_product(other, other)?;
        Ok(ab.abs() / (aa * bb).sqrt())
    }

    fn pair_rdm(&self, site: usize) -> Result<Mat<f64>, ObservableError> {
        Ok(Mps::pair_rdm(self, site)?)
    }
}

impl QuantumState for EdGroundState {
    fn n_sites(&self) -> usize {
        self.n()
    }

    fn overlap(&self, other: &Self) -> Result<f64, ObservableError> {
        ed_overlap(self, other).map_err(|e| match e {
            EdError::BasisMismatch => ObservableError::Mismatch,
            e => e.into(),
        })
    }

    fn pair_rdm(&self, site: usize) -> Result<Mat<f64>, ObservableError> {
        Ok(ed_pair_rdm(self, site)?)
    }
}

/// Ground-state fidelity `|<a|b>|`.
pub fn fidelity<S: QuantumState>(a: &S, b: &S) -> Result<f64, ObservableError> {
    if a.n_sites() != b.n_sites() {
        return Err(ObservableError::Mismatch);
    }
    a.overlap(b)
}

/// Fidelity susceptibility per site `2 (1 - F) / (N δ²)`.
///
/// Fidelities above 1 by less than `1e-12` are rounded to 1.
pub fn fidelity_susceptibility(f: f64, delta: f64, n: usize) -> Result<f64, ObservableError> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(ObservableError::InvalidDelta(delta));
    }
    if !(0.0..=1.0 + 1e-12).contains(&f) {
        return Err(ObservableError::InvalidFidelity(f));
    }
    if n == 0 {
        return Err(ObservableError::Mismatch);
    }
    let f = f.min(1.0);
    Ok(2.0 * (1.0 - f) / (n as f64 * delta * delta))
}

/// Von Neumann entropy `-Tr ρ log₂ ρ` of a density matrix.
pub fn entropy_from_rdm(rho: &Mat<f64>) -> Result<f64, ObservableError> {
    if rho.nrows() != rho.ncols() {
        return Err(ObservableError::NotSquare);
    }
    let eig = rho
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| ObservableError::Eigen)?;
    let mut s = 0.0;
    for lambda in eig {
        if lambda < -NEGATIVE_EIGENVALUE_SLACK || !lambda.is_finite() {
            return Err(ObservableError::NotPositive(lambda));
        }
        if lambda >= ENTROPY_CUTOFF {
            s -= lambda * lambda.log2();
        }
    }
    Ok(s)
}

/// Entropy of the two central sites `(N/2, N/2 + 1)` in 1-based labels.
pub fn central_pair_entropy<S: QuantumState>(psi: &S) -> Result<f64, ObservableError> {
    let n = psi.n_sites();
    if n % 2 != 0 || n < 2 {
        return Err(ObservableError::OddLength(n));
    }
    entropy_from_rdm(&psi.pair_rdm(n / 2 - 1)?)
}

/// Entropy of a single site, from the neighbouring pair density matrix.
pub fn site_entropy<S: QuantumState>(psi: &S, site: usize) -> Result<f64, ObservableError> {
    let n = psi.n_sites();
    let (pair, keep_first) = if site + 1 < n {
        (psi.pair_rdm(site)?, true)
    } else if site > 0 && site < n {
        (psi.pair_rdm(site - 1)?, false)
    } else {
        return Err(MpsError::SiteOutOfRange(site, n).into());
    };
    let rho = Mat::from_fn(3, 3, |i, j| {
        (0..3)
            .map(|k| {
                if keep_first {
                    pair[(3 * i + k, 3 * j + k)]
                } else {
                    pair[(3 * k + i, 3 * k + j)]
                }
            })
            .sum()
    });
    entropy_from_rdm(&rho)
}

/// Central difference `(E₊ - E₋) / 2δ`.
pub fn entropy_derivative(e_minus: f64, e_plus: f64, delta: f64) -> Result<f64, ObservableError> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(ObservableError::InvalidDelta(delta));
    }
    Ok((e_plus - e_minus) / (2.0 * delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PeakKind {
    Interior,
    /// The grid maximum sits on the first or last point.
    Edge,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub x: f64,
    pub y: f64,
    /// Index of the grid maximum.
    pub index: usize,
    pub kind: PeakKind,
}

impl Peak {
    pub fn is_interior(&self) -> bool {
        self.kind == PeakKind::Interior
    }
}

/// Grid maximum refined by the vertex of the parabola through it and its two
/// neighbours. Ties resolve to the first maximum.
pub fn find_peak(xs: &[f64], ys: &[f64]) -> Result<Peak, ObservableError> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(ObservableError::TooFewPoints {
            xs: xs.len(),
            ys: ys.len(),
        });
    }
    if let Some(i) = xs.iter().chain(ys).position(|v| !v.is_finite()) {
        return Err(ObservableError::NonFinite(i % xs.len()));
    }
    let mut k = 0;
    for i in 1..ys.len() {
        if ys[i] > ys[k] {
            k = i;
        }
    }
    if k == 0 || k == ys.len() - 1 {
        return Ok(Peak {
            x: xs[k],
            y: ys[k],
            index: k,
            kind: PeakKind::Edge,
        });
    }
    let (x0, x1, x2) = (xs[k - 1], xs[k], xs[k + 1]);
    let (y0, y1, y2) = (ys[k - 1], ys[k], ys[k + 1]);
    // Newton form: y = y0 + d1 (x - x0) + d2 (x - x0)(x - x1)
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let d2 = (d12 - d01) / (x2 - x0);
    let (x, y) = if d2 < 0.0 {
        let xv = 0.5 * (x0 + x1) - d01 / (2.0 * d2);
        let yv = y0 + d01 * (xv - x0) + d2 * (xv - x0) * (xv - x1);
        (xv, yv)
    } else {
        (x1, y1)
    };
    Ok(Peak {
        x,
        y,
        index: k,
        kind: PeakKind::Interior,
    })
}

/// [`find_peak`] applied to `-ys`, reported in the original sign.
pub fn find_valley(xs: &[f64], ys: &[f64]) -> Result<Peak, ObservableError> {
    let neg: Vec<f64> = ys.iter().map(|y| -y).collect();
    let peak = find_peak(xs, &neg)?;
    Ok(Peak { y: -peak.y, ..peak })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ed::ed_ground_state;
    use crate::model::ModelParams;
    use crate::mps::random_mps;

    #[test]
    fn fidelity_of_state_with_itself_and_sign_flip() {
        let a = random_mps(6, 4, 1);
        assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let b = random_mps(6, 4, 2);
        let f = fidelity(&a, &b).unwrap();
        assert!((f - fidelity(&b, &a).unwrap()).abs() < 1e-14);
        assert!(matches!(fidelity(&a, &random_mps(4, 2, 0)), Err(ObservableError::Mismatch)));
    }

    #[test]
    fn orthogonal_states_have_zero_fidelity() {
        let up = Mps::product_state(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let down = Mps::product_state(&[[0.0, 0.0, 1.0], [0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(fidelity(&up, &down).unwrap(), 0.0);
    }

    #[test]
    fn susceptibility_arithmetic() {
        assert_eq!(fidelity_susceptibility(1.0, 0.001, 8).unwrap(), 0.0);
        let s = fidelity_susceptibility(0.998, 0.001, 40).unwrap();
        assert!((s - 100.0).abs() < 1e-9);
        assert!(fidelity_susceptibility(1.0, 0.0, 8).is_err());
        assert!(fidelity_susceptibility(1.1, 0.001, 8).is_err());
        assert!(fidelity_susceptibility(-0.1, 0.001, 8).is_err());
        assert_eq!(fidelity_susceptibility(1.0 + 1e-15, 0.001, 8).unwrap(), 0.0);
    }

    #[test]
    fn entropy_of_pure_and_mixed_states() {
        let pure = Mps::product_state(&[[0.6, 0.8, 0.0]; 4]).unwrap();
        assert!(central_pair_entropy(&pure).unwrap().abs() < 1e-12);
        let mixed = Mat::<f64>::identity(9, 9) * faer::Scale(1.0 / 9.0);
        let s = entropy_from_rdm(&mixed).unwrap();
        assert!((s - 2.0 * 3f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn entropy_clamps_roundoff_and_rejects_negative() {
        let mut rho = Mat::<f64>::zeros(3, 3);
        rho[(0, 0)] = 1.0;
        rho[(1, 1)] = -5e-13;
        assert!(entropy_from_rdm(&rho).unwrap().abs() < 1e-12);
        rho[(1, 1)] = -1e-6;
        assert!(matches!(entropy_from_rdm(&rho), Err(ObservableError::NotPositive(_))));
        let half = Mat::from_fn(2, 2, |i, j| if i == j { 0.5 } else { 0.0 });
        assert!((entropy_from_rdm(&half).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn odd_chain_has_no_central_pair() {
        let psi = random_mps(5, 2, 0);
        assert!(matches!(central_pair_entropy(&psi), Err(ObservableError::OddLength(5))));
    }

    #[test]
    fn singlet_site_entropy() {
        let params = ModelParams::new(2, 1.0).unwrap();
        let gs = ed_ground_state(&params, 0, 1e-12).unwrap();
        for site in 0..2 {
            assert!((site_entropy(&gs, site).unwrap() - 3f64.log2()).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_arithmetic() {
        assert_eq!(entropy_derivative(0.3, 0.3, 0.001).unwrap(), 0.0);
        let d = entropy_derivative(0.849, 0.851, 0.001).unwrap();
        assert!((d - 1.0).abs() < 1e-10);
        assert!(entropy_derivative(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn parabola_vertex_is_exact() {
        let xs: Vec<f64> = (0..21).map(|i| 0.8 + 0.01 * i as f64 + 0.003 * (i % 2) as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 7.0 * (x - 0.85) * (x - 0.85)).collect();
        let peak = find_peak(&xs, &ys).unwrap();
        assert!(peak.is_interior());
        assert!((peak.x - 0.85).abs() < 1e-12);
        assert!((peak.y - 2.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_data_reports_edge() {
        let xs = [0.1, 0.2, 0.3, 0.4];
        let peak = find_peak(&xs, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(peak.kind, PeakKind::Edge);
        assert_eq!(peak.x, 0.4);
        let valley = find_valley(&xs, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((valley.kind, valley.x, valley.y), (PeakKind::Edge, 0.1, 1.0));
        assert!(find_peak(&xs[..2], &[1.0, 2.0]).is_err());
        assert!(matches!(find_peak(&xs, &[1.0, f64::NAN, 0.0, 0.0]), Err(ObservableError::NonFinite(1))));
    }
}
