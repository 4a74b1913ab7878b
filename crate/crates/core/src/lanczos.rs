//! Lowest eigenpair of a real symmetric operator by Lanczos iteration with
//! full reorthogonalization and optional restarts from the Ritz vector.
//!
//! The operator is only seen through a matrix-vector closure, so the same
//! routine drives the sector-restricted exact diagonalization and the two-site
//! effective problems inside DMRG.

/// Stopping rules for [`lowest_eigenpair`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanczosOptions {
    /// Bound on the Ritz residual norm `‖A x - θ x‖`.
    pub tol: f64,
    /// Maximum number of operator applications.
    pub max_iter: usize,
    /// Krylov basis size before restarting from the current Ritz vector.
    pub max_basis: usize,
    /// Recompute the residual explicitly before declaring convergence.
    pub explicit_residual: bool,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 500,
            max_basis: 500,
            explicit_residual: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<f64>,
    /// Residual norm of the returned pair (explicit when requested, otherwise
    /// the Lanczos estimate).
    pub residual: f64,
    pub matvecs: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x {
        *xi *= alpha;
    }
}

/// Classical Gram-Schmidt against the stored basis, repeated once more when
/// the first pass cancels most of the vector.
fn reorthogonalize(basis: &[Vec<f64>], w: &mut [f64]) {
    let before = norm(w);
    for v in basis {
        let c = dot(v, w);
        axpy(-c, v, w);
    }
    if norm(w) < 0.7 * before {
        for v in basis {
            let c = dot(v, w);
            axpy(-c, v, w);
        }
    }
}

/// Lowest eigenpair of `A` starting from `start`.
///
/// `apply(x, y)` must write `A x` into `y`. When `project` is given it is
/// applied to every new Krylov direction, which keeps the iteration inside an
/// invariant subspace of `A` (a symmetry sector) despite rounding.
pub fn lowest_eigenpair<F>(
    start: &[f64],
    opts: &LanczosOptions,
    mut apply: F,
    project: Option<&dyn Fn(&mut [f64])>,
) -> Eigenpair
where
    F: FnMut(&[f64], &mut [f64]),
{
    let dim = start.len();
    let mut x = start.to_vec();
    if let Some(proj) = project {
        proj(&mut x);
    }
    let nx = norm(&x);
    assert!(nx > 0.0, "Lanczos start vector has no weight in the target space");
    scale(1.0 / nx, &mut x);

    let max_basis = opts.max_basis.clamp(2, dim.max(2));
    let mut matvecs = 0;
    let mut w = vec![0.0; dim];

    loop {
        let mut basis: Vec<Vec<f64>> = vec![x.clone()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        apply(&basis[0], &mut w);
        matvecs += 1;
        let mut spectral_scale = norm(&w);

        loop {
            let k = basis.len() - 1;
            let a = dot(&basis[k], &w);
            alpha.push(a);
            axpy(-a, &basis[k], &mut w);
            if k > 0 {
                axpy(-beta[k - 1], &basis[k - 1], &mut w);
            }
            reorthogonalize(&basis, &mut w);
            if let Some(proj) = project {
                proj(&mut w);
                reorthogonalize(&basis, &mut w);
            }
            let b = norm(&w);

            let (theta, y) = tridiagonal_lowest(&alpha, &beta);
            let estimate = b * y[k].abs();
            let invariant = b <= 1e-14 * spectral_scale.max(1.0) || basis.len() == dim;
            let exhausted = matvecs >= opts.max_iter;
            let restart = basis.len() >= max_basis;

            if estimate <= opts.tol || invariant || exhausted || restart {
                // Ritz vector
                let mut ritz = vec![0.0; dim];
                for (coef, v) in y.iter().zip(&basis) {
                    axpy(*coef, v, &mut ritz);
                }
                let nr = norm(&ritz);
                scale(1.0 / nr, &mut ritz);
                let best = if opts.explicit_residual && (estimate <= opts.tol || invariant) {
                    let mut r = vec![0.0; dim];
                    apply(&ritz, &mut r);
                    matvecs += 1;
                    let rq = dot(&ritz, &r);
                    axpy(-rq, &ritz, &mut r);
                    let residual = norm(&r);
                    Eigenpair {
                        value: rq,
                        vector: ritz.clone(),
                        residual,
                        matvecs,
                        converged: residual <= opts.tol || invariant,
                    }
                } else {
                    Eigenpair {
                        value: theta,
                        vector: ritz.clone(),
                        residual: if invariant { 0.0 } else { estimate },
                        matvecs,
                        converged: estimate <= opts.tol || invariant,
                    }
                };
                if best.converged || matvecs >= opts.max_iter {
                    return best;
                }
                // restart from the Ritz vector
                x = ritz;
                break;
            }

            scale(1.0 / b, &mut w);
            beta.push(b);
            let next = std::mem::replace(&mut w, vec![0.0; dim]);
            basis.push(next);
            apply(basis.last().unwrap(), &mut w);
            matvecs += 1;
            spectral_scale = spectral_scale.max(norm(&w));
        }
    }
}

/// Number of eigenvalues of the symmetric tridiagonal matrix strictly below
/// `x` (Sturm sequence count).
fn sturm_count(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let tiny = f64::MIN_POSITIVE.sqrt();
    let mut count = 0;
    let mut q = alpha[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..alpha.len() {
        let denom = if q.abs() < tiny { tiny.copysign(q) } else { q };
        q = alpha[i] - x - beta[i - 1] * beta[i - 1] / denom;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Solves `(T - shift I) y = rhs` by Gaussian elimination with partial
/// pivoting; zero pivots are replaced by a tiny perturbation.
fn tridiagonal_solve(alpha: &[f64], beta: &[f64], shift: f64, rhs: &mut [f64], pivot_floor: f64) {
    let n = alpha.len();
    if n == 1 {
        let d = alpha[0] - shift;
        rhs[0] /= if d.abs() < pivot_floor { pivot_floor } else { d };
        return;
    }
    // rows held as (sub, diag, sup, sup2) after pivoting
    let mut diag: Vec<f64> = alpha.iter().map(|a| a - shift).collect();
    let mut sup: Vec<f64> = beta.to_vec();
    sup.push(0.0);
    let mut sup2 = vec![0.0; n];
    let mut sub: Vec<f64> = beta.to_vec();
    for i in 0..n - 1 {
        if sub[i].abs() > diag[i].abs() {
            // swap rows i and i+1
            std::mem::swap(&mut diag[i], &mut sub[i]);
            let (d1, s1) = (diag[i + 1], sup[i + 1]);
            diag[i + 1] = sup[i];
            sup[i] = d1;
            sup2[i] = s1;
            sup[i + 1] = 0.0;
            rhs.swap(i, i + 1);
            // now row i = (diag[i], sup[i], sup2[i]), row i+1 = (sub[i], diag[i+1], sup[i+1])
            let pivot = if diag[i].abs() < pivot_floor { pivot_floor } else { diag[i] };
            diag[i] = pivot;
            let factor = sub[i] / pivot;
            diag[i + 1] -= factor * sup[i];
            sup[i + 1] -= factor * sup2[i];
            rhs[i + 1] -= factor * rhs[i];
        } else {
            let pivot = if diag[i].abs() < pivot_floor { pivot_floor } else { diag[i] };
            diag[i] = pivot;
            let factor = sub[i] / pivot;
            diag[i + 1] -= factor * sup[i];
            rhs[i + 1] -= factor * rhs[i];
        }
    }
    if diag[n - 1].abs() < pivot_floor {
        diag[n - 1] = pivot_floor;
    }
    rhs[n - 1] /= diag[n - 1];
    rhs[n - 2] = (rhs[n - 2] - sup[n - 2] * rhs[n - 1]) / diag[n - 2];
    for i in (0..n.saturating_sub(2)).rev() {
        rhs[i] = (rhs[i] - sup[i] * rhs[i + 1] - sup2[i] * rhs[i + 2]) / diag[i];
    }
}

/// Lowest eigenvalue and unit eigenvector of the symmetric tridiagonal matrix
/// with diagonal `alpha` and off-diagonal `beta`, by bisection followed by
/// inverse iteration.
pub fn tridiagonal_lowest(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let n = alpha.len();
    assert!(n >= 1 && beta.len() + 1 == n);
    if n == 1 {
        return (alpha[0], vec![1.0]);
    }
    // Gershgorin interval
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { beta[i - 1].abs() } else { 0.0 } + if i + 1 < n { beta[i].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - r);
        hi = hi.max(alpha[i] + r);
    }
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    hi = lo + span;
    lo -= 1e-12 * span;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(alpha, beta, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);

    let pivot_floor = f64::EPSILON * span;
    let mut y = vec![1.0; n];
    for i in 0..n {
        // break symmetry deterministically
        y[i] += 1e-3 * ((i * 7919 % 104729) as f64 / 104729.0);
    }
    for _ in 0..3 {
        tridiagonal_solve(alpha, beta, lambda, &mut y, pivot_floor);
        let ny = norm(&y);
        scale(1.0 / ny, &mut y);
    }
    // Rayleigh quotient refines the eigenvalue to the vector's accuracy.
    let mut ty = vec![0.0; n];
    for i in 0..n {
        ty[i] = alpha[i] * y[i];
        if i > 0 {
            ty[i] += beta[i - 1] * y[i - 1];
        }
        if i + 1 < n {
            ty[i] += beta[i] * y[i + 1];
        }
    }
    let rq = dot(&y, &ty);
    let value = if (rq - lambda).abs() <= 1e-10 * span { rq } else { lambda };
    (value, y)
}
