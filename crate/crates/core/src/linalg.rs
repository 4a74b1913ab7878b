//! Row-major buffer helpers over faer kernels.

use faer::linalg::matmul::matmul;
use faer::{Accum, MatMut, MatRef, Par};

/// Row-major view of `data` as an `rows × cols` matrix.
pub(crate) fn view(data: &[f64], rows: usize, cols: usize) -> MatRef<'_, f64> {
    MatRef::from_row_major_slice(data, rows, cols)
}

pub(crate) fn view_mut(data: &mut [f64], rows: usize, cols: usize) -> MatMut<'_, f64> {
    MatMut::from_row_major_slice_mut(data, rows, cols)
}

/// `dst (+)= a · b` with `dst` a row-major `a.nrows() × b.ncols()` buffer.
pub(crate) fn gemm(dst: &mut [f64], a: MatRef<'_, f64>, b: MatRef<'_, f64>, accumulate: bool) {
    let (m, n) = (a.nrows(), b.ncols());
    debug_assert_eq!(dst.len(), m * n);
    let accum = if accumulate { Accum::Add } else { Accum::Replace };
    matmul(view_mut(dst, m, n), accum, a, b, 1.0, Par::Seq);
}

/// Row-major copy of any matrix view.
pub(crate) fn to_row_major(m: MatRef<'_, f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// `y += alpha · x`
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
