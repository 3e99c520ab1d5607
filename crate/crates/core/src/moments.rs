//! Blocked cross-moment kernels shared by the global and local statistics.
//!
//! Both statistics have the form `sum_k sum_l Pi_kl Pi_klᵀ` where each
//! `Pi_kl` is a time-averaged outer product of two vector slices of the
//! data. Stacking every time point as one row of a `T x (rows*cols)` matrix
//! turns all `Pi_kl` into blocks of a single Gram matrix `Dᵀ D' / T`, and
//! the double sum into a sum of block Gram products.

use nalgebra::DMatrixView;

use crate::types::Mat;

/// `T x (rows*cols)` matrix whose row `t` is `vec(X_t)` (column-major, entry
/// `(a, j)` at `a + j*rows`) or, with `transpose`, `vec(X_tᵀ)` (entry
/// `(a, j)` at `j + a*cols`).
pub(crate) fn stack(obs: &[Mat], transpose: bool) -> Mat {
    let t = obs.len();
    let (rows, cols) = obs.first().map_or((0, 0), |x| x.shape());
    let mut d = Mat::zeros(t, rows * cols);
    for (ti, x) in obs.iter().enumerate() {
        for j in 0..cols {
            for a in 0..rows {
                let idx = if transpose { j + a * cols } else { a + j * rows };
                d[(ti, idx)] = x[(a, j)];
            }
        }
    }
    d
}

/// `alpha * Aᵀ B` for two views with the same number of rows.
pub(crate) fn at_b(a: &DMatrixView<'_, f64>, b: &DMatrixView<'_, f64>, alpha: f64) -> Mat {
    assert_eq!(a.nrows(), b.nrows());
    let (k, m, n) = (a.nrows(), a.ncols(), b.ncols());
    let mut c = Mat::zeros(m, n);
    let (ars, acs) = a.strides();
    let (brs, bcs) = b.strides();
    // SAFETY: pointers and strides come from live nalgebra views whose
    // extents match the dimensions passed; `c` is a fresh m x n
    // column-major buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            acs as isize,
            ars as isize,
            b.as_ptr(),
            brs as isize,
            bcs as isize,
            0.0,
            c.as_mut_ptr(),
            1,
            m as isize,
        );
    }
    c
}

/// `sum_k G_k G_kᵀ` where `G_k` are consecutive row blocks of height `block`.
pub(crate) fn block_gram_sum(g: &Mat, block: usize) -> Mat {
    assert!(block > 0 && g.nrows().is_multiple_of(block));
    let mut out = Mat::zeros(block, block);
    for k in 0..g.nrows() / block {
        let blk = g.rows(k * block, block);
        out.gemm(1.0, &blk, &blk.transpose(), 1.0);
    }
    out
}

/// Reorders rows of `g` from `a + j*rows` to `j + a*cols` indexing.
pub(crate) fn swap_row_layout(g: &Mat, rows: usize, cols: usize) -> Mat {
    assert_eq!(g.nrows(), rows * cols);
    let mut out = Mat::zeros(g.nrows(), g.ncols());
    for j in 0..cols {
        for a in 0..rows {
            out.set_row(j + a * cols, &g.row(a + j * rows));
        }
    }
    out
}

/// Symmetrizes in place.
pub(crate) fn symmetrize(m: &mut Mat) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}
