//! Dense numerical kernels used by the estimators: symmetric
//! eigendecomposition, thin QR, least squares and varimax rotation.
//!
//! Decompositions are backed by nalgebra; this module fixes ordering, sign
//! conventions, rank checks and degeneracy handling on top of them.

use nalgebra::{SymmetricEigen, QR, SVD};

use crate::error::{Error, Result};
use crate::types::Mat;

/// Eigenvalues in descending order with matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

impl EigenResult {
    /// Leading `k` eigenvectors.
    pub fn leading(&self, k: usize) -> Mat {
        self.vectors.columns(0, k).into_owned()
    }

    /// Eigenvectors `k..n`, the orthogonal complement of [`Self::leading`].
    pub fn trailing(&self, k: usize) -> Mat {
        let n = self.vectors.ncols();
        self.vectors.columns(k, n - k).into_owned()
    }
}

fn check_finite(a: &Mat) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// Flips `v` so that its largest-magnitude entry is positive. Ties go to the
/// lowest index.
fn normalize_sign(mut v: nalgebra::DVectorViewMut<'_, f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Full eigendecomposition of a symmetric matrix. The input is symmetrized
/// as `(A + Aᵀ)/2` first.
pub fn sym_eig(a: &Mat) -> Result<EigenResult> {
    if a.nrows() != a.ncols() {
        return Err(Error::Shape(format!(
            "sym_eig needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    check_finite(a)?;
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);

    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps the solver's order among exact ties
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
        normalize_sign(vectors.column_mut(dst));
    }
    Ok(EigenResult { values, vectors })
}

/// Symmetric square root of a PSD matrix. Eigenvalues down to
/// `-1e-10 * |lambda_max|` are treated as zero; anything more negative is
/// reported as [`Error::NoiseNotPsd`].
pub fn sym_sqrt(a: &Mat) -> Result<Mat> {
    let eig = sym_eig(a)?;
    let scale = eig.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let min = eig.values.last().copied().unwrap_or(0.0);
    if min < -1e-10 * scale.max(1.0) {
        return Err(Error::NoiseNotPsd(min));
    }
    let roots = nalgebra::DVector::from_iterator(
        eig.values.len(),
        eig.values.iter().map(|v| v.max(0.0).sqrt()),
    );
    let scaled = &eig.vectors * Mat::from_diagonal(&roots);
    Ok(scaled * eig.vectors.transpose())
}

/// Thin QR of an `n x k` matrix (`n >= k`) with a positive `R` diagonal.
pub fn thin_qr(a: &Mat) -> Result<(Mat, Mat)> {
    let (n, k) = a.shape();
    if n < k {
        return Err(Error::Shape(format!("thin_qr needs n >= k, got {n}x{k}")));
    }
    check_finite(a)?;
    let norm = a.norm();
    let qr = QR::new(a.clone());
    let mut q = qr.q();
    let mut r = qr.r();
    for i in 0..k {
        if r[(i, i)].abs() <= 1e-12 * norm || norm == 0.0 {
            return Err(Error::RankDeficient);
        }
        if r[(i, i)] < 0.0 {
            q.column_mut(i).neg_mut();
            r.row_mut(i).neg_mut();
        }
    }
    Ok((q, r))
}

#[derive(Debug, Clone)]
pub struct LsSolution {
    pub solution: Mat,
    /// Numerical rank after truncating singular values below `1e-10 * sigma_max`.
    pub rank: usize,
    /// Set when `sigma_min / sigma_max < 1e-8`.
    pub ill_conditioned: bool,
}

/// Minimizes `||A Z - Y||_F` via a truncated SVD pseudo-inverse. For a
/// full-rank `A` this is the normal-equations solution `(AᵀA)⁻¹AᵀY`.
pub fn ls_solve(a: &Mat, y: &Mat) -> Result<LsSolution> {
    let (n, k) = a.shape();
    if n < k {
        return Err(Error::Shape(format!("ls_solve needs n >= k, got {n}x{k}")));
    }
    if y.nrows() != n {
        return Err(Error::Shape(format!(
            "ls_solve: A has {n} rows but Y has {}",
            y.nrows()
        )));
    }
    check_finite(a)?;
    check_finite(y)?;
    let svd = SVD::new(a.clone(), true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => unreachable!("both factors requested"),
    };
    let sv = &svd.singular_values;
    let smax = sv.iter().fold(0.0_f64, |acc, &s| acc.max(s));
    let smin = sv.iter().fold(f64::INFINITY, |acc, &s| acc.min(s));
    let cutoff = 1e-10 * smax;

    // Z = V diag(1/s) Uᵀ Y over the retained singular triplets
    let mut uty = u.transpose() * y;
    let mut rank = 0;
    for (i, &s) in sv.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            uty.row_mut(i).scale_mut(1.0 / s);
            rank += 1;
        } else {
            uty.row_mut(i).fill(0.0);
        }
    }
    let solution = vt.transpose() * uty;
    Ok(LsSolution {
        solution,
        rank,
        ill_conditioned: smax == 0.0 || smin / smax < 1e-8,
    })
}

/// Largest singular value.
pub fn spectral_norm(a: &Mat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().iter().fold(0.0_f64, |acc, &s| acc.max(s))
}

/// Smallest singular value (zero for an empty matrix).
pub fn min_singular_value(a: &Mat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values()
        .iter()
        .fold(f64::INFINITY, |acc, &s| acc.min(s))
}

#[derive(Debug, Clone)]
pub struct VarimaxResult {
    pub rotated: Mat,
    pub rotation: Mat,
    /// Criterion value after each accepted iterate, starting with the input.
    pub criterion: Vec<f64>,
    pub iterations: usize,
}

/// Raw varimax criterion: sum over columns of the variance of squared loadings.
pub fn varimax_criterion(l: &Mat) -> f64 {
    let n = l.nrows() as f64;
    l.column_iter()
        .map(|c| {
            let sq: f64 = c.iter().map(|v| v * v).sum::<f64>() / n;
            let quart: f64 = c.iter().map(|v| v.powi(4)).sum::<f64>() / n;
            quart - sq * sq
        })
        .sum()
}

/// Orthogonal varimax rotation (Kaiser's SVD iteration, no row
/// normalization). Iterates until the criterion gain drops below `tol` or
/// `max_iter` is reached; an iterate that would lower the criterion is
/// rejected.
pub fn varimax(l: &Mat, max_iter: usize, tol: f64) -> VarimaxResult {
    let (n, k) = l.shape();
    let mut rotation = Mat::identity(k, k);
    let mut current = varimax_criterion(l);
    let mut history = vec![current];
    if k < 2 || n == 0 {
        return VarimaxResult {
            rotated: l.clone(),
            rotation,
            criterion: history,
            iterations: 0,
        };
    }

    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let lam = l * &rotation;
        let mut target = lam.map(|v| v * v * v);
        for j in 0..k {
            let mean_sq = lam.column(j).norm_squared() / n as f64;
            let col = lam.column(j) * mean_sq;
            let mut dst = target.column_mut(j);
            dst -= col;
        }
        let b = l.transpose() * target;
        let svd = SVD::new(b, true, true);
        let candidate = match (svd.u, svd.v_t) {
            (Some(u), Some(vt)) => u * vt,
            _ => break,
        };
        let value = varimax_criterion(&(l * &candidate));
        if value < current {
            break;
        }
        let gain = value - current;
        rotation = candidate;
        current = value;
        history.push(value);
        if gain < tol {
            break;
        }
    }
    VarimaxResult {
        rotated: l * &rotation,
        rotation,
        criterion: history,
        iterations,
    }
}
