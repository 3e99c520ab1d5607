//! Stage 3: normalized factors and the global/local signal parts.

use crate::error::{Error, Result};
use crate::numerics::{ls_solve, min_singular_value};
use crate::types::Mat;

/// Per-time recovered quantities for one group.
#[derive(Debug, Clone, Default)]
pub struct SignalParts {
    /// Normalized global factors `S_t` (`k1 x k2`).
    pub s: Vec<Mat>,
    /// Normalized local factors `Z_t` (`r1 x r2`).
    pub z: Vec<Mat>,
    /// Global signal `Psi_t`.
    pub psi: Vec<Mat>,
    /// Local signal `Phi_t`.
    pub phi: Vec<Mat>,
    /// `X_t - Psi_t - Phi_t`.
    pub residual: Vec<Mat>,
}

/// Local factors by least squares in the projected coordinates:
/// `Z_t = (AᵀA)⁻¹ Aᵀ Y1_t Q4` with `A = B1ᵀ Q3`, then `Phi_t = Q3 Z_t Q4ᵀ`.
///
/// Also returns the smallest singular value of `A`. Fails when `A` is
/// numerically rank deficient, i.e. the local row space lies inside the
/// estimated global row space.
pub fn recover_local(
    y1: &[Mat],
    q3: &Mat,
    q4: &Mat,
    b1: &Mat,
    group: usize,
) -> Result<(Vec<Mat>, Vec<Mat>, f64)> {
    if b1.nrows() != q3.nrows() {
        return Err(Error::Shape("recover_local: B1 and Q3 row counts differ".into()));
    }
    let a = b1.transpose() * q3;
    let sigma_min = min_singular_value(&a);
    if a.nrows() < a.ncols() || !(sigma_min > 1e-10) {
        return Err(Error::LocalSpaceSwallowed { group, sigma_min });
    }
    // (AᵀA)⁻¹Aᵀ, applied to every Y1_t Q4
    let pinv = ls_solve(&a, &Mat::identity(a.nrows(), a.nrows()))?.solution;
    let q4t = q4.transpose();
    let mut z = Vec::with_capacity(y1.len());
    let mut phi = Vec::with_capacity(y1.len());
    for y in y1 {
        if y.nrows() != a.nrows() || y.ncols() != q4.nrows() {
            return Err(Error::Shape("recover_local: Y1 shape does not match loadings".into()));
        }
        let zt = &pinv * y * q4;
        phi.push(q3 * &zt * &q4t);
        z.push(zt);
    }
    Ok((z, phi, sigma_min))
}

/// `S_t = Q1ᵀ (X_t - Phi_t) Q2` and `Psi_t = Q1 S_t Q2ᵀ`.
pub fn recover_global(x: &[Mat], phi: &[Mat], q1: &Mat, q2: &Mat) -> Result<(Vec<Mat>, Vec<Mat>)> {
    if x.len() != phi.len() {
        return Err(Error::Shape("recover_global: X and Phi lengths differ".into()));
    }
    let q1t = q1.transpose();
    let q2t = q2.transpose();
    let mut s = Vec::with_capacity(x.len());
    let mut psi = Vec::with_capacity(x.len());
    for (xt, ph) in x.iter().zip(phi) {
        if xt.shape() != ph.shape() || xt.nrows() != q1.nrows() || xt.ncols() != q2.nrows() {
            return Err(Error::Shape("recover_global: shapes do not match loadings".into()));
        }
        let st = &q1t * (xt - ph) * q2;
        psi.push(q1 * &st * &q2t);
        s.push(st);
    }
    Ok((s, psi))
}

/// `Xhat_t = Psi_t + Phi_t`.
pub fn fitted_values(parts: &SignalParts) -> Vec<Mat> {
    parts.psi.iter().zip(&parts.phi).map(|(a, b)| a + b).collect()
}

/// Runs both recoveries and materializes residuals.
pub fn recover_signals(
    x: &[Mat],
    y1: &[Mat],
    loadings: &crate::types::GroupLoadings,
    group: usize,
) -> Result<(SignalParts, f64)> {
    let (z, phi, sigma_min) = recover_local(y1, &loadings.q3, &loadings.q4, &loadings.b1, group)?;
    let (s, psi) = recover_global(x, &phi, &loadings.q1, &loadings.q2)?;
    let residual = x
        .iter()
        .zip(psi.iter().zip(&phi))
        .map(|(xt, (a, b))| xt - a - b)
        .collect();
    Ok((SignalParts { s, z, psi, phi, residual }, sigma_min))
}
