//! Stage 2: local loading spaces from lagged autocovariances of the series
//! projected onto the estimated global complements.

use crate::error::{Error, Result};
use crate::global::{direction_diagnostics, GlobalGroupFit};
use crate::moments::{at_b, block_gram_sum, stack, symmetrize};
use crate::numerics::sym_eig;
use crate::types::{DirectionDiagnostics, Mat};

pub const DEFAULT_MAX_LAG: usize = 2;

/// `Y1_t = B1ᵀ X_t` (`(N_m - k1) x p`) and `Y2_t = B2ᵀ X_tᵀ` (`(p - k2) x N_m`).
#[derive(Debug, Clone)]
pub struct ProjectedSeries {
    pub y1: Vec<Mat>,
    pub y2: Vec<Mat>,
}

pub fn project(x: &[Mat], b1: &Mat, b2: &Mat) -> Result<ProjectedSeries> {
    let (n, p) = x.first().map_or((0, 0), |m| m.shape());
    if b1.nrows() != n || b2.nrows() != p {
        return Err(Error::Shape(format!(
            "project: data is {n}x{p}, complements have {} and {} rows",
            b1.nrows(),
            b2.nrows()
        )));
    }
    if x.iter().any(|m| m.shape() != (n, p)) {
        return Err(Error::Shape("project: inconsistent observation shapes".into()));
    }
    let b1t = b1.transpose();
    let b2t = b2.transpose();
    Ok(ProjectedSeries {
        y1: x.iter().map(|xt| &b1t * xt).collect(),
        y2: x.iter().map(|xt| &b2t * xt.transpose()).collect(),
    })
}

/// Lag statistic `sum_{h=1}^{h0} sum_{i,j} Pi_ij(h) Pi_ij(h)ᵀ`, where
/// `Pi_ij(h) = (T-h)⁻¹ sum_{t <= T-h} y_{t,i.} y_{t+h,j.}ᵀ` and `y_{t,i.}` is
/// row `i` of `Y_t` as a column vector. The result is `cols x cols`.
pub fn compute_m(y: &[Mat], h0: usize) -> Result<Mat> {
    let t = y.len();
    if h0 < 1 {
        return Err(Error::Config("max lag h0 must be at least 1".into()));
    }
    if h0 >= t {
        return Err(Error::InsufficientLength { t, h0 });
    }
    let cols = y[0].ncols();
    if y.iter().any(|m| m.shape() != y[0].shape()) {
        return Err(Error::Shape("compute_m: inconsistent shapes".into()));
    }
    if y[0].nrows() == 0 || cols == 0 {
        return Ok(Mat::zeros(cols, cols));
    }
    // row t = vec(Y_tᵀ): entry (i, c) at c + i*cols, so row blocks of the
    // cross moment are indexed by i with c running inside each block
    let d = stack(y, true);
    let mut out = Mat::zeros(cols, cols);
    for h in 1..=h0 {
        let len = t - h;
        let g = at_b(&d.rows(0, len), &d.rows(h, len), 1.0 / len as f64);
        out += block_gram_sum(&g, cols);
    }
    symmetrize(&mut out);
    Ok(out)
}

/// `M1` (from `Y1`, `p x p`) and `M2` (from `Y2`, `N_m x N_m`).
#[derive(Debug, Clone)]
pub struct LocalStatistic {
    pub m1: Mat,
    pub m2: Mat,
    pub h0: usize,
}

pub fn local_statistic(proj: &ProjectedSeries, h0: usize) -> Result<LocalStatistic> {
    Ok(LocalStatistic {
        m1: compute_m(&proj.y1, h0)?,
        m2: compute_m(&proj.y2, h0)?,
        h0,
    })
}

#[derive(Debug, Clone)]
pub struct LocalGroupFit {
    pub q3: Mat,
    pub q4: Mat,
    /// Ladder of `M2`, used for `r1`.
    pub row: DirectionDiagnostics,
    /// Ladder of `M1`, used for `r2`.
    pub col: DirectionDiagnostics,
    pub projected: ProjectedSeries,
}

/// Estimates `Q3` and `Q4` for one group given its stage-1 fit. Missing
/// ranks are chosen by the eigenvalue-ratio rule (caps `N_m` and `p`).
pub fn fit_local(
    x: &[Mat],
    global: &GlobalGroupFit,
    r1: Option<usize>,
    r2: Option<usize>,
    h0: usize,
) -> Result<LocalGroupFit> {
    let projected = project(x, &global.b1, &global.b2)?;
    let stat = local_statistic(&projected, h0)?;
    let n = global.q1.nrows();
    let p = global.q2.nrows();
    let free_rows = global.b1.ncols();
    let free_cols = global.b2.ncols();
    if free_rows == 0 || free_cols == 0 {
        return Err(Error::InvalidDims(
            "no room for local factors: global ranks fill a dimension".into(),
        ));
    }

    let e_col = sym_eig(&stat.m1)?;
    let e_row = sym_eig(&stat.m2)?;
    let mut col = direction_diagnostics(&e_col.values, p)?;
    let mut row = direction_diagnostics(&e_row.values, n)?;
    col.estimated = col.estimated.min(free_cols);
    row.estimated = row.estimated.min(free_rows);

    let r1 = r1.unwrap_or(row.estimated);
    let r2 = r2.unwrap_or(col.estimated);
    if r1 < 1 || r1 > free_rows {
        return Err(Error::InvalidDims(format!("r1 = {r1} outside 1..={free_rows}")));
    }
    if r2 < 1 || r2 > free_cols {
        return Err(Error::InvalidDims(format!("r2 = {r2} outside 1..={free_cols}")));
    }
    row.used = r1;
    col.used = r2;
    Ok(LocalGroupFit {
        q3: e_row.leading(r1),
        q4: e_col.leading(r2),
        row,
        col,
        projected,
    })
}
