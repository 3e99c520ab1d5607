//! Evaluation metrics: subspace distance, signal distance, out-of-sample
//! fit and within/between correlation summaries.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::spectral_norm;
use crate::types::{orthonormality_error, FactorDims, GroupedPanel, Mat};

/// Squared Frobenius norm of the part of `a` outside `span(b)`.
fn residual_energy(a: &Mat, b: &Mat) -> f64 {
    let proj = b * (b.transpose() * a);
    (a - proj).norm_squared()
}

/// Distance between the column spaces of two matrices with orthonormal
/// columns: `sqrt(1 - tr(O1 O1ᵀ O2 O2ᵀ) / max(q1, q2))`, in `[0, 1]`.
///
/// The trace is evaluated as `q_min - ||(I - P_large) O_small||²` so that
/// nearly identical spans give distances at rounding level instead of the
/// square root of it. For equal dimensions both projections are averaged,
/// which makes the result exactly symmetric in its arguments.
pub fn subspace_distance(o1: &Mat, o2: &Mat) -> Result<f64> {
    if o1.nrows() != o2.nrows() {
        return Err(Error::Shape(format!(
            "subspace_distance: {} vs {} rows",
            o1.nrows(),
            o2.nrows()
        )));
    }
    let (q1, q2) = (o1.ncols(), o2.ncols());
    if q1 == 0 || q2 == 0 {
        return Err(Error::Shape("subspace_distance: empty basis".into()));
    }
    for o in [o1, o2] {
        let dev = orthonormality_error(o);
        if dev > 1e-8 {
            return Err(Error::NotOrthonormal(dev));
        }
    }
    let q = q1.max(q2) as f64;
    let missing = if q1 == q2 {
        0.5 * (residual_energy(o1, o2) + residual_energy(o2, o1))
    } else if q1 < q2 {
        (q2 - q1) as f64 + residual_energy(o1, o2)
    } else {
        (q1 - q2) as f64 + residual_energy(o2, o1)
    };
    Ok((missing / q).clamp(0.0, 1.0).sqrt())
}

/// Normalized average spectral-norm error of a recovered signal path:
/// `(N p)^{-1/2} * mean_t ||est_t - truth_t||_2`.
pub fn signal_distance(est: &[Mat], truth: &[Mat]) -> Result<f64> {
    if est.len() != truth.len() || est.is_empty() {
        return Err(Error::Shape(format!(
            "signal_distance: {} vs {} time points",
            est.len(),
            truth.len()
        )));
    }
    let (n, p) = truth[0].shape();
    let mut total = 0.0;
    for (a, b) in est.iter().zip(truth) {
        if a.shape() != b.shape() {
            return Err(Error::Shape("signal_distance: matrix shapes differ".into()));
        }
        total += spectral_norm(&(a - b));
    }
    Ok(total / est.len() as f64 / ((n * p) as f64).sqrt())
}

/// `1 - sum_t ||X_t - Xhat_t||_F² / sum_t ||X_t - Xbar||_F²`.
pub fn rss_tss(x: &[Mat], fitted: &[Mat]) -> Result<f64> {
    if x.len() != fitted.len() {
        return Err(Error::Shape(format!(
            "rss_tss: {} vs {} time points",
            x.len(),
            fitted.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Shape("rss_tss needs T >= 2".into()));
    }
    let (n, p) = x[0].shape();
    if x.iter().chain(fitted).any(|m| m.shape() != (n, p)) {
        return Err(Error::Shape("rss_tss: matrix shapes differ".into()));
    }
    let mut mean = Mat::zeros(n, p);
    for xt in x {
        mean += xt;
    }
    mean /= x.len() as f64;
    let rss: f64 = x.iter().zip(fitted).map(|(a, b)| (a - b).norm_squared()).sum();
    let tss: f64 = x.iter().map(|a| (a - &mean).norm_squared()).sum();
    if tss == 0.0 {
        return Err(Error::DegenerateSeries("total sum of squares is zero".into()));
    }
    Ok(1.0 - rss / tss)
}

/// RSS/TSS pooled over several groups (sums taken before the ratio).
pub fn rss_tss_pooled(groups: &[(&[Mat], &[Mat])]) -> Result<f64> {
    let mut rss = 0.0;
    let mut tss = 0.0;
    for (x, fitted) in groups {
        let r = rss_tss(x, fitted)?;
        let (n, p) = x[0].shape();
        let mut mean = Mat::zeros(n, p);
        for xt in x.iter() {
            mean += xt;
        }
        mean /= x.len() as f64;
        let t: f64 = x.iter().map(|a| (a - &mean).norm_squared()).sum();
        rss += (1.0 - r) * t;
        tss += t;
    }
    if tss == 0.0 {
        return Err(Error::DegenerateSeries("total sum of squares is zero".into()));
    }
    Ok(1.0 - rss / tss)
}

/// `M x M` average pairwise correlations: diagonal within groups,
/// off-diagonal between groups.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationSummary {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl CorrelationSummary {
    pub fn within(&self, m: usize) -> f64 {
        self.values[m][m]
    }

    pub fn between(&self, m: usize, n: usize) -> f64 {
        self.values[m][n]
    }

    /// Mean of the off-diagonal entries in row `m`.
    pub fn mean_between(&self, m: usize) -> f64 {
        let k = self.values.len();
        if k < 2 {
            return 0.0;
        }
        (0..k).filter(|&n| n != m).map(|n| self.values[m][n]).sum::<f64>() / (k - 1) as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }
}

/// Average Pearson correlations between series of the same indicator.
///
/// Entry `(m, m)` averages `corr(x_a,j , x_b,j)` over indicators `j` and
/// distinct individual pairs `a < b` of group `m`; entry `(m, n)` averages
/// over indicators and all cross-group pairs. Each correlation is computed
/// from z-scores, so the pair sums reduce to products of per-time column
/// sums of z-scores.
pub fn correlation_summary(panel: &GroupedPanel) -> Result<CorrelationSummary> {
    let t = panel.t();
    if t < 3 {
        return Err(Error::Shape(format!("correlation summary needs T >= 3, got {t}")));
    }
    let m = panel.n_groups();
    let p = panel.p();

    // zsum[g][j][t] = sum over individuals a of z_{a,j}(t)
    let mut zsum = vec![vec![vec![0.0; t]; p]; m];
    for (g, series) in panel.groups.iter().enumerate() {
        for a in 0..series.rows() {
            for j in 0..p {
                let xs: Vec<f64> = series.obs.iter().map(|x| x[(a, j)]).collect();
                let mean = xs.iter().sum::<f64>() / t as f64;
                let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64;
                if !(var > 0.0) {
                    return Err(Error::DegenerateSeries(format!(
                        "group {} row {} column {} has zero variance",
                        series.name,
                        a + 1,
                        j + 1
                    )));
                }
                let sd = var.sqrt();
                for (dst, v) in zsum[g][j].iter_mut().zip(&xs) {
                    *dst += (v - mean) / sd;
                }
            }
        }
    }

    let mut values = vec![vec![0.0; m]; m];
    for g in 0..m {
        let ng = panel.rows(g) as f64;
        for h in g..m {
            let nh = panel.rows(h) as f64;
            let cross: f64 = (0..p)
                .map(|j| {
                    zsum[g][j]
                        .iter()
                        .zip(&zsum[h][j])
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        / t as f64
                })
                .sum();
            let v = if g == h {
                if ng < 2.0 {
                    f64::NAN
                } else {
                    // drop the N self-correlations, each exactly 1
                    (cross - ng * p as f64) / 2.0 / (p as f64 * ng * (ng - 1.0) / 2.0)
                }
            } else {
                cross / (p as f64 * ng * nh)
            };
            values[g][h] = v;
            values[h][g] = v;
        }
    }
    Ok(CorrelationSummary {
        names: panel.groups.iter().map(|g| g.name.clone()).collect(),
        values,
    })
}

/// Factor and loading-parameter counts for one group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParameterCount {
    /// `k1 k2 + r1 r2`
    pub factors: usize,
    /// `N (k1 + r1) + p (k2 + r2)`
    pub loading_params: usize,
    /// `N p (k1 k2 + r1 r2)`, the vectorized (Kronecker) equivalent.
    pub vectorized_params: usize,
}

pub fn parameter_count(k1: usize, k2: usize, r1: usize, r2: usize, n: usize, p: usize) -> ParameterCount {
    let factors = k1 * k2 + r1 * r2;
    ParameterCount {
        factors,
        loading_params: n * (k1 + r1) + p * (k2 + r2),
        vectorized_params: n * p * factors,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelParameterCount {
    pub groups: Vec<ParameterCount>,
    /// Sum of per-group factor counts.
    pub total_factors: usize,
    /// Sum of per-group loading parameters.
    pub total_loading_params: usize,
    /// Distinct factors: global ones counted once, `k1 k2 + sum_m r_m1 r_m2`.
    pub distinct_factors: usize,
    /// Factors needed by separate matrix factor models per group,
    /// `2 M k1 k2 + 2 sum_m r_m1 r_m2`.
    pub separate_model_factors: usize,
}

pub fn model_parameter_count(dims: &FactorDims, rows: &[usize], p: usize) -> ModelParameterCount {
    let groups: Vec<ParameterCount> = dims
        .local
        .iter()
        .zip(rows)
        .map(|(&(r1, r2), &n)| parameter_count(dims.k1, dims.k2, r1, r2, n, p))
        .collect();
    let local: usize = dims.local.iter().map(|(a, b)| a * b).sum();
    let global = dims.k1 * dims.k2;
    ModelParameterCount {
        total_factors: groups.iter().map(|g| g.factors).sum(),
        total_loading_params: groups.iter().map(|g| g.loading_params).sum(),
        distinct_factors: global + local,
        separate_model_factors: 2 * rows.len() * global + 2 * local,
        groups,
    }
}
