//! Data-generating process for grouped matrix-variate panels with global
//! and group-specific matrix factors and Kronecker-structured noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sym_sqrt, thin_qr};
use crate::types::{FactorDims, GroupSeries, GroupedPanel, Mat};

fn default_burn_in() -> usize {
    200
}

fn default_noise_scale() -> f64 {
    1.0
}

/// Parameters of the simulation design. Fields missing from a config file
/// fall back to [`SimConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Number of groups `M`.
    pub groups: usize,
    /// Rows per group (all groups share it).
    pub n: usize,
    pub p: usize,
    pub t: usize,
    pub dims: FactorDims,
    /// Strengths `(delta_1, ..., delta_4)` of the global row, global column,
    /// local row and local column loadings.
    pub deltas: [f64; 4],
    /// `k1 x k2` AR(1) coefficients of the global factor entries.
    pub global_ar: Vec<Vec<f64>>,
    /// Per-group `r1 x r2` AR(1) coefficients. A single matrix is reused
    /// for every group.
    pub local_ar: Vec<Vec<Vec<f64>>>,
    /// Off-diagonal value of both noise covariance factors (unit diagonal).
    pub noise_offdiag: f64,
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Multiplies the noise; `0` gives a noiseless panel.
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
    /// Centre of the uniform loading distributions, per loading kind in the
    /// same order as `deltas`. Zero reproduces the symmetric design; a
    /// positive centre gives every individual a same-signed exposure.
    #[serde(default)]
    pub loading_center: [f64; 4],
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::baseline(20, 20, 400, [0.0; 4], 1)
    }
}

impl SimConfig {
    /// Three groups, `(k1, k2) = (3, 2)`, local `(2, 2)`, noise
    /// off-diagonal 0.2 and the reference AR coefficients.
    pub fn baseline(n: usize, p: usize, t: usize, deltas: [f64; 4], seed: u64) -> Self {
        Self {
            groups: 3,
            n,
            p,
            t,
            dims: FactorDims::uniform(3, 2, 2, 2, 3),
            deltas,
            global_ar: vec![vec![-0.5, 0.6], vec![0.8, -0.4], vec![0.7, 0.3]],
            local_ar: vec![vec![vec![-0.5, 0.6], vec![0.8, -0.4]]],
            noise_offdiag: 0.2,
            seed,
            burn_in: default_burn_in(),
            noise_scale: 1.0,
            loading_center: [0.0; 4],
        }
    }

    pub fn local_ar_for(&self, m: usize) -> &Vec<Vec<f64>> {
        if self.local_ar.len() == 1 {
            &self.local_ar[0]
        } else {
            &self.local_ar[m]
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.groups < 1 || self.n < 1 || self.p < 1 || self.t < 1 {
            return bad("groups, n, p and t must all be positive".into());
        }
        self.dims.check(&vec![self.n; self.groups], self.p)?;
        if self.deltas.iter().any(|d| !(0.0..=1.0).contains(d)) {
            return bad(format!("deltas {:?} outside [0, 1]", self.deltas));
        }
        if !(self.noise_offdiag > -1.0 && self.noise_offdiag < 1.0) {
            return bad(format!("noise_offdiag {} outside (-1, 1)", self.noise_offdiag));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad(format!("noise_scale {} must be finite and >= 0", self.noise_scale));
        }
        check_ar("global_ar", &self.global_ar, self.dims.k1, self.dims.k2)?;
        if self.local_ar.len() != 1 && self.local_ar.len() != self.groups {
            return bad(format!(
                "local_ar has {} matrices; expected 1 or {}",
                self.local_ar.len(),
                self.groups
            ));
        }
        for m in 0..self.groups {
            let (r1, r2) = self.dims.local[m];
            check_ar(&format!("local_ar[{m}]"), self.local_ar_for(m), r1, r2)?;
        }
        Ok(())
    }
}

fn check_ar(name: &str, ar: &[Vec<f64>], rows: usize, cols: usize) -> Result<()> {
    if ar.len() != rows || ar.iter().any(|r| r.len() != cols) {
        return Err(Error::Config(format!("{name} must be {rows}x{cols}")));
    }
    if let Some(v) = ar.iter().flatten().find(|v| !(v.abs() < 1.0)) {
        return Err(Error::Config(format!(
            "{name} coefficient {v} is not strictly inside (-1, 1)"
        )));
    }
    Ok(())
}

/// Everything behind a simulated panel.
#[derive(Debug, Clone)]
pub struct SimTruth {
    /// Raw loadings `R_m`, `C_m`, `Gamma_m`, `Lambda_m`.
    pub r: Vec<Mat>,
    pub c: Vec<Mat>,
    pub gamma: Vec<Mat>,
    pub lambda: Vec<Mat>,
    /// QR-normalized loadings spanning the same spaces.
    pub q1: Vec<Mat>,
    pub q2: Vec<Mat>,
    pub q3: Vec<Mat>,
    pub q4: Vec<Mat>,
    /// Global factor path `G_t`.
    pub g: Vec<Mat>,
    /// Local factor paths `F_mt`, indexed `[m][t]`.
    pub f: Vec<Vec<Mat>>,
    /// Global signal `R_m G_t C_mᵀ`, indexed `[m][t]`.
    pub psi: Vec<Vec<Mat>>,
    /// Local signal `Gamma_m F_mt Lambda_mᵀ`.
    pub phi: Vec<Vec<Mat>>,
    pub noise: Vec<Vec<Mat>>,
}

/// Unit diagonal, constant off-diagonal.
pub fn equicorrelation(dim: usize, rho: f64) -> Mat {
    Mat::from_fn(dim, dim, |i, j| if i == j { 1.0 } else { rho })
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, center: f64, half: f64) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(center - half..center + half))
}

/// One stationary AR(1) path with standard normal innovations, started
/// from the stationary law and burned in.
pub fn ar1_path(rng: &mut ChaCha8Rng, phi: f64, len: usize, burn_in: usize) -> Vec<f64> {
    let sd0 = (1.0 / (1.0 - phi * phi)).sqrt();
    let mut x = sd0 * rng.sample::<f64, _>(StandardNormal);
    for _ in 0..burn_in {
        x = phi * x + rng.sample::<f64, _>(StandardNormal);
    }
    (0..len)
        .map(|_| {
            x = phi * x + rng.sample::<f64, _>(StandardNormal);
            x
        })
        .collect()
}

/// Matrix process whose `(i, j)` entry is an independent AR(1) with
/// coefficient `coef[i][j]`.
fn matrix_ar_paths(rng: &mut ChaCha8Rng, coef: &[Vec<f64>], len: usize, burn_in: usize) -> Vec<Mat> {
    let rows = coef.len();
    let cols = coef.first().map_or(0, Vec::len);
    let mut out = vec![Mat::zeros(rows, cols); len];
    for (i, row) in coef.iter().enumerate() {
        for (j, &phi) in row.iter().enumerate() {
            for (t, v) in ar1_path(rng, phi, len, burn_in).into_iter().enumerate() {
                out[t][(i, j)] = v;
            }
        }
    }
    out
}

/// Draws a panel and its ground truth. Identical configs (including the
/// seed) give bit-identical output.
pub fn simulate(cfg: &SimConfig) -> Result<(GroupedPanel, SimTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, p, t) = (cfg.n, cfg.p, cfg.t);
    let dims = &cfg.dims;
    let row_half = |d: f64| (n as f64).powf(-d / 2.0);
    let col_half = |d: f64| (p as f64).powf(-d / 2.0);
    let [d1, d2, d3, d4] = cfg.deltas;
    let [c1, c2, c3, c4] = cfg.loading_center;

    let mut r = Vec::with_capacity(cfg.groups);
    let mut c = Vec::with_capacity(cfg.groups);
    let mut gamma = Vec::with_capacity(cfg.groups);
    let mut lambda = Vec::with_capacity(cfg.groups);
    for m in 0..cfg.groups {
        let (r1, r2) = dims.local[m];
        r.push(uniform_matrix(&mut rng, n, dims.k1, c1, row_half(d1)));
        c.push(uniform_matrix(&mut rng, p, dims.k2, c2, col_half(d2)));
        gamma.push(uniform_matrix(&mut rng, n, r1, c3, row_half(d3)));
        lambda.push(uniform_matrix(&mut rng, p, r2, c4, col_half(d4)));
    }
    let qr = |ms: &[Mat]| -> Result<Vec<Mat>> { ms.iter().map(|x| thin_qr(x).map(|(q, _)| q)).collect() };
    let (q1, q2, q3, q4) = (qr(&r)?, qr(&c)?, qr(&gamma)?, qr(&lambda)?);

    let g = matrix_ar_paths(&mut rng, &cfg.global_ar, t, cfg.burn_in);
    let f: Vec<Vec<Mat>> = (0..cfg.groups)
        .map(|m| matrix_ar_paths(&mut rng, cfg.local_ar_for(m), t, cfg.burn_in))
        .collect();

    let row_root = sym_sqrt(&equicorrelation(n, cfg.noise_offdiag))?;
    let col_root = sym_sqrt(&equicorrelation(p, cfg.noise_offdiag))? * cfg.noise_scale;

    let mut groups = Vec::with_capacity(cfg.groups);
    let mut psi = Vec::with_capacity(cfg.groups);
    let mut phi = Vec::with_capacity(cfg.groups);
    let mut noise = Vec::with_capacity(cfg.groups);
    for m in 0..cfg.groups {
        let ct = c[m].transpose();
        let lt = lambda[m].transpose();
        let psi_m: Vec<Mat> = g.iter().map(|gt| &r[m] * gt * &ct).collect();
        let phi_m: Vec<Mat> = f[m].iter().map(|ft| &gamma[m] * ft * &lt).collect();
        let noise_m: Vec<Mat> = (0..t)
            .map(|_| {
                let z = Mat::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
                &row_root * z * &col_root
            })
            .collect();
        let obs = (0..t).map(|i| &psi_m[i] + &phi_m[i] + &noise_m[i]).collect();
        groups.push(GroupSeries::new(format!("group{}", m + 1), obs));
        psi.push(psi_m);
        phi.push(phi_m);
        noise.push(noise_m);
    }

    let truth = SimTruth { r, c, gamma, lambda, q1, q2, q3, q4, g, f, psi, phi, noise };
    Ok((GroupedPanel::new(groups), truth))
}

/// Stream seed for `(base, cell, replication)`; stable across platforms
/// and scheduling order.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(splitmix(base), |acc, &p| splitmix(acc ^ splitmix(p)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityReport {
    pub sample_variance: f64,
    /// `1 / (1 - phi²)`
    pub theoretical_variance: f64,
    pub relative_deviation: f64,
    /// Series has zero variance.
    pub degenerate: bool,
    /// Fewer than 200 points; the comparison is unreliable.
    pub short: bool,
}

/// Compares the sample variance of an AR(1) path with its stationary value.
pub fn stationary_check(path: &[f64], phi: f64) -> StationarityReport {
    let len = path.len().max(1) as f64;
    let mean = path.iter().sum::<f64>() / len;
    let var = path.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / len;
    let theoretical = 1.0 / (1.0 - phi * phi);
    StationarityReport {
        sample_variance: var,
        theoretical_variance: theoretical,
        relative_deviation: (var - theoretical).abs() / theoretical,
        degenerate: var == 0.0,
        short: path.len() < 200,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::orthonormality_error;

    #[test]
    fn baseline_matches_reference_design() {
        let cfg = SimConfig::baseline(20, 20, 100, [0.0; 4], 1);
        cfg.validate().unwrap();
        assert_eq!(cfg.global_ar, vec![vec![-0.5, 0.6], vec![0.8, -0.4], vec![0.7, 0.3]]);
        assert_eq!(cfg.local_ar[0], vec![vec![-0.5, 0.6], vec![0.8, -0.4]]);
        assert_eq!(cfg.noise_offdiag, 0.2);
        assert_eq!(cfg.dims, FactorDims::uniform(3, 2, 2, 2, 3));
    }

    #[test]
    fn panel_reconstructs_from_truth() {
        let cfg = SimConfig::baseline(8, 6, 30, [0.5, 0.0, 0.5, 0.0], 7);
        let (panel, truth) = simulate(&cfg).unwrap();
        assert_eq!(panel.n_groups(), 3);
        assert_eq!(panel.t(), 30);
        for m in 0..3 {
            assert!(orthonormality_error(&truth.q1[m]) < 1e-12);
            let ct = truth.c[m].transpose();
            let lt = truth.lambda[m].transpose();
            for t in 0..30 {
                let x = &truth.r[m] * &truth.g[t] * &ct
                    + &truth.gamma[m] * &truth.f[m][t] * &lt
                    + &truth.noise[m][t];
                assert!((x - &panel.groups[m].obs[t]).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn loading_bounds_follow_strength() {
        let cfg = SimConfig::baseline(16, 9, 5, [0.5, 1.0, 0.0, 0.5], 3);
        let (_, truth) = simulate(&cfg).unwrap();
        let bound = |d: f64, dim: f64| dim.powf(-d / 2.0);
        assert!(truth.r[0].amax() < bound(0.5, 16.0));
        assert!(truth.c[0].amax() < bound(1.0, 9.0));
        assert!(truth.gamma[0].amax() < 1.0);
        assert!(truth.lambda[0].amax() < bound(0.5, 9.0));
    }

    #[test]
    fn noiseless_panel_is_signal_sum() {
        let mut cfg = SimConfig::baseline(6, 5, 20, [0.0; 4], 11);
        cfg.noise_scale = 0.0;
        let (panel, truth) = simulate(&cfg).unwrap();
        for m in 0..3 {
            for t in 0..20 {
                assert_eq!(panel.groups[m].obs[t], &truth.psi[m][t] + &truth.phi[m][t]);
            }
        }
    }

    #[test]
    fn same_seed_same_panel() {
        let cfg = SimConfig::baseline(5, 4, 15, [0.0; 4], 42);
        let (a, _) = simulate(&cfg).unwrap();
        let (b, _) = simulate(&cfg).unwrap();
        assert_eq!(a, b);
        let mut other = cfg.clone();
        other.seed = 43;
        assert_ne!(simulate(&other).unwrap().0, a);
    }

    #[test]
    fn white_noise_factors_have_no_lag_one_correlation() {
        let mut cfg = SimConfig::baseline(5, 4, 2000, [0.0; 4], 5);
        cfg.global_ar = vec![vec![0.0; 2]; 3];
        cfg.local_ar = vec![vec![vec![0.0; 2]; 2]];
        let (_, truth) = simulate(&cfg).unwrap();
        let t = truth.g.len();
        for i in 0..3 {
            for j in 0..2 {
                let xs: Vec<f64> = truth.g.iter().map(|g| g[(i, j)]).collect();
                let mean = xs.iter().sum::<f64>() / t as f64;
                let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
                let cov: f64 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
                assert!((cov / var).abs() < 3.0 / (t as f64).sqrt());
            }
        }
    }

    #[test]
    fn stationary_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let white = ar1_path(&mut rng, 0.0, 500, 200);
        assert!(stationary_check(&white, 0.0).relative_deviation < 0.2);
        let persistent = ar1_path(&mut rng, 0.8, 2000, 200);
        let report = stationary_check(&persistent, 0.8);
        assert!((report.theoretical_variance - 1.0 / 0.36).abs() < 1e-12);
        assert!(report.relative_deviation < 0.25, "{report:?}");
        let zero = stationary_check(&vec![0.0; 300], 0.5);
        assert!(zero.degenerate);
        assert_eq!(zero.sample_variance, 0.0);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = SimConfig::baseline(10, 10, 10, [0.0; 4], 1);
        let mut c = base.clone();
        c.global_ar[0][0] = 1.0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.deltas[2] = 1.5;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.noise_offdiag = -0.5;
        assert!(matches!(simulate(&c), Err(Error::NoiseNotPsd(_))));
        let mut c = base;
        c.local_ar = vec![vec![vec![0.1, 0.1]]; 2];
        assert!(c.validate().is_err());
    }

    #[test]
    fn seeds_are_distinct_per_stream() {
        let a = derive_seed(1, &[0, 0]);
        assert_ne!(a, derive_seed(1, &[0, 1]));
        assert_ne!(a, derive_seed(1, &[1, 0]));
        assert_ne!(a, derive_seed(2, &[0, 0]));
        assert_eq!(a, derive_seed(1, &[0, 0]));
    }
}
