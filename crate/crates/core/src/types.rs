//! Shared data model: grouped matrix-variate panels, factor dimensions,
//! estimated loadings and fit results.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SignalParts;

pub type Mat = DMatrix<f64>;

/// One group's observations: `T` matrices of shape `N_m x p`.
/// Rows are individuals, columns are indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSeries {
    pub name: String,
    pub obs: Vec<Mat>,
}

impl GroupSeries {
    pub fn new(name: impl Into<String>, obs: Vec<Mat>) -> Self {
        Self { name: name.into(), obs }
    }

    pub fn rows(&self) -> usize {
        self.obs.first().map_or(0, |x| x.nrows())
    }

    pub fn cols(&self) -> usize {
        self.obs.first().map_or(0, |x| x.ncols())
    }
}

/// The observed series `{X_mt}` for `M` groups sharing `T` and `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedPanel {
    pub groups: Vec<GroupSeries>,
}

impl GroupedPanel {
    pub fn new(groups: Vec<GroupSeries>) -> Self {
        Self { groups }
    }

    /// Builds a panel and fails unless [`validate_panel`] reports no violations.
    pub fn try_new(groups: Vec<GroupSeries>) -> Result<Self> {
        let panel = Self { groups };
        panel.ensure_valid()?;
        Ok(panel)
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn t(&self) -> usize {
        self.groups.first().map_or(0, |g| g.obs.len())
    }

    pub fn p(&self) -> usize {
        self.groups.first().map_or(0, |g| g.cols())
    }

    pub fn rows(&self, m: usize) -> usize {
        self.groups[m].rows()
    }

    pub fn group(&self, m: usize) -> &GroupSeries {
        &self.groups[m]
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate_panel(self);
        if report.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidPanel(report.violations))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Structural checks on a panel. Never fails; problems are listed in the report.
pub fn validate_panel(panel: &GroupedPanel) -> ValidationReport {
    let mut report = ValidationReport::default();
    let m = panel.n_groups();
    if m == 0 {
        report.violations.push("panel has no groups".into());
        return report;
    }
    if m < 2 {
        report
            .violations
            .push("global estimation requires ≥2 groups".into());
    }
    let t = panel.t();
    if t < 2 {
        report
            .violations
            .push(format!("T = {t}; at least 2 time points are required"));
    }
    let p = panel.p();
    for (gi, g) in panel.groups.iter().enumerate() {
        let label = gi + 1;
        if g.obs.len() != t {
            report.violations.push(format!(
                "group {label} has {} observations, expected {t}",
                g.obs.len()
            ));
        }
        let n = g.rows();
        if n == 0 {
            report.violations.push(format!("group {label} has no rows"));
        }
        if g.cols() != p {
            report.violations.push(format!(
                "group {label} has {} columns, expected {p}",
                g.cols()
            ));
        }
        for (ti, x) in g.obs.iter().enumerate() {
            if x.nrows() != n || x.ncols() != g.cols() {
                report.violations.push(format!(
                    "shape mismatch group {label}, t={}: {}x{} vs {}x{}",
                    ti + 1,
                    x.nrows(),
                    x.ncols(),
                    n,
                    g.cols()
                ));
            }
            if x.iter().any(|v| !v.is_finite()) {
                report
                    .violations
                    .push(format!("non-finite entry in group {label}, t={}", ti + 1));
            }
        }
    }
    let sizes: Vec<usize> = panel.groups.iter().map(|g| g.rows()).collect();
    let (lo, hi) = (
        sizes.iter().copied().min().unwrap_or(0),
        sizes.iter().copied().max().unwrap_or(0),
    );
    if lo > 0 && hi as f64 / lo as f64 > 10.0 {
        report.warnings.push(format!(
            "group sizes differ by more than an order of magnitude (min {lo}, max {hi})"
        ));
    }
    report
}

/// Global `(k1, k2)` and per-group local `(r_m1, r_m2)` factor counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorDims {
    pub k1: usize,
    pub k2: usize,
    pub local: Vec<(usize, usize)>,
}

impl FactorDims {
    pub fn new(k1: usize, k2: usize, local: Vec<(usize, usize)>) -> Self {
        Self { k1, k2, local }
    }

    /// Same local ranks for every one of `m` groups.
    pub fn uniform(k1: usize, k2: usize, r1: usize, r2: usize, m: usize) -> Self {
        Self::new(k1, k2, vec![(r1, r2); m])
    }

    /// Checks the counts against group row sizes and the column dimension.
    pub fn check(&self, rows: &[usize], p: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidDims(msg));
        if self.local.len() != rows.len() {
            return bad(format!(
                "{} local rank pairs for {} groups",
                self.local.len(),
                rows.len()
            ));
        }
        let min_n = rows.iter().copied().min().unwrap_or(0);
        if self.k1 < 1 || self.k1 > min_n {
            return bad(format!("k1 = {} outside 1..={min_n}", self.k1));
        }
        if self.k2 < 1 || self.k2 > p {
            return bad(format!("k2 = {} outside 1..={p}", self.k2));
        }
        for (m, (&(r1, r2), &n)) in self.local.iter().zip(rows).enumerate() {
            if r1 < 1 || r1 + self.k1 > n {
                return bad(format!("group {}: r1 = {r1} outside 1..={}", m + 1, n - self.k1));
            }
            if r2 < 1 || r2 + self.k2 > p {
                return bad(format!("group {}: r2 = {r2} outside 1..={}", m + 1, p - self.k2));
            }
        }
        Ok(())
    }
}

/// Estimated semi-orthogonal loadings and global complements for one group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupLoadings {
    /// `N_m x k1`
    pub q1: Mat,
    /// `p x k2`
    pub q2: Mat,
    /// `N_m x r_m1`
    pub q3: Mat,
    /// `p x r_m2`
    pub q4: Mat,
    /// `N_m x (N_m - k1)`
    pub b1: Mat,
    /// `p x (p - k2)`
    pub b2: Mat,
}

impl GroupLoadings {
    /// Largest deviation from the orthonormality and complement invariants.
    pub fn max_invariant_error(&self) -> f64 {
        let ortho = [&self.q1, &self.q2, &self.q3, &self.q4, &self.b1, &self.b2]
            .iter()
            .map(|q| orthonormality_error(q))
            .fold(0.0, f64::max);
        let c1 = (self.b1.transpose() * &self.q1).amax();
        let c2 = (self.b2.transpose() * &self.q2).amax();
        ortho.max(c1).max(c2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadingSet {
    pub groups: Vec<GroupLoadings>,
}

impl LoadingSet {
    pub fn max_invariant_error(&self) -> f64 {
        self.groups
            .iter()
            .map(GroupLoadings::max_invariant_error)
            .fold(0.0, f64::max)
    }
}

/// `max |QᵀQ - I|`, zero for an empty matrix.
pub fn orthonormality_error(q: &Mat) -> f64 {
    if q.ncols() == 0 {
        return 0.0;
    }
    let gram = q.transpose() * q;
    (gram - Mat::identity(q.ncols(), q.ncols())).amax()
}

/// Eigenvalue ladder, successive ratios and the selected rank for one
/// statistic.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DirectionDiagnostics {
    pub ladder: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Rank chosen by the eigenvalue-ratio rule on this ladder.
    pub estimated: usize,
    /// Rank actually used downstream (user override, reconciled or estimated).
    pub used: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GroupDiagnostics {
    pub global_row: DirectionDiagnostics,
    pub global_col: DirectionDiagnostics,
    pub local_row: DirectionDiagnostics,
    pub local_col: DirectionDiagnostics,
    /// Smallest singular value of `B1ᵀQ3`.
    pub local_sigma_min: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EigenDiagnostics {
    pub groups: Vec<GroupDiagnostics>,
    pub warnings: Vec<String>,
}

pub const DIRECTIONS: [&str; 4] = ["global_row", "global_col", "local_row", "local_col"];

impl GroupDiagnostics {
    pub fn direction(&self, name: &str) -> Option<&DirectionDiagnostics> {
        match name {
            "global_row" => Some(&self.global_row),
            "global_col" => Some(&self.global_col),
            "local_row" => Some(&self.local_row),
            "local_col" => Some(&self.local_col),
            _ => None,
        }
    }

    /// Per-group estimated `(k1, k2, r1, r2)`.
    pub fn estimated_dims(&self) -> (usize, usize, usize, usize) {
        (
            self.global_row.estimated,
            self.global_col.estimated,
            self.local_row.estimated,
            self.local_col.estimated,
        )
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub loadings: LoadingSet,
    pub dims: FactorDims,
    pub signals: Vec<SignalParts>,
    pub diagnostics: EigenDiagnostics,
}

impl FitResult {
    /// Max deviation between stored `Psi` and `Q1 Q1ᵀ (X - Phi) Q2 Q2ᵀ`.
    pub fn global_signal_identity_error(&self, panel: &GroupedPanel) -> f64 {
        let mut worst = 0.0_f64;
        for (m, (g, parts)) in self.loadings.groups.iter().zip(&self.signals).enumerate() {
            for (t, x) in panel.group(m).obs.iter().enumerate() {
                let inner = g.q1.transpose() * (x - &parts.phi[t]) * &g.q2;
                let psi = &g.q1 * inner * g.q2.transpose();
                worst = worst.max((psi - &parts.psi[t]).amax());
            }
        }
        worst
    }

    /// Residual panel after removing the global signal only.
    pub fn post_global_panel(&self, panel: &GroupedPanel) -> GroupedPanel {
        self.map_panel(panel, |parts, t, x| x - &parts.psi[t])
    }

    /// Residual panel after removing both signal parts.
    pub fn residual_panel(&self, panel: &GroupedPanel) -> GroupedPanel {
        self.map_panel(panel, |parts, t, _| parts.residual[t].clone())
    }

    fn map_panel<F>(&self, panel: &GroupedPanel, f: F) -> GroupedPanel
    where
        F: Fn(&SignalParts, usize, &Mat) -> Mat,
    {
        GroupedPanel::new(
            panel
                .groups
                .iter()
                .zip(&self.signals)
                .map(|(g, parts)| {
                    let obs = g.obs.iter().enumerate().map(|(t, x)| f(parts, t, x)).collect();
                    GroupSeries::new(g.name.clone(), obs)
                })
                .collect(),
        )
    }
}
