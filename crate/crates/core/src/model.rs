//! Three-stage estimation: global loadings, local loadings, then signals.

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Result;
use crate::global::fit_global;
use crate::local::{fit_local, project, DEFAULT_MAX_LAG};
use crate::signal::{recover_signals, SignalParts};
use crate::types::{
    EigenDiagnostics, FactorDims, FitResult, GroupDiagnostics, GroupLoadings, GroupedPanel, LoadingSet, Mat,
};

fn default_h0() -> usize {
    DEFAULT_MAX_LAG
}

/// Rank overrides (`None` = estimate) and the local lag window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    #[serde(default, with = "auto_rank")]
    pub k1: Option<usize>,
    #[serde(default, with = "auto_rank")]
    pub k2: Option<usize>,
    /// Per-group `(r1, r2)`; estimated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local: Option<Vec<(usize, usize)>>,
    #[serde(default = "default_h0")]
    pub h0: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { k1: None, k2: None, local: None, h0: DEFAULT_MAX_LAG }
    }
}

impl EstimatorConfig {
    /// All ranks fixed to `dims`.
    pub fn with_dims(dims: &FactorDims) -> Self {
        Self {
            k1: Some(dims.k1),
            k2: Some(dims.k2),
            local: Some(dims.local.clone()),
            h0: DEFAULT_MAX_LAG,
        }
    }
}

/// Serializes `None` as `"auto"` and accepts either an integer or `"auto"`.
mod auto_rank {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Fixed(usize),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<usize>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match v {
            Some(k) => s.serialize_u64(*k as u64),
            None => s.serialize_str("auto"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<usize>, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Fixed(k) => Ok(Some(k)),
            Raw::Text(s) if s.eq_ignore_ascii_case("auto") => Ok(None),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("expected an integer or \"auto\", got {s:?}"))),
        }
    }
}

/// Full three-stage fit of a panel.
pub fn fit(panel: &GroupedPanel, cfg: &EstimatorConfig) -> Result<FitResult> {
    let global = fit_global(panel, cfg.k1, cfg.k2)?;
    let m = panel.n_groups();
    if let Some(local) = &cfg.local {
        if local.len() != m {
            return Err(crate::Error::InvalidDims(format!(
                "{} local rank pairs for {m} groups",
                local.len()
            )));
        }
    }

    let per_group: Vec<Result<(GroupLoadings, SignalParts, GroupDiagnostics)>> = (0..m)
        .into_par_iter()
        .map(|g| {
            let x = &panel.group(g).obs;
            let gfit = &global.groups[g];
            let (r1, r2) = match &cfg.local {
                Some(l) => (Some(l[g].0), Some(l[g].1)),
                None => (None, None),
            };
            let local = fit_local(x, gfit, r1, r2, cfg.h0)?;
            let loadings = GroupLoadings {
                q1: gfit.q1.clone(),
                q2: gfit.q2.clone(),
                q3: local.q3,
                q4: local.q4,
                b1: gfit.b1.clone(),
                b2: gfit.b2.clone(),
            };
            let (parts, sigma_min) = recover_signals(x, &local.projected.y1, &loadings, g)?;
            let diag = GroupDiagnostics {
                global_row: gfit.row.clone(),
                global_col: gfit.col.clone(),
                local_row: local.row,
                local_col: local.col,
                local_sigma_min: sigma_min,
            };
            Ok((loadings, parts, diag))
        })
        .collect();

    let mut loadings = Vec::with_capacity(m);
    let mut signals = Vec::with_capacity(m);
    let mut diagnostics = EigenDiagnostics::default();
    for (g, item) in per_group.into_iter().enumerate() {
        let (l, s, d) = item?;
        if d.local_sigma_min < 1e-6 {
            diagnostics.warnings.push(format!(
                "group {}: smallest singular value of B1ᵀQ3 is {:.3e}",
                g + 1,
                d.local_sigma_min
            ));
        }
        loadings.push(l);
        signals.push(s);
        diagnostics.groups.push(d);
    }
    let dims = FactorDims::new(
        global.k1,
        global.k2,
        diagnostics
            .groups
            .iter()
            .map(|d| (d.local_row.used, d.local_col.used))
            .collect(),
    );
    Ok(FitResult {
        loadings: LoadingSet { groups: loadings },
        dims,
        signals,
        diagnostics,
    })
}

/// Recovers factors and signals for new observations with loadings held
/// fixed (used for out-of-sample evaluation).
pub fn apply_loadings(x: &[Mat], loadings: &GroupLoadings, group: usize) -> Result<SignalParts> {
    let proj = project(x, &loadings.b1, &loadings.b2)?;
    recover_signals(x, &proj.y1, loadings, group).map(|(parts, _)| parts)
}
