//! Differencing and standardization of every (group, row, column) series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{GroupSeries, GroupedPanel, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Step {
    /// `x_t - x_{t-1}`; drops the first time point.
    Difference,
    /// Mean 0 and unit standard deviation (divisor `T`).
    Standardize,
}

/// Applies `steps` in order.
pub fn preprocess(panel: &GroupedPanel, steps: &[Step]) -> Result<GroupedPanel> {
    let mut out = panel.clone();
    for step in steps {
        out = match step {
            Step::Difference => difference(&out)?,
            Step::Standardize => standardize(&out)?,
        };
    }
    Ok(out)
}

fn difference(panel: &GroupedPanel) -> Result<GroupedPanel> {
    if panel.t() < 2 {
        return Err(Error::Shape(format!("differencing needs T >= 2, got {}", panel.t())));
    }
    Ok(GroupedPanel::new(
        panel
            .groups
            .iter()
            .map(|g| GroupSeries::new(g.name.clone(), g.obs.windows(2).map(|w| &w[1] - &w[0]).collect()))
            .collect(),
    ))
}

fn standardize(panel: &GroupedPanel) -> Result<GroupedPanel> {
    let t = panel.t();
    if t < 2 {
        return Err(Error::Shape(format!("standardizing needs T >= 2, got {t}")));
    }
    let mut groups = Vec::with_capacity(panel.n_groups());
    for g in &panel.groups {
        let (n, p) = (g.rows(), g.cols());
        let mut mean = Mat::zeros(n, p);
        for x in &g.obs {
            mean += x;
        }
        mean /= t as f64;
        let mut var = Mat::zeros(n, p);
        for x in &g.obs {
            var += (x - &mean).map(|d| d * d);
        }
        var /= t as f64;
        for j in 0..p {
            for a in 0..n {
                if !(var[(a, j)] > 0.0) {
                    return Err(Error::DegenerateSeries(format!(
                        "series (group {}, row {}, col {}) has zero variance",
                        g.name,
                        a + 1,
                        j + 1
                    )));
                }
            }
        }
        let sd = var.map(f64::sqrt);
        let obs = g.obs.iter().map(|x| (x - &mean).component_div(&sd)).collect();
        groups.push(GroupSeries::new(g.name.clone(), obs));
    }
    Ok(GroupedPanel::new(groups))
}
