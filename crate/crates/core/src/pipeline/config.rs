//! Versioned TOML run configuration.
//!
//! ```toml
//! version = 1
//! mode = "sweep"            # simulate | fit | sweep
//! seed = 7
//! replications = 50
//! output = "runs/table1"
//!
//! [sim]                     # data-generating process; unset keys use defaults
//! n = 20
//! p = 20
//!
//! [estimator]
//! k1 = "auto"
//! k2 = 2
//! h0 = 2
//!
//! [sweep]
//! deltas = [[0.0, 0.0, 0.0, 0.0], [0.5, 0.5, 0.5, 0.5]]
//! sizes = [[20, 20], [40, 40]]
//! t_multipliers = [0.5, 1.0, 2.0]
//! scale10 = true
//!
//! [data]                    # fit mode; without it the [sim] panel is fitted
//! path = "panel.csv"
//! difference = true
//! standardize = true
//! missing = "reject"        # reject | forward-fill | drop
//!
//! [report]
//! display_scale = 30.0
//! holdout = 0.2
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EstimatorConfig;
use crate::pipeline::io::MissingPolicy;
use crate::simulator::SimConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    Fit,
    Sweep,
}

/// Grid of simulation cells: every combination of strengths, sizes and
/// sample lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub deltas: Vec<[f64; 4]>,
    /// `(n, p)` pairs.
    pub sizes: Vec<(usize, usize)>,
    /// `T = round(multiplier * n * p)`.
    #[serde(default)]
    pub t_multipliers: Vec<f64>,
    /// Absolute sample lengths, used in addition to the multipliers.
    #[serde(default)]
    pub t_values: Vec<usize>,
    /// Adds `x10_*` columns next to the raw ones.
    #[serde(default)]
    pub scale10: bool,
}

impl SweepSpec {
    /// Sample lengths for one `(n, p)` size: explicit values first, then
    /// multipliers.
    pub fn lengths(&self, n: usize, p: usize) -> Vec<usize> {
        let mut out = self.t_values.clone();
        out.extend(self.t_multipliers.iter().map(|m| (m * (n * p) as f64).round() as usize));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub difference: bool,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default)]
    pub missing: MissingPolicy,
}

fn default_display_scale() -> f64 {
    30.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportOptions {
    /// Factor applied to the extra `*_scaled.csv` rotated-loading files;
    /// `1` skips them.
    #[serde(default = "default_display_scale")]
    pub display_scale: f64,
    /// Fraction of time points held out at the end for out-of-sample
    /// RSS/TSS.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout: Option<f64>,
    /// Write per-time factors and signal parts.
    #[serde(default = "default_true")]
    pub write_signals: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { display_scale: default_display_scale(), holdout: None, write_signals: true }
    }
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

fn default_replications() -> usize {
    50
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    pub mode: Mode,
    /// Overrides `sim.seed`; base seed of a sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSpec>,
    #[serde(default)]
    pub report: ReportOptions,
}

impl RunConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            version: CONFIG_VERSION,
            mode,
            seed: None,
            replications: default_replications(),
            output: default_output(),
            sim: None,
            estimator: EstimatorConfig::default(),
            sweep: None,
            data: None,
            report: ReportOptions::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        // relative data paths are taken relative to the config file
        if let (Some(data), Some(dir)) = (cfg.data.as_mut(), path.parent()) {
            if data.path.is_relative() {
                data.path = dir.join(&data.path);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies the seed override and propagates the seed into `sim`.
    pub fn resolve(mut self, seed: Option<u64>) -> Result<Self> {
        if seed.is_some() {
            self.seed = seed;
        }
        if let (Some(seed), Some(sim)) = (self.seed, self.sim.as_mut()) {
            sim.seed = seed;
        }
        if self.mode == Mode::Sweep && self.sim.is_none() {
            self.sim = Some(SimConfig::default());
        }
        self.validate()?;
        Ok(self)
    }

    /// Base seed for sweeps.
    pub fn base_seed(&self) -> u64 {
        self.seed.or(self.sim.as_ref().map(|s| s.seed)).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.replications < 1 {
            return bad("replications must be >= 1");
        }
        match self.mode {
            Mode::Simulate if self.sim.is_none() => return bad("mode \"simulate\" needs a [sim] table"),
            Mode::Fit if self.sim.is_none() && self.data.is_none() => {
                return bad("mode \"fit\" needs a [data] or [sim] table")
            }
            Mode::Sweep => match &self.sweep {
                None => return bad("mode \"sweep\" needs a [sweep] table"),
                Some(s) => {
                    if s.deltas.is_empty() || s.sizes.is_empty() {
                        return bad("sweep needs at least one delta tuple and one size");
                    }
                    if s.t_multipliers.is_empty() && s.t_values.is_empty() {
                        return bad("sweep needs t_multipliers or t_values");
                    }
                    if s.t_multipliers.iter().any(|m| !(*m > 0.0)) {
                        return bad("t_multipliers must be positive");
                    }
                }
            },
            _ => {}
        }
        if let Some(h) = self.report.holdout {
            if !(h > 0.0 && h < 1.0) {
                return bad("report.holdout must lie in (0, 1)");
            }
        }
        if let Some(sim) = &self.sim {
            if self.mode != Mode::Sweep {
                sim.validate()?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_example_parses() {
        let text = r#"
version = 1
mode = "sweep"
seed = 7
replications = 3
[sim]
n = 10
[estimator]
k1 = "auto"
k2 = 2
[sweep]
deltas = [[0.0, 0.0, 0.0, 0.0]]
sizes = [[10, 12]]
t_multipliers = [0.5]
t_values = [30]
"#;
        let cfg = RunConfig::from_toml(text).unwrap().resolve(None).unwrap();
        assert_eq!(cfg.sim.as_ref().unwrap().seed, 7);
        assert_eq!(cfg.sim.as_ref().unwrap().p, 20);
        assert_eq!(cfg.sweep.as_ref().unwrap().lengths(10, 12), vec![30, 60]);
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn inconsistent_configs_are_rejected() {
        assert!(RunConfig::from_toml("mode = \"sweep\"").is_err());
        assert!(RunConfig::from_toml("mode = \"fit\"").is_err());
        assert!(RunConfig::from_toml("mode = \"simulate\"\n[sim]\n").is_ok());
        assert!(RunConfig::from_toml("version = 2\nmode = \"simulate\"\n[sim]\n").is_err());
        assert!(RunConfig::from_toml("mode = \"simulate\"\nreplications = 0\n[sim]\n").is_err());
        assert!(RunConfig::from_toml("mode = \"simulate\"\ncolour = 1\n[sim]\n").is_err());
    }

    #[test]
    fn seed_override_wins() {
        let cfg = RunConfig::from_toml("mode = \"simulate\"\nseed = 3\n[sim]\nseed = 1\n").unwrap();
        assert_eq!(cfg.clone().resolve(None).unwrap().sim.unwrap().seed, 3);
        assert_eq!(cfg.resolve(Some(9)).unwrap().sim.unwrap().seed, 9);
    }
}
