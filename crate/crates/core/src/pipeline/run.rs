//! Verb implementations behind the command-line interface. Each writes
//! into one output directory and finishes with `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::config::{Mode, RunConfig};
use crate::pipeline::io::{default_manifest, ingest_csv, write_matrix_csv, write_panel_csv, write_series_csv, MissingPolicy, PanelManifest};
use crate::pipeline::preprocess::{preprocess, Step};
use crate::pipeline::report::{fit_report, write_report};
use crate::pipeline::sweep::{run_sweep, write_cells, write_replications};
use crate::simulator::simulate;
use crate::types::{validate_panel, GroupedPanel, ValidationReport};

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    version: u32,
    verb: &'a str,
    files: Vec<String>,
    warnings: Vec<String>,
}

fn rel_strings(files: &[PathBuf]) -> Vec<String> {
    let mut out: Vec<String> = files
        .iter()
        .map(|p| p.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"))
        .collect();
    out.sort();
    out
}

fn finish(dir: &Path, verb: &str, mut files: Vec<PathBuf>, warnings: Vec<String>) -> Result<()> {
    files.push(PathBuf::from("manifest.json"));
    let manifest = RunManifest { version: 1, verb, files: rel_strings(&files), warnings };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

fn start(cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.resolved"), cfg.to_toml()?)?;
    Ok(vec![PathBuf::from("config.resolved")])
}

/// Dispatches on `cfg.mode`, writing into `cfg.output`.
pub fn run(cfg: &RunConfig) -> Result<()> {
    match cfg.mode {
        Mode::Simulate => run_simulate(cfg),
        Mode::Fit => run_fit(cfg),
        Mode::Sweep => run_sweep_cmd(cfg),
    }
}

/// Writes `panel.csv` and the true loadings and factor paths.
pub fn run_simulate(cfg: &RunConfig) -> Result<()> {
    let sim = cfg.sim.as_ref().ok_or_else(|| Error::Config("simulate needs [sim]".into()))?;
    let dir = &cfg.output;
    let mut files = start(cfg, dir)?;
    let (panel, truth) = simulate(sim)?;
    let manifest = default_manifest(&panel);
    write_panel_csv(&panel, &manifest, fs::File::create(dir.join("panel.csv"))?)?;
    files.push("panel.csv".into());

    fs::create_dir_all(dir.join("truth"))?;
    for m in 0..sim.groups {
        let name = &manifest.groups[m];
        for (key, q, labels) in [
            ("q1", &truth.q1[m], &manifest.rows[m]),
            ("q2", &truth.q2[m], &manifest.cols),
            ("q3", &truth.q3[m], &manifest.rows[m]),
            ("q4", &truth.q4[m], &manifest.cols),
        ] {
            let rel = PathBuf::from("truth").join(format!("{name}_{key}.csv"));
            let cols: Vec<String> = (1..=q.ncols()).map(|i| format!("f{i}")).collect();
            write_matrix_csv(&dir.join(&rel), q, labels, &cols)?;
            files.push(rel);
        }
        let rel = PathBuf::from("truth").join(format!("{name}_local_factors.csv"));
        write_series_csv(&dir.join(&rel), &truth.f[m], &manifest.times)?;
        files.push(rel);
    }
    let rel = PathBuf::from("truth").join("global_factors.csv");
    write_series_csv(&dir.join(&rel), &truth.g, &manifest.times)?;
    files.push(rel);
    finish(dir, "simulate", files, Vec::new())
}

/// Loads (or simulates) and preprocesses the panel for a fit.
pub fn load_panel(cfg: &RunConfig) -> Result<(GroupedPanel, PanelManifest)> {
    match (&cfg.data, &cfg.sim) {
        (Some(data), _) => {
            let (panel, mut manifest) = ingest_csv(&data.path, data.missing)?;
            let mut steps = Vec::new();
            if data.difference {
                steps.push(Step::Difference);
                manifest.times.remove(0);
            }
            if data.standardize {
                steps.push(Step::Standardize);
            }
            Ok((preprocess(&panel, &steps)?, manifest))
        }
        (None, Some(sim)) => {
            let (panel, _) = simulate(sim)?;
            let manifest = default_manifest(&panel);
            Ok((panel, manifest))
        }
        (None, None) => Err(Error::Config("fit needs [data] or [sim]".into())),
    }
}

pub fn run_fit(cfg: &RunConfig) -> Result<()> {
    let (panel, manifest) = load_panel(cfg)?;
    let check = validate_panel(&panel);
    if !check.is_ok() {
        return Err(Error::InvalidPanel(check.violations));
    }
    let dir = &cfg.output;
    let mut files = start(cfg, dir)?;
    let report = fit_report(&panel, &cfg.estimator, &cfg.report)?;
    files.extend(write_report(&report, &manifest, dir, &cfg.report)?);
    let mut warnings = check.warnings;
    warnings.extend(report.fit.diagnostics.warnings.iter().cloned());
    for w in &warnings {
        log::warn!("{w}");
    }
    finish(dir, "fit", files, warnings)
}

pub fn run_sweep_cmd(cfg: &RunConfig) -> Result<()> {
    let spec = cfg.sweep.as_ref().ok_or_else(|| Error::Config("sweep needs [sweep]".into()))?;
    let template = cfg.sim.clone().unwrap_or_default();
    let dir = &cfg.output;
    let mut files = start(cfg, dir)?;
    let result = run_sweep(&template, spec, cfg.replications, cfg.base_seed(), &cfg.estimator);
    write_cells(&result.cells, spec.scale10, fs::File::create(dir.join("cells.csv"))?)?;
    write_replications(&result.replications, fs::File::create(dir.join("replications.csv"))?)?;
    files.push("cells.csv".into());
    files.push("replications.csv".into());
    let warnings = result
        .cells
        .iter()
        .filter(|c| c.failures > 0)
        .map(|c| format!("cell {} group {}: {} failed replications", c.cell.index, c.group, c.failures))
        .collect();
    finish(dir, "sweep", files, warnings)
}

/// Shape and validation summary of an input file.
#[derive(Debug, Clone, Serialize)]
pub struct IngestCheck {
    pub ok: bool,
    pub groups: usize,
    pub t: usize,
    pub p: usize,
    pub rows: Vec<usize>,
    pub manifest: PanelManifest,
    pub validation: ValidationReport,
}

pub fn ingest_check(path: &Path, missing: MissingPolicy) -> Result<IngestCheck> {
    let (panel, manifest) = ingest_csv(path, missing)?;
    let validation = validate_panel(&panel);
    Ok(IngestCheck {
        ok: validation.is_ok(),
        groups: panel.n_groups(),
        t: panel.t(),
        p: panel.p(),
        rows: (0..panel.n_groups()).map(|m| panel.rows(m)).collect(),
        manifest,
        validation,
    })
}

/// Writes the check as `ingest.json` plus `manifest.json`.
pub fn write_ingest_check(check: &IngestCheck, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("ingest.json"), serde_json::to_string_pretty(check)? + "\n")?;
    finish(dir, "ingest-check", vec!["ingest.json".into()], check.validation.warnings.clone())
}
