//! Full-fit report: loadings, eigen diagnostics, correlation progression,
//! fit proportions and parameter counts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{
    correlation_summary, model_parameter_count, rss_tss, rss_tss_pooled, CorrelationSummary, ModelParameterCount,
};
use crate::model::{apply_loadings, fit, EstimatorConfig};
use crate::numerics::varimax;
use crate::pipeline::config::ReportOptions;
use crate::pipeline::io::{write_matrix_csv, write_series_csv, PanelManifest};
use crate::signal::fitted_values;
use crate::types::{FitResult, GroupSeries, GroupedPanel, Mat, DIRECTIONS};

pub const LOADING_NAMES: [&str; 4] = ["q1", "q2", "q3", "q4"];

/// Average correlations of the raw data and of the residuals after
/// removing the global signal and then both signal parts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationProgression {
    pub raw: CorrelationSummary,
    pub post_global: CorrelationSummary,
    pub post_local: CorrelationSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitQuality {
    /// In-sample RSS/TSS per group.
    pub rss_tss: Vec<f64>,
    pub rss_tss_pooled: f64,
    /// Out-of-sample RSS/TSS on the held-out tail, when requested.
    pub holdout_rss_tss: Option<Vec<f64>>,
    pub holdout_rss_tss_pooled: Option<f64>,
    /// Number of time points used for estimation.
    pub t_fit: usize,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub fit: FitResult,
    /// Varimax-rotated `Q1..Q4` per group.
    pub rotated: Vec<[Mat; 4]>,
    pub correlations: CorrelationProgression,
    pub quality: FitQuality,
    pub parameters: ModelParameterCount,
}

fn split_panel(panel: &GroupedPanel, t_fit: usize) -> (GroupedPanel, GroupedPanel) {
    let part = |r: std::ops::Range<usize>| {
        GroupedPanel::new(
            panel
                .groups
                .iter()
                .map(|g| GroupSeries::new(g.name.clone(), g.obs[r.clone()].to_vec()))
                .collect(),
        )
    };
    (part(0..t_fit), part(t_fit..panel.t()))
}

/// Fits the model and assembles every report quantity. With a holdout
/// fraction the loadings are estimated on the leading time points only and
/// the tail is evaluated with loadings held fixed.
pub fn fit_report(panel: &GroupedPanel, est: &EstimatorConfig, opts: &ReportOptions) -> Result<FitReport> {
    let t = panel.t();
    let t_fit = match opts.holdout {
        Some(h) => {
            let k = ((1.0 - h) * t as f64).round() as usize;
            if k < 3 || t - k < 2 {
                return Err(Error::Config(format!("holdout {h} leaves too few time points of {t}")));
            }
            k
        }
        None => t,
    };
    let (train, test) = split_panel(panel, t_fit);
    let fitted = fit(&train, est)?;

    let rotated = fitted
        .loadings
        .groups
        .iter()
        .map(|l| [&l.q1, &l.q2, &l.q3, &l.q4].map(|q| varimax(q, 100, 1e-8).rotated))
        .collect();

    let correlations = CorrelationProgression {
        raw: correlation_summary(&train)?,
        post_global: correlation_summary(&fitted.post_global_panel(&train))?,
        post_local: correlation_summary(&fitted.residual_panel(&train))?,
    };

    let fitted_paths: Vec<Vec<Mat>> = fitted.signals.iter().map(fitted_values).collect();
    let rss: Vec<f64> = train
        .groups
        .iter()
        .zip(&fitted_paths)
        .map(|(g, f)| rss_tss(&g.obs, f))
        .collect::<Result<_>>()?;
    let pairs: Vec<(&[Mat], &[Mat])> =
        train.groups.iter().zip(&fitted_paths).map(|(g, f)| (g.obs.as_slice(), f.as_slice())).collect();
    let pooled = rss_tss_pooled(&pairs)?;

    let (holdout, holdout_pooled) = if t_fit < t {
        let mut paths = Vec::with_capacity(test.n_groups());
        for (m, g) in test.groups.iter().enumerate() {
            let parts = apply_loadings(&g.obs, &fitted.loadings.groups[m], m)?;
            paths.push(fitted_values(&parts));
        }
        let per: Vec<f64> =
            test.groups.iter().zip(&paths).map(|(g, f)| rss_tss(&g.obs, f)).collect::<Result<_>>()?;
        let pairs: Vec<(&[Mat], &[Mat])> =
            test.groups.iter().zip(&paths).map(|(g, f)| (g.obs.as_slice(), f.as_slice())).collect();
        (Some(per), Some(rss_tss_pooled(&pairs)?))
    } else {
        (None, None)
    };

    let rows: Vec<usize> = (0..panel.n_groups()).map(|m| panel.rows(m)).collect();
    let parameters = model_parameter_count(&fitted.dims, &rows, panel.p());
    Ok(FitReport {
        rotated,
        correlations,
        quality: FitQuality {
            rss_tss: rss,
            rss_tss_pooled: pooled,
            holdout_rss_tss: holdout,
            holdout_rss_tss_pooled: holdout_pooled,
            t_fit,
        },
        parameters,
        fit: fitted,
    })
}

fn factor_labels(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}{i}")).collect()
}

fn write_correlations(path: &Path, c: &CorrelationSummary) -> Result<()> {
    let m = c.names.len();
    let mat = Mat::from_fn(m, m, |i, j| c.values[i][j]);
    write_matrix_csv(path, &mat, &c.names, &c.names)
}

/// Writes the report under `dir` and returns the written paths relative to
/// `dir`, in writing order.
pub fn write_report(
    report: &FitReport,
    manifest: &PanelManifest,
    dir: &Path,
    opts: &ReportOptions,
) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for sub in ["loadings", "diagnostics", "correlations"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    let fit = &report.fit;
    let times = &manifest.times[..report.quality.t_fit];

    for (m, (l, rot)) in fit.loadings.groups.iter().zip(&report.rotated).enumerate() {
        let name = &manifest.groups[m];
        let row_labels = &manifest.rows[m];
        let raw = [&l.q1, &l.q2, &l.q3, &l.q4];
        for (i, key) in LOADING_NAMES.iter().enumerate() {
            let labels = if i % 2 == 0 { row_labels } else { &manifest.cols };
            let cols = factor_labels("f", raw[i].ncols());
            let mut emit = |suffix: &str, mat: &Mat| -> Result<()> {
                let rel = PathBuf::from("loadings").join(format!("{name}_{key}{suffix}.csv"));
                write_matrix_csv(&dir.join(&rel), mat, labels, &cols)?;
                files.push(rel);
                Ok(())
            };
            emit("", raw[i])?;
            emit("_varimax", &rot[i])?;
            if opts.display_scale != 1.0 {
                emit("_varimax_scaled", &(&rot[i] * opts.display_scale))?;
            }
        }

        let diag = &fit.diagnostics.groups[m];
        for dir_name in DIRECTIONS {
            let d = diag.direction(dir_name).expect("known direction");
            let rel = PathBuf::from("diagnostics").join(format!("{name}_{dir_name}.csv"));
            let mut wtr = csv::Writer::from_path(dir.join(&rel))?;
            wtr.write_record(["index", "eigenvalue", "ratio"])?;
            for (i, v) in d.ladder.iter().enumerate() {
                let ratio = d.ratios.get(i).map(f64::to_string).unwrap_or_default();
                wtr.write_record([(i + 1).to_string(), v.to_string(), ratio])?;
            }
            wtr.flush()?;
            files.push(rel);
        }

        if opts.write_signals {
            fs::create_dir_all(dir.join("signals"))?;
            let parts = &fit.signals[m];
            for (key, series) in [("s", &parts.s), ("z", &parts.z), ("psi", &parts.psi), ("phi", &parts.phi)] {
                let rel = PathBuf::from("signals").join(format!("{name}_{key}.csv"));
                write_series_csv(&dir.join(&rel), series, times)?;
                files.push(rel);
            }
        }
    }

    let rel = PathBuf::from("diagnostics").join("ranks.csv");
    let mut wtr = csv::Writer::from_path(dir.join(&rel))?;
    wtr.write_record([
        "group", "k1_hat", "k2_hat", "r1_hat", "r2_hat", "k1", "k2", "r1", "r2", "sigma_min_b1q3",
    ])?;
    for (m, d) in fit.diagnostics.groups.iter().enumerate() {
        let (a, b, c, e) = d.estimated_dims();
        let (r1, r2) = fit.dims.local[m];
        let mut rec = vec![manifest.groups[m].clone()];
        rec.extend([a, b, c, e, fit.dims.k1, fit.dims.k2, r1, r2].map(|v| v.to_string()));
        rec.push(d.local_sigma_min.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    files.push(rel);

    for (key, c) in [
        ("raw", &report.correlations.raw),
        ("post_global", &report.correlations.post_global),
        ("post_local", &report.correlations.post_local),
    ] {
        let rel = PathBuf::from("correlations").join(format!("{key}.csv"));
        write_correlations(&dir.join(&rel), c)?;
        files.push(rel);
    }

    let rel = PathBuf::from("summary.csv");
    let mut wtr = csv::Writer::from_path(dir.join(&rel))?;
    wtr.write_record([
        "group", "rss_tss", "holdout_rss_tss", "factors", "loading_params", "vectorized_params",
    ])?;
    let q = &report.quality;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (m, pc) in report.parameters.groups.iter().enumerate() {
        wtr.write_record([
            manifest.groups[m].clone(),
            q.rss_tss[m].to_string(),
            opt(q.holdout_rss_tss.as_ref().map(|h| h[m])),
            pc.factors.to_string(),
            pc.loading_params.to_string(),
            pc.vectorized_params.to_string(),
        ])?;
    }
    let p = &report.parameters;
    wtr.write_record([
        "all".to_string(),
        q.rss_tss_pooled.to_string(),
        opt(q.holdout_rss_tss_pooled),
        p.total_factors.to_string(),
        p.total_loading_params.to_string(),
        p.groups.iter().map(|g| g.vectorized_params).sum::<usize>().to_string(),
    ])?;
    wtr.flush()?;
    files.push(rel);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::io::default_manifest;
    use crate::simulator::{simulate, SimConfig};

    fn panel() -> GroupedPanel {
        simulate(&SimConfig::baseline(10, 8, 120, [0.0; 4], 5)).unwrap().0
    }

    #[test]
    fn report_quantities_are_consistent() {
        let p = panel();
        let est = EstimatorConfig::with_dims(&SimConfig::baseline(10, 8, 120, [0.0; 4], 5).dims);
        let r = fit_report(&p, &est, &ReportOptions::default()).unwrap();
        assert_eq!(r.rotated.len(), 3);
        for (rot, l) in r.rotated.iter().zip(&r.fit.loadings.groups) {
            assert!(crate::types::orthonormality_error(&rot[0]) < 1e-10);
            assert!(crate::metrics::subspace_distance(&rot[0], &l.q1).unwrap() < 1e-7);
        }
        assert!(r.quality.rss_tss.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(r.quality.holdout_rss_tss.is_none());
        assert_eq!(r.parameters.groups[0].factors, 10);
    }

    #[test]
    fn holdout_is_evaluated_out_of_sample() {
        let p = panel();
        let opts = ReportOptions { holdout: Some(0.25), ..ReportOptions::default() };
        let r = fit_report(&p, &EstimatorConfig::default(), &opts).unwrap();
        assert_eq!(r.quality.t_fit, 90);
        let h = r.quality.holdout_rss_tss.as_ref().unwrap();
        assert_eq!(h.len(), 3);
        assert!(h.iter().all(|v| *v < 1.0));
    }

    #[test]
    fn written_files_exist() {
        let p = panel();
        let dir = tempfile::tempdir().unwrap();
        let opts = ReportOptions::default();
        let r = fit_report(&p, &EstimatorConfig::default(), &opts).unwrap();
        let files = write_report(&r, &default_manifest(&p), dir.path(), &opts).unwrap();
        // 3 groups x (4 loadings x 3 variants + 4 diagnostics + 4 signals) + ranks + 3 correlations + summary
        assert_eq!(files.len(), 3 * (12 + 4 + 4) + 5);
        assert!(files.iter().all(|f| dir.path().join(f).is_file()));
    }
}
