//! Python bindings. Matrices cross the boundary as nested lists of floats
//! (row-major), so numpy arrays go in through `.tolist()`.

use std::collections::HashMap;
use std::path::PathBuf;

use mlmfm::metrics;
use mlmfm::pipeline::{ingest_csv, MissingPolicy};
use mlmfm::simulator::{simulate as run_simulation, SimConfig};
use mlmfm::types::DirectionDiagnostics;
use mlmfm::{EstimatorConfig, FitResult, GroupSeries, GroupedPanel, Mat};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

type Rows = Vec<Vec<f64>>;

fn py_err(e: mlmfm::Error) -> PyErr {
    PyValueError::new_err(format!("{}: {e}", e.kind()))
}

fn to_mat(rows: &[Vec<f64>]) -> PyResult<Mat> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if n == 0 || p == 0 {
        return Err(PyValueError::new_err("empty matrix"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != p) {
        return Err(PyValueError::new_err(format!("ragged matrix: row {i} has {} entries, expected {p}", rows[i].len())));
    }
    Ok(Mat::from_fn(n, p, |i, j| rows[i][j]))
}

fn from_mat(m: &Mat) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn to_series(obs: &[Rows]) -> PyResult<Vec<Mat>> {
    obs.iter().map(|x| to_mat(x)).collect()
}

fn from_series(obs: &[Mat]) -> Vec<Rows> {
    obs.iter().map(from_mat).collect()
}

/// A grouped matrix panel: `groups[m][t]` is an `N_m x p` matrix.
#[pyclass(name = "Panel", frozen)]
pub struct PyPanel {
    inner: GroupedPanel,
}

#[pymethods]
impl PyPanel {
    #[new]
    #[pyo3(signature = (groups, names=None))]
    fn new(groups: Vec<Vec<Rows>>, names: Option<Vec<String>>) -> PyResult<Self> {
        if let Some(n) = &names {
            if n.len() != groups.len() {
                return Err(PyValueError::new_err(format!("{} names for {} groups", n.len(), groups.len())));
            }
        }
        let series = groups
            .iter()
            .enumerate()
            .map(|(m, obs)| {
                let name = names.as_ref().map_or_else(|| format!("group{}", m + 1), |n| n[m].clone());
                Ok(GroupSeries::new(name, to_series(obs)?))
            })
            .collect::<PyResult<Vec<_>>>()?;
        let inner = GroupedPanel::try_new(series).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_groups(&self) -> usize {
        self.inner.n_groups()
    }

    #[getter]
    fn t(&self) -> usize {
        self.inner.t()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn rows(&self) -> Vec<usize> {
        (0..self.inner.n_groups()).map(|m| self.inner.rows(m)).collect()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.groups.iter().map(|g| g.name.clone()).collect()
    }

    fn group(&self, m: usize) -> PyResult<Vec<Rows>> {
        let g = self.inner.groups.get(m).ok_or_else(|| PyValueError::new_err(format!("no group {m}")))?;
        Ok(from_series(&g.obs))
    }

    /// Returns `(violations, warnings)`; a fit needs no violations.
    fn validate(&self) -> (Vec<String>, Vec<String>) {
        let r = mlmfm::validate_panel(&self.inner);
        (r.violations, r.warnings)
    }

    fn __repr__(&self) -> String {
        format!("Panel(groups={}, t={}, p={}, rows={:?})", self.n_groups(), self.t(), self.p(), self.rows())
    }
}

/// Output of `fit`.
#[pyclass(name = "FitResult", frozen)]
pub struct PyFitResult {
    inner: FitResult,
}

fn diag_dict(d: &DirectionDiagnostics) -> HashMap<&'static str, Vec<f64>> {
    HashMap::from([("ladder", d.ladder.clone()), ("ratios", d.ratios.clone())])
}

#[pymethods]
impl PyFitResult {
    /// `(k1, k2, [(r1, r2), ...])`
    #[getter]
    fn dims(&self) -> (usize, usize, Vec<(usize, usize)>) {
        let d = &self.inner.dims;
        (d.k1, d.k2, d.local.clone())
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.diagnostics.warnings.clone()
    }

    /// Orthonormal loadings of group `m`: keys `q1`, `q2`, `q3`, `q4`.
    fn loadings(&self, m: usize) -> PyResult<HashMap<&'static str, Rows>> {
        let g = self.inner.loadings.groups.get(m).ok_or_else(|| PyValueError::new_err(format!("no group {m}")))?;
        Ok(HashMap::from([("q1", from_mat(&g.q1)), ("q2", from_mat(&g.q2)), ("q3", from_mat(&g.q3)), ("q4", from_mat(&g.q4))]))
    }

    /// One signal path of group `m`: `s`, `z`, `psi`, `phi` or `residual`.
    fn signal(&self, m: usize, kind: &str) -> PyResult<Vec<Rows>> {
        let s = self.inner.signals.get(m).ok_or_else(|| PyValueError::new_err(format!("no group {m}")))?;
        let series = match kind {
            "s" => &s.s,
            "z" => &s.z,
            "psi" => &s.psi,
            "phi" => &s.phi,
            "residual" => &s.residual,
            _ => return Err(PyValueError::new_err(format!("unknown signal {kind:?}"))),
        };
        Ok(from_series(series))
    }

    /// Eigenvalue ladders and ratio curves per direction of group `m`.
    fn diagnostics(&self, m: usize) -> PyResult<HashMap<&'static str, HashMap<&'static str, Vec<f64>>>> {
        let d = self.inner.diagnostics.groups.get(m).ok_or_else(|| PyValueError::new_err(format!("no group {m}")))?;
        Ok(HashMap::from([
            ("global_row", diag_dict(&d.global_row)),
            ("global_col", diag_dict(&d.global_col)),
            ("local_row", diag_dict(&d.local_row)),
            ("local_col", diag_dict(&d.local_col)),
        ]))
    }

    /// In-sample RSS/TSS of `psi + phi` for group `m`.
    fn rss_tss(&self, panel: &PyPanel, m: usize) -> PyResult<f64> {
        let s = self.inner.signals.get(m).ok_or_else(|| PyValueError::new_err(format!("no group {m}")))?;
        let x = &panel.inner.groups.get(m).ok_or_else(|| PyValueError::new_err(format!("no group {m}")))?.obs;
        let fitted: Vec<Mat> = s.psi.iter().zip(&s.phi).map(|(a, b)| a + b).collect();
        metrics::rss_tss(x, &fitted).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        let (k1, k2, local) = self.dims();
        format!("FitResult(k1={k1}, k2={k2}, local={local:?})")
    }
}

/// Draws a panel. With `config` (TOML text of simulator fields) the other
/// arguments are ignored. Returns the panel and the true `q1..q4` per group.
#[pyfunction]
#[pyo3(signature = (n=20, p=20, t=400, deltas=(0.0, 0.0, 0.0, 0.0), seed=1, config=None))]
#[allow(clippy::type_complexity)]
fn simulate(
    n: usize,
    p: usize,
    t: usize,
    deltas: (f64, f64, f64, f64),
    seed: u64,
    config: Option<&str>,
) -> PyResult<(PyPanel, Vec<HashMap<&'static str, Rows>>)> {
    let cfg = match config {
        Some(text) => toml::from_str::<SimConfig>(text).map_err(|e| PyValueError::new_err(format!("config: {e}")))?,
        None => SimConfig::baseline(n, p, t, [deltas.0, deltas.1, deltas.2, deltas.3], seed),
    };
    let (panel, truth) = run_simulation(&cfg).map_err(py_err)?;
    let loadings = (0..cfg.groups)
        .map(|m| {
            HashMap::from([
                ("q1", from_mat(&truth.q1[m])),
                ("q2", from_mat(&truth.q2[m])),
                ("q3", from_mat(&truth.q3[m])),
                ("q4", from_mat(&truth.q4[m])),
            ])
        })
        .collect();
    Ok((PyPanel { inner: panel }, loadings))
}

/// Fits the model. Omitted ranks are estimated from the eigenvalue ratios.
#[pyfunction]
#[pyo3(signature = (panel, k1=None, k2=None, local=None, h0=2))]
fn fit(
    py: Python<'_>,
    panel: &PyPanel,
    k1: Option<usize>,
    k2: Option<usize>,
    local: Option<Vec<(usize, usize)>>,
    h0: usize,
) -> PyResult<PyFitResult> {
    let cfg = EstimatorConfig { k1, k2, local, h0 };
    let inner = py.detach(|| mlmfm::fit(&panel.inner, &cfg)).map_err(py_err)?;
    Ok(PyFitResult { inner })
}

/// Reads a long-format CSV (`group,time,row_id,col_id,value`).
#[pyfunction]
#[pyo3(signature = (path, missing="reject"))]
fn read_csv(path: PathBuf, missing: &str) -> PyResult<PyPanel> {
    let policy = match missing {
        "reject" => MissingPolicy::Reject,
        "forward-fill" => MissingPolicy::ForwardFill,
        "drop" => MissingPolicy::Drop,
        _ => return Err(PyValueError::new_err(format!("unknown missing policy {missing:?}"))),
    };
    let (inner, _) = ingest_csv(&path, policy).map_err(py_err)?;
    Ok(PyPanel { inner })
}

/// Distance in [0, 1] between the column spaces of two orthonormal bases.
#[pyfunction]
fn subspace_distance(a: Rows, b: Rows) -> PyResult<f64> {
    metrics::subspace_distance(&to_mat(&a)?, &to_mat(&b)?).map_err(py_err)
}

/// Rank from the eigenvalue-ratio rule over a descending ladder.
#[pyfunction]
fn estimate_rank(ladder: Vec<f64>, dim_cap: usize) -> PyResult<usize> {
    mlmfm::global::estimate_rank(&ladder, dim_cap).map_err(py_err)
}

/// `1 - RSS/TSS` over a series of matrices.
#[pyfunction]
fn rss_tss(x: Vec<Rows>, fitted: Vec<Rows>) -> PyResult<f64> {
    metrics::rss_tss(&to_series(&x)?, &to_series(&fitted)?).map_err(py_err)
}

#[pyfunction]
fn parameter_count(k1: usize, k2: usize, r1: usize, r2: usize, n: usize, p: usize) -> HashMap<&'static str, usize> {
    let c = metrics::parameter_count(k1, k2, r1, r2, n, p);
    HashMap::from([("factors", c.factors), ("loading_params", c.loading_params), ("vectorized_params", c.vectorized_params)])
}

#[pymodule]
fn pymlmfm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPanel>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(read_csv, m)?)?;
    m.add_function(wrap_pyfunction!(subspace_distance, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_rank, m)?)?;
    m.add_function(wrap_pyfunction!(rss_tss, m)?)?;
    m.add_function(wrap_pyfunction!(parameter_count, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let rows = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
        let m = to_mat(&rows).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (2, 3));
        assert_eq!(m[(1, 0)], 4.0);
        assert_eq!(from_mat(&m), rows);
    }

    #[test]
    fn ragged_and_empty_rejected() {
        assert!(to_mat(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(to_mat(&[]).is_err());
    }
}
