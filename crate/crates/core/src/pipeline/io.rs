//! Long-format CSV ingestion and CSV writers.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{GroupSeries, GroupedPanel, Mat};

/// What to do with empty or `NA`/`NaN` values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingPolicy {
    #[default]
    Reject,
    /// Carry the last observed value of the same cell forward.
    ForwardFill,
    /// Drop every time point at which any cell is missing.
    Drop,
}

/// Labels for the panel axes, in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PanelManifest {
    pub groups: Vec<String>,
    pub times: Vec<String>,
    /// Row identifiers per group.
    pub rows: Vec<Vec<String>>,
    pub cols: Vec<String>,
    /// Time points removed by [`MissingPolicy::Drop`].
    #[serde(default)]
    pub dropped_times: Vec<String>,
    /// Cells filled by [`MissingPolicy::ForwardFill`].
    #[serde(default)]
    pub filled_cells: usize,
}

/// Insertion-ordered string interner.
#[derive(Default)]
struct Labels {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Labels {
    fn id(&mut self, s: &str) -> usize {
        if let Some(&i) = self.index.get(s) {
            return i;
        }
        self.names.push(s.to_string());
        self.index.insert(s.to_string(), self.names.len() - 1);
        self.names.len() - 1
    }
}

fn parse_value(raw: &str) -> Result<Option<f64>> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    let v: f64 = s
        .parse()
        .map_err(|_| Error::Ingest(format!("cannot parse value {raw:?}")))?;
    if !v.is_finite() {
        return Err(Error::Ingest(format!("non-finite value {raw:?}")));
    }
    Ok(Some(v))
}

/// Reads a long-format panel with header `group,time,row_id,col_id,value`.
///
/// Groups, times and columns are ordered by first appearance in the file;
/// rows by first appearance within their group. Every group must cover the
/// full time x row x column grid.
pub fn read_panel_csv<R: Read>(reader: R, missing: MissingPolicy) -> Result<(GroupedPanel, PanelManifest)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let want = ["group", "time", "row_id", "col_id", "value"];
    let mut pos = [0usize; 5];
    for (k, name) in want.iter().enumerate() {
        pos[k] = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Ingest(format!("missing column {name:?}")))?;
    }

    let mut groups = Labels::default();
    let mut times = Labels::default();
    let mut cols = Labels::default();
    let mut rows: Vec<Labels> = Vec::new();
    let mut cells: HashMap<(usize, usize, usize, usize), Option<f64>> = HashMap::new();
    let mut n_records = 0usize;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        n_records += 1;
        let field = |k: usize| rec.get(pos[k]).unwrap_or("");
        let g = groups.id(field(0));
        if g == rows.len() {
            rows.push(Labels::default());
        }
        let t = times.id(field(1));
        let r = rows[g].id(field(2));
        let c = cols.id(field(3));
        let v = parse_value(field(4)).map_err(|e| Error::Ingest(format!("line {}: {e}", line + 2)))?;
        if cells.insert((g, t, r, c), v).is_some() {
            return Err(Error::Ingest(format!(
                "duplicate cell (group {:?}, time {:?}, row {:?}, col {:?})",
                field(0),
                field(1),
                field(2),
                field(3)
            )));
        }
    }
    if n_records == 0 {
        return Err(Error::Ingest("no rows".into()));
    }

    let (nt, p) = (times.names.len(), cols.names.len());
    let mut gaps = Vec::new();
    let mut n_gaps = 0usize;
    for (g, rl) in rows.iter().enumerate() {
        for t in 0..nt {
            for r in 0..rl.names.len() {
                for c in 0..p {
                    if !cells.contains_key(&(g, t, r, c)) {
                        n_gaps += 1;
                        if gaps.len() < 10 {
                            gaps.push(format!(
                                "({}, {}, {}, {})",
                                groups.names[g], times.names[t], rl.names[r], cols.names[c]
                            ));
                        }
                    }
                }
            }
        }
    }
    if n_gaps > 0 {
        return Err(Error::Ingest(format!(
            "{n_gaps} missing grid cells; first: {}",
            gaps.join(", ")
        )));
    }

    // dense grid with missing values as None
    let mut grid: Vec<Vec<Vec<Option<f64>>>> = rows
        .iter()
        .enumerate()
        .map(|(g, rl)| {
            let n = rl.names.len();
            (0..nt)
                .map(|t| {
                    let mut v = vec![None; n * p];
                    for c in 0..p {
                        for r in 0..n {
                            v[r + c * n] = cells[&(g, t, r, c)];
                        }
                    }
                    v
                })
                .collect()
        })
        .collect();

    let mut manifest = PanelManifest {
        groups: groups.names.clone(),
        times: times.names.clone(),
        rows: rows.iter().map(|l| l.names.clone()).collect(),
        cols: cols.names.clone(),
        ..PanelManifest::default()
    };
    let mut keep = vec![true; nt];
    match missing {
        MissingPolicy::Reject => {
            for (g, series) in grid.iter().enumerate() {
                for (t, v) in series.iter().enumerate() {
                    if let Some(i) = v.iter().position(Option::is_none) {
                        let n = rows[g].names.len();
                        return Err(Error::Ingest(format!(
                            "missing value at (group {}, time {}, row {}, col {})",
                            groups.names[g],
                            times.names[t],
                            rows[g].names[i % n],
                            cols.names[i / n]
                        )));
                    }
                }
            }
        }
        MissingPolicy::ForwardFill => {
            for (g, series) in grid.iter_mut().enumerate() {
                for t in 0..nt {
                    for i in 0..series[t].len() {
                        if series[t][i].is_none() {
                            if t == 0 {
                                let n = rows[g].names.len();
                                return Err(Error::Ingest(format!(
                                    "cannot forward-fill missing first value of (group {}, row {}, col {})",
                                    groups.names[g],
                                    rows[g].names[i % n],
                                    cols.names[i / n]
                                )));
                            }
                            series[t][i] = series[t - 1][i];
                            manifest.filled_cells += 1;
                        }
                    }
                }
            }
        }
        MissingPolicy::Drop => {
            for series in &grid {
                for (t, v) in series.iter().enumerate() {
                    if v.iter().any(Option::is_none) {
                        keep[t] = false;
                    }
                }
            }
            manifest.dropped_times = (0..nt).filter(|&t| !keep[t]).map(|t| times.names[t].clone()).collect();
            manifest.times = (0..nt).filter(|&t| keep[t]).map(|t| times.names[t].clone()).collect();
        }
    }

    let series = grid
        .into_iter()
        .enumerate()
        .map(|(g, s)| {
            let n = rows[g].names.len();
            let obs = s
                .into_iter()
                .zip(&keep)
                .filter(|(_, &k)| k)
                .map(|(v, _)| Mat::from_iterator(n, p, v.into_iter().map(|x| x.unwrap_or(f64::NAN))))
                .collect();
            GroupSeries::new(groups.names[g].clone(), obs)
        })
        .collect();
    Ok((GroupedPanel::new(series), manifest))
}

/// Reads a panel from a file path.
pub fn ingest_csv(path: &Path, missing: MissingPolicy) -> Result<(GroupedPanel, PanelManifest)> {
    let file = fs::File::open(path).map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?;
    read_panel_csv(file, missing)
}

/// Default labels: group names, `1..=T`, `1..=N_m`, `1..=p`.
pub fn default_manifest(panel: &GroupedPanel) -> PanelManifest {
    let nums = |n: usize| (1..=n).map(|i| i.to_string()).collect::<Vec<_>>();
    PanelManifest {
        groups: panel.groups.iter().map(|g| g.name.clone()).collect(),
        times: nums(panel.t()),
        rows: (0..panel.n_groups()).map(|m| nums(panel.rows(m))).collect(),
        cols: nums(panel.p()),
        ..PanelManifest::default()
    }
}

/// Writes a panel in the long format read by [`read_panel_csv`]. Values use
/// the shortest representation that parses back to the same `f64`.
pub fn write_panel_csv<W: Write>(panel: &GroupedPanel, manifest: &PanelManifest, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["group", "time", "row_id", "col_id", "value"])?;
    for (m, g) in panel.groups.iter().enumerate() {
        for (t, x) in g.obs.iter().enumerate() {
            for a in 0..x.nrows() {
                for j in 0..x.ncols() {
                    wtr.write_record([
                        manifest.groups[m].as_str(),
                        manifest.times[t].as_str(),
                        manifest.rows[m][a].as_str(),
                        manifest.cols[j].as_str(),
                        &x[(a, j)].to_string(),
                    ])?;
                }
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Writes a matrix with a label column and a header row.
pub fn write_matrix_csv(path: &Path, m: &Mat, row_labels: &[String], col_labels: &[String]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    let mut header = vec![String::new()];
    header.extend(col_labels.iter().cloned());
    wtr.write_record(&header)?;
    for i in 0..m.nrows() {
        let mut rec = vec![row_labels[i].clone()];
        rec.extend((0..m.ncols()).map(|j| m[(i, j)].to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes a matrix path in long format `time,row,col,value`.
pub fn write_series_csv(path: &Path, series: &[Mat], times: &[String]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["time", "row", "col", "value"])?;
    for (t, x) in series.iter().enumerate() {
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                wtr.write_record([
                    times[t].clone(),
                    (i + 1).to_string(),
                    (j + 1).to_string(),
                    x[(i, j)].to_string(),
                ])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}
