//! Config-driven runs: ingestion, preprocessing, sweeps and reports.

pub mod config;
pub mod io;
pub mod preprocess;
pub mod report;
pub mod run;
pub mod sweep;

pub use config::{DataSpec, Mode, ReportOptions, RunConfig, SweepSpec};
pub use io::{ingest_csv, read_panel_csv, write_panel_csv, MissingPolicy, PanelManifest};
pub use preprocess::{preprocess, Step};
pub use report::{fit_report, FitReport};
pub use sweep::{run_sweep, SweepResult};
