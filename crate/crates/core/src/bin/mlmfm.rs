use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mlmfm::pipeline::run::{ingest_check, run, write_ingest_check};
use mlmfm::pipeline::{Mode, MissingPolicy, RunConfig};
use mlmfm::Error;

#[derive(Parser)]
#[command(name = "mlmfm", version, about = "Multilevel matrix factor model toolkit")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output` in the config).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Verb {
    /// Draw a panel from the simulation design.
    Simulate(Common),
    /// Estimate the model on data or a simulated panel and write a report.
    Fit(Common),
    /// Monte Carlo sweep over a design grid.
    Sweep(Common),
    /// Parse and validate a long-format CSV panel.
    IngestCheck {
        #[command(flatten)]
        common: Common,
        /// CSV file (defaults to `data.path` from the config).
        #[arg(short, long)]
        input: Option<PathBuf>,
        #[arg(long, value_parser = parse_missing)]
        missing: Option<MissingPolicy>,
    },
}

fn parse_missing(s: &str) -> Result<MissingPolicy, String> {
    match s {
        "reject" => Ok(MissingPolicy::Reject),
        "forward-fill" => Ok(MissingPolicy::ForwardFill),
        "drop" => Ok(MissingPolicy::Drop),
        _ => Err(format!("unknown missing-value policy {s:?}")),
    }
}

fn load(common: &Common, mode: Mode) -> Result<RunConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => return Err(Error::Config("--config is required".into())),
    };
    if cfg.mode != mode {
        return Err(Error::Config(format!(
            "config mode {:?} does not match the {:?} verb",
            cfg.mode, mode
        )));
    }
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    cfg.resolve(common.seed)
}

fn pool(threads: Option<usize>) -> Result<(), Error> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.verb {
        Verb::Simulate(c) => {
            pool(c.threads)?;
            run(&load(&c, Mode::Simulate)?)
        }
        Verb::Fit(c) => {
            pool(c.threads)?;
            run(&load(&c, Mode::Fit)?)
        }
        Verb::Sweep(c) => {
            pool(c.threads)?;
            run(&load(&c, Mode::Sweep)?)
        }
        Verb::IngestCheck { common, input, missing } => {
            pool(common.threads)?;
            let cfg = common.config.as_deref().map(RunConfig::load).transpose()?;
            let data = cfg.as_ref().and_then(|c| c.data.as_ref());
            let path = input
                .or_else(|| data.map(|d| d.path.clone()))
                .ok_or_else(|| Error::Config("ingest-check needs --input or a config with [data]".into()))?;
            let policy = missing.or(data.map(|d| d.missing)).unwrap_or_default();
            let check = ingest_check(&path, policy)?;
            if let Some(out) = common.out {
                write_ingest_check(&check, &out)?;
            }
            // a closed pipe (e.g. `| head`) is not an error worth reporting
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&check)?);
            if check.ok {
                Ok(())
            } else {
                Err(Error::InvalidPanel(check.validation.violations))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let err = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{err}");
            ExitCode::from(2)
        }
    }
}
