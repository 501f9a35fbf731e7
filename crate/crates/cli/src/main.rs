//! `ris-sic` command-line front end: single runs, parameter sweeps and
//! convergence traces, written as CSV.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use ris_sic::ao::RcCase;
use ris_sic::experiment::{convergence, sweep, Prepared, ScenarioReport, SweepAxis};
use ris_sic::scenario::ScenarioConfig;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "ris-sic",
    version,
    about = "Self-interference cancellation experiments with reflecting surfaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Average one or more cases over the configured trials.
    Run(Common),
    /// Repeat `run` over a list of values of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter to vary: n (cells), p (dBm), b (Hz) or tau (phase levels).
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values of the axis.
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        values: Vec<f64>,
    },
    /// Objective after every alternating-optimization iteration.
    Convergence(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Flat TOML file of scenario settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// ideal, continuous, discrete:<tau> or random; comma-separated for several.
    #[arg(long, value_delimiter = ',')]
    case: Vec<RcCase>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A problem with the inputs rather than with the computation.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

/// Summary CSV row shared by `run` and `sweep`.
#[derive(Debug, Serialize)]
struct ReportRow {
    axis: &'static str,
    value: Option<f64>,
    case: String,
    trials: Option<usize>,
    mean_sic_db: Option<f64>,
    std_sic_db: Option<f64>,
    mean_cfd: Option<f64>,
    mean_chd: Option<f64>,
    gain: Option<f64>,
    iters: Option<f64>,
    mean_cfd_no_ris: Option<f64>,
    status: &'static str,
    reason: String,
}

impl ReportRow {
    fn new(
        axis: &'static str,
        value: Option<f64>,
        case: RcCase,
        outcome: Result<&ScenarioReport, String>,
    ) -> Self {
        let mut row = Self {
            axis,
            value,
            case: case.to_string(),
            trials: None,
            mean_sic_db: None,
            std_sic_db: None,
            mean_cfd: None,
            mean_chd: None,
            gain: None,
            iters: None,
            mean_cfd_no_ris: None,
            status: "error",
            reason: String::new(),
        };
        let report = match outcome {
            Ok(r) => r,
            Err(reason) => {
                row.reason = reason;
                return row;
            }
        };
        let numbers = [
            report.sic_db.mean,
            report.sic_db.std,
            report.cfd.mean,
            report.chd.mean,
            report.gain.mean,
            report.iterations.mean,
            report.cfd_no_ris.mean,
        ];
        if numbers.iter().any(|x| !x.is_finite()) {
            row.reason = "non-finite result".into();
            return row;
        }
        row.trials = Some(report.trials.len());
        row.mean_sic_db = Some(report.sic_db.mean);
        row.std_sic_db = Some(report.sic_db.std);
        row.mean_cfd = Some(report.cfd.mean);
        row.mean_chd = Some(report.chd.mean);
        row.gain = Some(report.gain.mean);
        row.iters = Some(report.iterations.mean);
        row.mean_cfd_no_ris = Some(report.cfd_no_ris.mean);
        row.status = "ok";
        row
    }

    fn failed(&self) -> bool {
        self.status != "ok"
    }
}

#[derive(Debug, Serialize)]
struct TraceRow {
    case: String,
    iteration: usize,
    objective: f64,
    sic_db: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_usage(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn is_usage(e: &anyhow::Error) -> bool {
    e.chain().any(|cause| {
        cause.downcast_ref::<UsageError>().is_some()
            || matches!(
                cause.downcast_ref::<ris_sic::Error>(),
                Some(ris_sic::Error::Config { .. })
            )
    })
}

/// Returns whether every row succeeded.
fn execute(command: Command) -> anyhow::Result<bool> {
    match command {
        Command::Run(common) => {
            let (cfg, cases) = load(&common)?;
            let mut rows = Vec::with_capacity(cases.len());
            for case in cases {
                let prepared = Prepared::new(&ScenarioConfig {
                    case,
                    ..cfg.clone()
                })?;
                let outcome = prepared.run_case(case).map_err(|e| e.to_string());
                rows.push(ReportRow::new(
                    "none",
                    None,
                    case,
                    outcome.as_ref().map_err(Clone::clone),
                ));
            }
            write_rows(common.out.as_deref(), &rows)?;
            Ok(!rows.iter().any(ReportRow::failed))
        }
        Command::Sweep {
            common,
            axis,
            values,
        } => {
            let (cfg, cases) = load(&common)?;
            let points = sweep(&cfg, axis, &values, &cases)?;
            let rows: Vec<ReportRow> = points
                .iter()
                .map(|p| {
                    ReportRow::new(
                        axis.name(),
                        Some(p.value),
                        p.case,
                        p.outcome.as_ref().map_err(Clone::clone),
                    )
                })
                .collect();
            write_rows(common.out.as_deref(), &rows)?;
            Ok(!rows.iter().any(ReportRow::failed))
        }
        Command::Convergence(common) => {
            let (cfg, cases) = load(&common)?;
            let rows: Vec<TraceRow> = convergence(&cfg, &cases)?
                .into_iter()
                .map(|t| TraceRow {
                    case: t.case.to_string(),
                    iteration: t.iteration,
                    objective: t.objective,
                    sic_db: t.sic_db,
                })
                .collect();
            if rows
                .iter()
                .any(|r| !r.objective.is_finite() || !r.sic_db.is_finite())
            {
                anyhow::bail!("non-finite objective in trace");
            }
            write_rows(common.out.as_deref(), &rows)?;
            Ok(true)
        }
    }
}

/// Configuration from the file and flags, and the cases to run.
fn load(common: &Common) -> anyhow::Result<(ScenarioConfig, Vec<RcCase>)> {
    let mut cfg = match &common.config {
        Some(path) => read_config(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    if let Some(&first) = common.case.first() {
        cfg.case = first;
    }
    let cfg = cfg.validated()?;
    let cases = if common.case.is_empty() {
        vec![cfg.case]
    } else {
        common.case.clone()
    };
    Ok((cfg, cases))
}

fn read_config(path: &Path) -> anyhow::Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
}

fn write_rows<T: Serialize>(out: Option<&Path>, rows: &[T]) -> anyhow::Result<()> {
    let sink: Box<dyn Write> = match out {
        Some(path) => Box::new(
            std::fs::File::create(path)
                .with_context(|| format!("cannot create {}", path.display()))?,
        ),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut writer = csv::Writer::from_writer(sink);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}
