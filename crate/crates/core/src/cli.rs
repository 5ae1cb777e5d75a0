//! `lightint run`: scenario sweeps written to a results directory.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::collector::TraceRecord;
use crate::config::{load_config, ScenarioConfig};
use crate::metrics::{analyze, compute_metrics, MetricsSummary};
use crate::simnet::{run, RunError};
use crate::wire::Scheme;

#[derive(Debug, Parser)]
#[command(name = "lightint", version, about = "Lightweight in-band telemetry simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario or a sweep and write metrics.csv, traces.jsonl and run_meta.json.
    Run(RunArgs),
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sweep axis as KEY=V1,V2,... with KEY one of scheme, v, bf_ratio. Repeatable.
    #[arg(long = "sweep", value_name = "KEY=V1,V2,...")]
    pub sweep: Vec<String>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at {field}: {message}")]
    Config { field: String, message: String },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config { field, message } => CliError::Config { field, message },
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    Scheme(Vec<Scheme>),
    V(Vec<usize>),
    BfRatio(Vec<f64>),
}

pub fn parse_sweep(spec: &str) -> Result<SweepAxis, CliError> {
    let bad = |message: String| CliError::Config { field: "--sweep".into(), message };
    let (key, values) = spec.split_once('=').ok_or_else(|| bad(format!("expected KEY=V1,V2,..., got `{spec}`")))?;
    let values: Vec<&str> = values.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if values.is_empty() {
        return Err(bad(format!("no values for `{key}`")));
    }
    match key.trim() {
        "scheme" => values
            .iter()
            .map(|s| s.parse().map_err(|e| bad(format!("{e}"))))
            .collect::<Result<_, _>>()
            .map(SweepAxis::Scheme),
        "v" => values
            .iter()
            .map(|s| s.parse().map_err(|_| bad(format!("bad v `{s}`"))))
            .collect::<Result<_, _>>()
            .map(SweepAxis::V),
        "bf_ratio" => values
            .iter()
            .map(|s| s.parse().map_err(|_| bad(format!("bad bf_ratio `{s}`"))))
            .collect::<Result<_, _>>()
            .map(SweepAxis::BfRatio),
        other => Err(bad(format!("unknown sweep key `{other}` (expected scheme, v or bf_ratio)"))),
    }
}

/// Cartesian product of the sweep axes applied to `base`, in axis order.
pub fn expand_cells(base: &ScenarioConfig, axes: &[SweepAxis]) -> Vec<ScenarioConfig> {
    let mut cells = vec![base.clone()];
    for axis in axes {
        cells = cells
            .into_iter()
            .flat_map(|cell| {
                let variants: Vec<ScenarioConfig> = match axis {
                    SweepAxis::Scheme(values) => values
                        .iter()
                        .map(|s| ScenarioConfig { scheme: *s, ..cell.clone() })
                        .collect(),
                    SweepAxis::V(values) => values.iter().map(|v| ScenarioConfig { v: *v, ..cell.clone() }).collect(),
                    SweepAxis::BfRatio(values) => values
                        .iter()
                        .map(|r| ScenarioConfig { bf_ratio: Some(*r), bf_bits: None, ..cell.clone() })
                        .collect(),
                };
                variants
            })
            .collect();
    }
    cells
}

#[derive(Debug, Serialize)]
struct TraceLine<'a> {
    v: usize,
    bf_ratio: f64,
    #[serde(flatten)]
    trace: &'a TraceRecord,
    matches_ground_truth: bool,
}

#[derive(Debug, Serialize)]
struct RunMeta<'a> {
    version: &'static str,
    seed: u64,
    sweep: &'a [String],
    cells: usize,
    config: &'a ScenarioConfig,
}

pub struct CellResult {
    pub summary: MetricsSummary,
    traces: Vec<(TraceRecord, bool)>,
}

pub fn run_cell(cfg: &ScenarioConfig, base_dir: &Path) -> Result<CellResult, CliError> {
    let built = cfg.build(base_dir)?;
    let scenario = &built.scenario;
    let output = run(scenario)?;
    let adjacency = (scenario.scheme == Scheme::PintLite).then(|| scenario.topology.adjacency());
    let analysis = analyze(&output, scenario.scheme, adjacency).map_err(runtime)?;
    let summary = compute_metrics(&output, &analysis, scenario.scheme, scenario.v, built.bf_ratio);
    let traces = (0..analysis.traces.len())
        .map(|i| (analysis.traces[i].clone(), analysis.is_correct(i)))
        .collect();
    Ok(CellResult { summary, traces })
}

/// Runs every cell and writes the results directory. Returns the summaries
/// in output order.
pub fn execute(args: &RunArgs) -> Result<Vec<MetricsSummary>, CliError> {
    let mut base = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        base.seed = seed;
    }
    let axes = args.sweep.iter().map(|s| parse_sweep(s)).collect::<Result<Vec<_>, _>>()?;
    let cells = expand_cells(&base, &axes);
    let base_dir = args.config.parent().map(Path::to_path_buf).unwrap_or_default();

    // Validate every cell up front so config mistakes surface before any run.
    for cell in &cells {
        cell.build(&base_dir)?;
    }

    let results: Vec<Result<CellResult, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cells
            .iter()
            .map(|cell| scope.spawn(|| run_cell(cell, &base_dir)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(CliError::Runtime("simulation thread panicked".into()))))
            .collect()
    });
    let mut results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    results.sort_by(|a, b| {
        let (a, b) = (&a.summary, &b.summary);
        (a.scheme.as_str(), a.v)
            .cmp(&(b.scheme.as_str(), b.v))
            .then(a.bf_ratio.total_cmp(&b.bf_ratio))
    });

    fs::create_dir_all(&args.out).map_err(|e| runtime(format!("{}: {e}", args.out.display())))?;
    let mut csv = csv::Writer::from_path(args.out.join("metrics.csv")).map_err(runtime)?;
    for r in &results {
        csv.serialize(&r.summary).map_err(runtime)?;
    }
    csv.flush().map_err(runtime)?;

    let file = fs::File::create(args.out.join("traces.jsonl")).map_err(runtime)?;
    let mut traces = BufWriter::new(file);
    for r in &results {
        for (trace, correct) in &r.traces {
            let line = TraceLine { v: r.summary.v, bf_ratio: r.summary.bf_ratio, trace, matches_ground_truth: *correct };
            serde_json::to_writer(&mut traces, &line).map_err(runtime)?;
            traces.write_all(b"\n").map_err(runtime)?;
        }
    }
    traces.flush().map_err(runtime)?;

    let meta = RunMeta {
        version: env!("CARGO_PKG_VERSION"),
        seed: base.seed,
        sweep: &args.sweep,
        cells: results.len(),
        config: &base,
    };
    let text = serde_json::to_string_pretty(&meta).map_err(runtime)?;
    fs::write(args.out.join("run_meta.json"), text + "\n").map_err(runtime)?;

    Ok(results.into_iter().map(|r| r.summary).collect())
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cli.command {
        Command::Run(args) => match execute(&args) {
            Ok(rows) => {
                println!("wrote {} row(s) to {}", rows.len(), args.out.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code())
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn sweep_parsing() {
        assert_eq!(parse_sweep("v=1,2,3").unwrap(), SweepAxis::V(vec![1, 2, 3]));
        assert_eq!(
            parse_sweep("scheme=DLINT,PLINT").unwrap(),
            SweepAxis::Scheme(vec![Scheme::Dlint, Scheme::Plint])
        );
        assert_eq!(parse_sweep("bf_ratio=0.1,5").unwrap(), SweepAxis::BfRatio(vec![0.1, 5.0]));
        assert!(parse_sweep("k=1").is_err());
        assert!(parse_sweep("v=").is_err());
        assert!(parse_sweep("v").is_err());
    }

    #[test]
    fn cartesian_expansion() {
        let base = parse_config(
            r#"{"scheme": "PLINT", "topology": {"edges": [[1, 2, 0.1]]}, "flows": [{"src": 1, "dst": 2, "size_packets": 1}]}"#,
        )
        .unwrap();
        let axes = [SweepAxis::Scheme(vec![Scheme::Dlint, Scheme::Plint]), SweepAxis::V(vec![1, 2, 3, 4, 5])];
        let cells = expand_cells(&base, &axes);
        assert_eq!(cells.len(), 10);
        assert_eq!((cells[0].scheme, cells[0].v), (Scheme::Dlint, 1));
        assert_eq!((cells[9].scheme, cells[9].v), (Scheme::Plint, 5));
    }
}
