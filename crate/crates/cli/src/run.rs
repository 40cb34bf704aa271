use std::path::{Path, PathBuf};

use clap::ValueEnum;
use focus_core::layer::{random_weights, run_pipeline};
use focus_core::oracle::{dense_forward, max_abs_error};
use focus_core::perf::{evaluate_functional, evaluate_timing};
use focus_core::stats::LayerStats;
use focus_core::trace::{encode_trace, generate_synthetic_trace, read_sparsity_trace, read_trace, SparsityRecord};
use focus_core::{FocusConfig, PerfReport, SparsityTrace, TokenGrid, TraceGenConfig};
use serde::Serialize;

use crate::{create_dir, write_file, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Run the arithmetic and derive cycles from the recorded work.
    Functional,
    /// Derive cycles from a layer-wise sparsity CSV only.
    Timing,
    /// Functional run, then a timing pass over the sparsity it recorded.
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceSource {
    Trace(PathBuf),
    Sparsity(PathBuf),
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub config: FocusConfig,
    pub source: TraceSource,
    pub mode: Mode,
    pub oracle: bool,
    pub out: PathBuf,
    /// Seed of the random layer weights.
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: PerfReport,
    /// Timing-mode report over the recorded sparsity (`both` mode).
    pub timing: Option<PerfReport>,
    pub sparsity: Option<SparsityTrace>,
    pub max_abs_error: Option<f32>,
    pub output: Option<TokenGrid>,
}

#[derive(Debug, Clone)]
pub struct GenSpec {
    pub gen: TraceGenConfig,
    pub output: PathBuf,
}

pub fn cmd_gen(spec: &GenSpec) -> CliResult<()> {
    let grid = generate_synthetic_trace(&spec.gen)?;
    write_file(&spec.output, encode_trace(&grid)?)
}

/// Condenses functional stats into one sparsity record per layer.
///
/// `compact_p` is the mean compact length over chunks fed from gathered
/// activations, or the full row-tile height when there were none.
pub fn sparsity_from_stats(stats: &[LayerStats], tile_m: usize) -> CliResult<SparsityTrace> {
    let records = stats
        .iter()
        .map(|s| {
            let (sum, count) = s
                .gemms
                .iter()
                .filter(|g| g.input_concentrated)
                .flat_map(|g| g.input_tiles.iter().map(move |t| (g.batch, t)))
                .fold((0usize, 0usize), |(sum, count), (batch, t)| {
                    (
                        sum + batch * t.chunk_p.iter().sum::<usize>(),
                        count + batch * t.chunk_p.len(),
                    )
                });
            let rows = (s.retained_tokens + s.text_tokens).clamp(1, tile_m);
            let compact_p = if count == 0 {
                rows
            } else {
                ((sum as f64 / count as f64).round() as usize).clamp(1, tile_m)
            };
            SparsityRecord {
                layer: s.layer,
                retained_ops: s.ops_actual,
                total_ops: s.ops_dense,
                retained_tokens: s.retained_tokens,
                compact_p,
            }
        })
        .collect();
    Ok(SparsityTrace::new(records)?)
}

fn load_trace(path: &Path, cfg: &FocusConfig) -> CliResult<TokenGrid> {
    let grid = read_trace(path).map_err(|e| CliError::at(path, e))?;
    grid.with_dims(cfg.dims).map_err(|e| CliError::at(path, e))
}

fn check_mode(spec: &RunSpec) -> CliResult<()> {
    match (&spec.source, spec.mode) {
        (TraceSource::Sparsity(_), Mode::Functional | Mode::Both) => Err(CliError::validation(
            "--mode functional/both needs --trace; a sparsity CSV only drives --mode timing",
        )),
        (TraceSource::Trace(_), Mode::Timing) => Err(CliError::validation(
            "--mode timing needs --sparsity; use --mode both to time a functional run",
        )),
        (TraceSource::Sparsity(_), Mode::Timing) if spec.oracle => {
            Err(CliError::validation("--oracle needs a functional run (--trace)"))
        }
        _ => Ok(()),
    }
}

/// Runs a `RunSpec` without touching the output directory.
pub fn execute(spec: &RunSpec) -> CliResult<RunOutcome> {
    spec.config.validate()?;
    check_mode(spec)?;
    let cfg = &spec.config;
    match &spec.source {
        TraceSource::Sparsity(path) => {
            let trace = read_sparsity_trace(path).map_err(|e| CliError::at(path, e))?;
            let report = evaluate_timing(cfg, &trace).map_err(|e| CliError::at(path, e))?;
            Ok(RunOutcome {
                report,
                timing: None,
                sparsity: Some(trace),
                max_abs_error: None,
                output: None,
            })
        }
        TraceSource::Trace(path) => {
            let grid = load_trace(path, cfg)?;
            let weights = random_weights(cfg.num_layers, cfg.dims.d_model, cfg.ffn_dim(), spec.seed);
            let run = run_pipeline(&grid, &weights, cfg)?;
            let report = evaluate_functional(cfg, &run.stats);
            let max_abs_error = if spec.oracle {
                let reference = dense_forward(&grid, &weights, cfg)?;
                Some(max_abs_error(&run.output.grid, &reference)?)
            } else {
                None
            };
            let (timing, sparsity) = if spec.mode == Mode::Both {
                let sparsity = sparsity_from_stats(&run.stats, cfg.tile.m)?;
                (Some(evaluate_timing(cfg, &sparsity)?), Some(sparsity))
            } else {
                (None, None)
            };
            Ok(RunOutcome {
                report,
                timing,
                sparsity,
                max_abs_error,
                output: Some(run.output.grid),
            })
        }
    }
}

#[derive(Serialize)]
struct OracleSummary {
    max_abs_error: f32,
    image_rows_compared: usize,
    text_rows_compared: usize,
}

/// Runs a spec and writes its reports into `spec.out`.
///
/// Always writes `report.csv` and `report.json`. Functional runs add
/// `output.fctr`; `--oracle` adds `oracle.json`; `both` adds `sparsity.csv`,
/// `timing_report.csv` and `timing_report.json`.
pub fn cmd_run(spec: &RunSpec) -> CliResult<RunOutcome> {
    let outcome = execute(spec)?;
    create_dir(&spec.out)?;
    let out = |name: &str| spec.out.join(name);
    write_file(&out("report.csv"), outcome.report.to_csv_string())?;
    write_file(&out("report.json"), outcome.report.to_json_string() + "\n")?;
    if let Some(grid) = &outcome.output {
        write_file(&out("output.fctr"), encode_trace(grid)?)?;
        if let Some(err) = outcome.max_abs_error {
            let summary = OracleSummary {
                max_abs_error: err,
                image_rows_compared: grid.image_rows(),
                text_rows_compared: grid.text().rows(),
            };
            let json = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Internal(e.to_string()))?;
            write_file(&out("oracle.json"), json + "\n")?;
        }
    }
    if let (Some(timing), Some(sparsity)) = (&outcome.timing, &outcome.sparsity) {
        write_file(&out("sparsity.csv"), sparsity.to_csv_string())?;
        write_file(&out("timing_report.csv"), timing.to_csv_string())?;
        write_file(&out("timing_report.json"), timing.to_json_string() + "\n")?;
    }
    Ok(outcome)
}
