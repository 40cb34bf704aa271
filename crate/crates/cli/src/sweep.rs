use std::cmp::Ordering;

use clap::ValueEnum;
use focus_core::{BlockConfig, FocusConfig, PerfReport, RetentionSchedule};
use rayon::prelude::*;

use crate::run::{execute, RunSpec};
use crate::{create_dir, write_file, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    /// Output-tile row count `tile.m`.
    #[value(name = "tile_m")]
    TileM,
    /// Gathered vector length; sets both `tile.n` and `tile.k`.
    #[value(name = "vector_len")]
    VectorLen,
    /// Similarity window, written `FxHxW`.
    #[value(name = "block_shape")]
    BlockShape,
    /// Scatter accumulator count.
    #[value(name = "accumulators")]
    Accumulators,
    /// `none` or `layer:fraction` pairs joined by `;`.
    #[value(name = "retention_schedule")]
    RetentionSchedule,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::TileM => "tile_m",
            SweepParam::VectorLen => "vector_len",
            SweepParam::BlockShape => "block_shape",
            SweepParam::Accumulators => "accumulators",
            SweepParam::RetentionSchedule => "retention_schedule",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: RunSpec,
    pub param: SweepParam,
    pub values: Vec<String>,
}

pub const SWEEP_HEADER: &str = "param,value,metric,metric_value";

fn parse_count(param: SweepParam, value: &str) -> CliResult<usize> {
    value.trim().parse().map_err(|_| {
        CliError::validation(format!(
            "--sweep-values: {} expects an integer, got {value:?}",
            param.name()
        ))
    })
}

fn parse_block(value: &str) -> CliResult<BlockConfig> {
    let parts: Vec<&str> = value.trim().split('x').collect();
    let bad = || CliError::validation(format!("--sweep-values: block_shape expects FxHxW, got {value:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let n: Vec<usize> = parts
        .iter()
        .map(|p| p.parse().map_err(|_| bad()))
        .collect::<CliResult<_>>()?;
    Ok(BlockConfig::new(n[0], n[1], n[2]))
}

fn parse_schedule(value: &str) -> CliResult<RetentionSchedule> {
    let value = value.trim();
    if value == "none" || value.is_empty() {
        return Ok(RetentionSchedule::none());
    }
    let bad = || {
        CliError::validation(format!(
            "--sweep-values: retention_schedule expects layer:fraction pairs joined by ';', got {value:?}"
        ))
    };
    let entries = value
        .split(';')
        .map(|pair| {
            let (l, f) = pair.split_once(':').ok_or_else(bad)?;
            Ok((
                l.trim().parse().map_err(|_| bad())?,
                f.trim().parse().map_err(|_| bad())?,
            ))
        })
        .collect::<CliResult<Vec<(usize, f64)>>>()?;
    Ok(RetentionSchedule(entries))
}

/// Returns `base` with one swept parameter replaced, validated.
pub fn apply_sweep_value(base: &FocusConfig, param: SweepParam, value: &str) -> CliResult<FocusConfig> {
    let mut cfg = base.clone();
    match param {
        SweepParam::TileM => cfg.tile.m = parse_count(param, value)?,
        SweepParam::VectorLen => {
            let v = parse_count(param, value)?;
            cfg.tile.n = v;
            cfg.tile.k = v;
        }
        SweepParam::BlockShape => cfg.block = parse_block(value)?,
        SweepParam::Accumulators => cfg.scatter_accumulators = parse_count(param, value)?,
        SweepParam::RetentionSchedule => cfg.retention_schedule = parse_schedule(value)?,
    }
    cfg.validate()
        .map_err(|e| CliError::validation(format!("sweep point {}={value}: {e}", param.name())))?;
    Ok(cfg)
}

fn sort_key(cfg: &FocusConfig, param: SweepParam) -> Vec<f64> {
    match param {
        SweepParam::TileM => vec![cfg.tile.m as f64],
        SweepParam::VectorLen => vec![cfg.tile.n as f64],
        SweepParam::BlockShape => vec![cfg.block.bf as f64, cfg.block.bh as f64, cfg.block.bw as f64],
        SweepParam::Accumulators => vec![cfg.scatter_accumulators as f64],
        SweepParam::RetentionSchedule => cfg
            .retention_schedule
            .entries()
            .iter()
            .flat_map(|&(l, f)| [l as f64, f])
            .collect(),
    }
}

fn metrics(report: &PerfReport) -> Vec<(String, String)> {
    let mut m: Vec<(String, String)> = vec![
        ("total_cycles".into(), report.total_cycles.to_string()),
        ("gemm_cycles".into(), report.gemm_cycles.to_string()),
        ("sec_cycles".into(), report.sec_cycles.to_string()),
        ("sic_cycles".into(), report.sic_cycles.to_string()),
        ("stall_cycles".into(), report.stall_cycles.to_string()),
        ("dram_bytes_read".into(), report.dram_bytes_read.to_string()),
        ("dram_bytes_written".into(), report.dram_bytes_written.to_string()),
        ("ops_dense".into(), report.ops_dense.to_string()),
        ("ops_actual".into(), report.ops_actual.to_string()),
        ("sparsity".into(), report.sparsity.to_string()),
        ("pe_utilization".into(), report.pe_utilization.to_string()),
        ("energy_mj".into(), report.energy_mj.to_string()),
    ];
    if let Some(v) = report.ffn_sparsity {
        m.push(("ffn_sparsity".into(), v.to_string()));
    }
    if let Some(v) = report.mean_compact_p {
        m.push(("mean_compact_p".into(), v.to_string()));
    }
    for b in &report.buffers.buffers {
        m.push((format!("peak_{}_bytes", b.name), b.peak_bytes.to_string()));
    }
    m.push((
        "buffer_overflow".into(),
        u8::from(report.buffers.any_overflow()).to_string(),
    ));
    m
}

/// Runs every sweep point (in parallel) and returns the long-form CSV,
/// sorted by swept value. Also writes it to `<out>/sweep.csv`.
pub fn cmd_sweep(spec: &SweepSpec) -> CliResult<String> {
    if spec.values.is_empty() {
        return Err(CliError::validation("--sweep-values is empty"));
    }
    let mut points: Vec<(String, FocusConfig)> = spec
        .values
        .iter()
        .map(|v| {
            Ok((
                v.trim().to_string(),
                apply_sweep_value(&spec.base.config, spec.param, v)?,
            ))
        })
        .collect::<CliResult<_>>()?;
    points.sort_by(|a, b| {
        sort_key(&a.1, spec.param)
            .partial_cmp(&sort_key(&b.1, spec.param))
            .unwrap_or(Ordering::Equal)
    });

    let reports: Vec<CliResult<PerfReport>> = points
        .par_iter()
        .map(|(value, cfg)| {
            let point = RunSpec {
                config: cfg.clone(),
                oracle: false,
                ..spec.base.clone()
            };
            execute(&point).map(|o| o.report).map_err(|e| {
                let msg = format!("sweep point {}={value}: {e}", spec.param.name());
                match e {
                    CliError::Validation(_) => CliError::Validation(msg),
                    CliError::Internal(_) => CliError::Internal(msg),
                    io => io,
                }
            })
        })
        .collect();

    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    for ((value, _), report) in points.iter().zip(reports) {
        for (metric, v) in metrics(&report?) {
            csv.push_str(&format!("{},{value},{metric},{v}\n", spec.param.name()));
        }
    }
    create_dir(&spec.base.out)?;
    write_file(&spec.base.out.join("sweep.csv"), &csv)?;
    Ok(csv)
}
