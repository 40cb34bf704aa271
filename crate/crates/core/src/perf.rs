//! Analytical cycle, DRAM traffic, energy and buffer-occupancy models.
//!
//! Softmax and other special-function work is assumed to overlap fully with
//! the array and is not charged.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::config::{EnergyCoeffs, FocusConfig};
use crate::error::Result;
use crate::sec::{prunes_at, sorter_cycles};
use crate::sic::matcher_cycles;
use crate::stats::{sparsity, GemmRecord, LayerStats};
use crate::trace::SparsityTrace;

/// Array cycles for one `p`-row chunk of width `width` against `ncol` output columns.
pub fn chunk_cycles(p: usize, width: usize, ncol: usize, a: usize, b: usize) -> u64 {
    p as u64 * width.div_ceil(b.max(1)) as u64 * ncol.div_ceil(a.max(1)) as u64
}

/// Cycles for one `p x K` row tile against an `n`-wide output tile, summed
/// over the `⌈K/k⌉` chunks. Equals `⌈K/b⌉·p` when `k` is a multiple of `b`
/// and `n ≤ a`.
pub fn gemm_tile_cycles(p: usize, k_dim: usize, k: usize, b: usize, n: usize, a: usize) -> u64 {
    let k = k.max(1);
    let full = (k_dim / k) as u64;
    let rem = k_dim % k;
    let per_row = full * k.div_ceil(b.max(1)) as u64 + rem.div_ceil(b.max(1)) as u64;
    p as u64 * per_row * n.div_ceil(a.max(1)) as u64
}

/// `⌈M·(M+T)·h·n / (a·b)⌉`, the image part of the `QKᵀ` phase.
pub fn attention_cycles(m: usize, t: usize, h: usize, n: usize, a: usize, b: usize) -> u64 {
    let num = m as u128 * (m + t) as u128 * h as u128 * n as u128;
    let den = (a.max(1) * b.max(1)) as u128;
    num.div_ceil(den) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SecOverlap {
    pub hidden: bool,
    pub exposed_cycles: u64,
}

pub fn sec_overlap(attn_cycles: u64, sorter_cycles: u64) -> SecOverlap {
    SecOverlap {
        hidden: sorter_cycles <= attn_cycles,
        exposed_cycles: sorter_cycles.saturating_sub(attn_cycles),
    }
}

/// Scatter-accumulator stall over a sequence of chunks with compact lengths `chunks`.
///
/// Each chunk scatters `m·n` additions at `accumulators` per cycle while the
/// array spends `p·⌈n/a⌉` cycles producing it.
pub fn scatter_stall_cycles(m: usize, n: usize, chunks: &[usize], accumulators: usize, a: usize) -> u64 {
    let consume = ((m * n) as u64).div_ceil(accumulators.max(1) as u64);
    let col_passes = n.div_ceil(a.max(1)) as u64;
    chunks
        .iter()
        .map(|&p| consume.saturating_sub(p as u64 * col_passes))
        .sum()
}

/// Bytes written for one gathered tile: values, similarity map, offsets (1 byte each).
pub fn tile_write_bytes(p: usize, n: usize, rows: usize, offset_entries: usize) -> u64 {
    (p * n * 4 + rows * 4 + offset_entries) as u64
}

/// DRAM bytes `(read, written)` implied by one GEMM record.
///
/// Concentrated inputs are read in the form their producer wrote them; dense
/// inputs and outputs move `rows·width·4` bytes; weights are fetched once per
/// row tile.
pub fn record_dram_bytes(rec: &GemmRecord) -> (u64, u64) {
    let batch = rec.batch as u64;
    let input: u64 = if rec.input_concentrated {
        rec.input_tiles
            .iter()
            .map(|t| {
                t.chunk_p
                    .iter()
                    .zip(&t.chunk_width)
                    .map(|(&p, &w)| tile_write_bytes(p, w, t.rows, t.offset_entries))
                    .sum::<u64>()
            })
            .sum::<u64>()
            * batch
    } else {
        batch * (rec.rows() * rec.k_dim * 4) as u64
    };
    let weights = rec.input_tiles.len() as u64 * batch * (rec.k_dim * rec.n_dim * 4) as u64;
    let written = match &rec.output_tiles {
        Some(tiles) => tiles
            .iter()
            .map(|t| tile_write_bytes(t.p, t.width, t.rows, t.offset_entries))
            .sum(),
        None => batch * (rec.rows() * rec.n_dim * 4) as u64,
    };
    (input + weights, written)
}

pub fn dram_traffic(stats: &[LayerStats]) -> (u64, u64) {
    stats
        .iter()
        .fold((0, 0), |(r, w), s| (r + s.bytes_dram_read, w + s.bytes_dram_written))
}

/// Energy in millijoules.
pub fn energy_mj(ops: u64, sram_bytes: u64, dram_bytes: u64, coeffs: &EnergyCoeffs) -> f64 {
    let pj = ops as f64 * coeffs.pj_per_mac
        + sram_bytes as f64 * coeffs.pj_per_sram_byte
        + dram_bytes as f64 * coeffs.pj_per_dram_byte;
    pj * 1e-9
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BufferUsage {
    pub name: String,
    pub peak_bytes: usize,
    pub capacity_bytes: usize,
    pub overflow: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BufferReport {
    pub buffers: Vec<BufferUsage>,
}

impl BufferReport {
    pub fn any_overflow(&self) -> bool {
        self.buffers.iter().any(|b| b.overflow)
    }

    pub fn get(&self, name: &str) -> Option<&BufferUsage> {
        self.buffers.iter().find(|b| b.name == name)
    }
}

/// Vectors the layouter must hold so a key can reach its oldest window member.
fn layouter_span(cfg: &FocusConfig) -> usize {
    let d = &cfg.dims;
    let b = &cfg.block;
    (b.bf - 1) * d.rows * d.cols + (b.bh - 1) * d.cols + b.bw
}

fn occupancy(cfg: &FocusConfig, peak_p: usize, peak_rows: usize, importance_tokens: usize) -> BufferReport {
    let t = &cfg.tile;
    let caps = &cfg.buffers;
    let entries = [
        ("input", peak_p * t.k * 4, caps.input),
        // Double-buffered k x n weight sub-tile.
        ("weight", 2 * t.k * t.n * 4, caps.weight),
        ("output", peak_rows * t.n * 4, caps.output),
        // Half-precision vectors of width n.
        ("layouter", peak_rows.min(layouter_span(cfg)) * t.n * 2, caps.layouter),
        ("importance", importance_tokens * 4, caps.importance),
    ];
    BufferReport {
        buffers: entries
            .into_iter()
            .map(|(name, peak, cap)| BufferUsage {
                name: name.to_string(),
                peak_bytes: peak,
                capacity_bytes: cap,
                overflow: peak > cap,
            })
            .collect(),
    }
}

/// Peak buffer occupancy. Without stats the worst case `p = m = tile.m` over
/// the full image-token count is assumed.
pub fn buffer_occupancy_check(cfg: &FocusConfig, stats: Option<&[LayerStats]>) -> BufferReport {
    match stats {
        None => occupancy(cfg, cfg.tile.m, cfg.tile.m, cfg.dims.image_tokens()),
        Some(stats) => {
            let mut peak_p = 0;
            let mut peak_rows = 0;
            let mut imp = 0;
            for s in stats {
                if let Some(ev) = s.sorter {
                    imp = imp.max(ev.candidates);
                }
                for g in &s.gemms {
                    for t in &g.input_tiles {
                        peak_rows = peak_rows.max(t.rows);
                        peak_p = peak_p.max(t.chunk_p.iter().copied().max().unwrap_or(0));
                    }
                }
            }
            occupancy(cfg, peak_p, peak_rows, imp)
        }
    }
}

/// One CSV row of a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerPerf {
    pub layer: usize,
    pub gemm_cycles: u64,
    pub sec_cycles: u64,
    pub sic_cycles: u64,
    pub stall_cycles: u64,
    pub dram_read: u64,
    pub dram_write: u64,
    pub ops_dense: u64,
    pub ops_actual: u64,
    pub utilization: f64,
    #[serde(skip)]
    pub sram_bytes: u64,
}

impl LayerPerf {
    pub fn total_cycles(&self) -> u64 {
        self.gemm_cycles + self.stall_cycles
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerfReport {
    pub mode: String,
    pub total_cycles: u64,
    pub gemm_cycles: u64,
    pub sec_cycles: u64,
    pub sic_cycles: u64,
    pub stall_cycles: u64,
    pub dram_bytes_read: u64,
    pub dram_bytes_written: u64,
    pub sram_bytes: u64,
    pub ops_dense: u64,
    pub ops_actual: u64,
    pub sparsity: f64,
    /// Sparsity of the FFN GEMMs alone; functional runs only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ffn_sparsity: Option<f64>,
    /// Mean compact length over chunks fed from gathered activations; functional runs only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_compact_p: Option<f64>,
    pub energy_mj: f64,
    pub pe_utilization: f64,
    pub tile_length_histogram: BTreeMap<usize, u64>,
    pub buffers: BufferReport,
    pub layers: Vec<LayerPerf>,
}

pub const REPORT_HEADER: &str =
    "layer,gemm_cycles,sec_cycles,sic_cycles,stall_cycles,dram_read,dram_write,ops_dense,ops_actual,utilization";

fn utilization(ops: u64, a: usize, b: usize, gemm: u64) -> f64 {
    if gemm == 0 {
        0.0
    } else {
        ops as f64 / ((a * b) as f64 * gemm as f64)
    }
}

impl PerfReport {
    fn assemble(
        mode: &str,
        cfg: &FocusConfig,
        layers: Vec<LayerPerf>,
        histogram: BTreeMap<usize, u64>,
        buffers: BufferReport,
    ) -> Self {
        let sum = |f: fn(&LayerPerf) -> u64| layers.iter().map(f).sum::<u64>();
        let gemm_cycles = sum(|l| l.gemm_cycles);
        let stall_cycles = sum(|l| l.stall_cycles);
        let ops_actual = sum(|l| l.ops_actual);
        let ops_dense = sum(|l| l.ops_dense);
        let dram_read = sum(|l| l.dram_read);
        let dram_write = sum(|l| l.dram_write);
        let sram_bytes = sum(|l| l.sram_bytes);
        PerfReport {
            mode: mode.to_string(),
            total_cycles: gemm_cycles + stall_cycles,
            gemm_cycles,
            sec_cycles: sum(|l| l.sec_cycles),
            sic_cycles: sum(|l| l.sic_cycles),
            stall_cycles,
            dram_bytes_read: dram_read,
            dram_bytes_written: dram_write,
            sram_bytes,
            ops_dense,
            ops_actual,
            sparsity: sparsity(ops_actual, ops_dense),
            ffn_sparsity: None,
            mean_compact_p: None,
            energy_mj: energy_mj(ops_actual, sram_bytes, dram_read + dram_write, &cfg.energy_coeffs),
            pe_utilization: utilization(ops_actual, cfg.tile.a, cfg.tile.b, gemm_cycles),
            tile_length_histogram: histogram,
            buffers,
            layers,
        }
    }

    /// One row per layer followed by a `total` row.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        let row = |label: &str, l: &LayerPerf| {
            format!(
                "{label},{},{},{},{},{},{},{},{},{:.6}\n",
                l.gemm_cycles,
                l.sec_cycles,
                l.sic_cycles,
                l.stall_cycles,
                l.dram_read,
                l.dram_write,
                l.ops_dense,
                l.ops_actual,
                l.utilization
            )
        };
        for l in &self.layers {
            out.push_str(&row(&l.layer.to_string(), l));
        }
        let totals = LayerPerf {
            layer: 0,
            gemm_cycles: self.gemm_cycles,
            sec_cycles: self.sec_cycles,
            sic_cycles: self.sic_cycles,
            stall_cycles: self.stall_cycles,
            dram_read: self.dram_bytes_read,
            dram_write: self.dram_bytes_written,
            ops_dense: self.ops_dense,
            ops_actual: self.ops_actual,
            utilization: self.pe_utilization,
            sram_bytes: self.sram_bytes,
        };
        out.push_str(&row("total", &totals));
        out
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Default)]
struct Phase {
    gemm: u64,
    stall: u64,
    sic: u64,
    sram: u64,
}

fn eval_record(rec: &GemmRecord, cfg: &FocusConfig) -> Phase {
    let t = &cfg.tile;
    let batch = rec.batch as u64;
    let col_tiles: Vec<usize> = (0..rec.n_dim).step_by(t.n).map(|c0| t.n.min(rec.n_dim - c0)).collect();
    let mut ph = Phase::default();
    for (ti, tile) in rec.input_tiles.iter().enumerate() {
        let mut tile_gemm = 0u64;
        let mut tile_time = 0u64;
        for &ncol in &col_tiles {
            let scatter = ((tile.rows * ncol) as u64).div_ceil(cfg.scatter_accumulators.max(1) as u64);
            for (&p, &w) in tile.chunk_p.iter().zip(&tile.chunk_width) {
                let c = chunk_cycles(p, w, ncol, t.a, t.b);
                tile_gemm += c;
                tile_time += if rec.input_concentrated { c.max(scatter) } else { c };
                ph.sram += (p * w * 4 + w * ncol * 4 + 2 * tile.rows * ncol * 4) as u64;
            }
        }
        let matcher: u64 = rec
            .output_tiles
            .iter()
            .flatten()
            .filter(|o| o.row_tile == ti)
            .map(|o| matcher_cycles(o.rows, &cfg.block))
            .sum();
        let compute = tile_time * batch;
        ph.gemm += tile_gemm * batch;
        ph.stall += compute.max(matcher) - tile_gemm * batch;
        ph.sic += matcher;
    }
    ph.sram *= batch;
    let mem = memory_cycles(rec.dram_read + rec.dram_written, cfg.dram_bandwidth);
    let busy = ph.gemm + ph.stall;
    ph.stall += mem.saturating_sub(busy);
    ph
}

fn memory_cycles(bytes: u64, bandwidth: f64) -> u64 {
    let bw = bandwidth.ceil().max(1.0) as u64;
    bytes.div_ceil(bw)
}

fn sec_exposure(cfg: &FocusConfig, candidates: usize, k: usize) -> (u64, u64) {
    let d = &cfg.dims;
    let sorter = sorter_cycles(candidates, k, cfg.tile.a);
    let attn = attention_cycles(candidates, d.text_tokens, d.heads, d.head_dim, cfg.tile.a, cfg.tile.b);
    (sorter, sec_overlap(attn, sorter).exposed_cycles)
}

/// Cycle report from the records of a functional run.
pub fn evaluate_functional(cfg: &FocusConfig, stats: &[LayerStats]) -> PerfReport {
    let mut layers = Vec::with_capacity(stats.len());
    let mut histogram = BTreeMap::new();
    for s in stats {
        let mut gemm = 0;
        let mut stall = 0;
        let mut sic = 0;
        let mut sram = 0;
        for rec in &s.gemms {
            let ph = eval_record(rec, cfg);
            gemm += ph.gemm;
            stall += ph.stall;
            sic += ph.sic;
            sram += ph.sram;
        }
        let mut sec = 0;
        if let Some(ev) = s.sorter {
            let (sorter, exposed) = sec_exposure(cfg, ev.candidates, ev.k);
            sec = sorter;
            stall += exposed;
        }
        for (&p, &c) in &s.p_histogram {
            *histogram.entry(p).or_insert(0) += c;
        }
        layers.push(LayerPerf {
            layer: s.layer,
            gemm_cycles: gemm,
            sec_cycles: sec,
            sic_cycles: sic,
            stall_cycles: stall,
            dram_read: s.bytes_dram_read,
            dram_write: s.bytes_dram_written,
            ops_dense: s.ops_dense,
            ops_actual: s.ops_actual,
            utilization: utilization(s.ops_actual, cfg.tile.a, cfg.tile.b, gemm),
            sram_bytes: sram,
        });
    }
    let buffers = buffer_occupancy_check(cfg, Some(stats));
    let mut report = PerfReport::assemble("functional", cfg, layers, histogram, buffers);
    let (ffn_actual, ffn_dense) = stats
        .iter()
        .flat_map(|s| &s.gemms)
        .filter(|g| g.kind.is_ffn())
        .fold((0, 0), |(a, d), g| (a + g.ops_actual, d + g.ops_dense));
    report.ffn_sparsity = Some(sparsity(ffn_actual, ffn_dense));
    report.mean_compact_p = Some(mean_compact_p(stats));
    report
}

/// Mean `p` over every chunk pass whose input came from a gathered activation.
pub fn mean_compact_p(stats: &[LayerStats]) -> f64 {
    let (sum, count) = stats
        .iter()
        .flat_map(|s| &s.gemms)
        .filter(|g| g.input_concentrated)
        .flat_map(|g| g.input_tiles.iter().map(move |t| (g.batch, t)))
        .fold((0u64, 0u64), |(s, c), (batch, t)| {
            (
                s + batch as u64 * t.chunk_p.iter().sum::<usize>() as u64,
                c + (batch * t.chunk_p.len()) as u64,
            )
        });
    if count == 0 {
        0.0
    } else {
        sum as f64 / count as f64
    }
}

/// Activation and weight bytes of one layer from its shape and op density.
///
/// Q, K and V are written dense; the PV, O, FFN1 and FFN2 outputs are written
/// gathered, their payload scaled by the layer's op density. Every tensor is
/// read back once by its consumer and weights are fetched once per row tile.
fn timing_layer_bytes(cfg: &FocusConfig, rows: usize, image_rows: usize, pruned: bool, density: f64) -> (u64, u64) {
    let d = cfg.dims.d_model;
    let f = cfg.ffn_dim();
    let n = cfg.tile.n;
    let dense = (3 * rows * d * 4) as u64;
    let gathered: u64 = [d, d, f, d]
        .iter()
        .map(|&w| {
            let payload = (density * (rows * w * 4) as f64).round() as u64;
            let chunks = w.div_ceil(n);
            let offsets = if pruned { image_rows * chunks } else { 0 };
            payload + (rows * chunks * 4 + offsets) as u64
        })
        .sum();
    let row_tiles = rows.div_ceil(cfg.tile.m) as u64;
    let weights = row_tiles * ((4 * d * d + 2 * d * f) * 4) as u64;
    let written = dense + gathered;
    (written + weights, written)
}

/// Cycle report driven only by recorded per-layer op counts.
pub fn evaluate_timing(cfg: &FocusConfig, trace: &SparsityTrace) -> Result<PerfReport> {
    cfg.validate()?;
    let m_image = cfg.dims.image_tokens();
    trace.validate_against(m_image, cfg.tile.m)?;
    let t = &cfg.tile;
    let text = cfg.dims.text_tokens;
    let mut layers = Vec::with_capacity(trace.records.len());
    let mut histogram = BTreeMap::new();
    let mut prev_tokens = m_image;
    for rec in &trace.records {
        let gemm = rec.retained_ops.div_ceil((t.a * t.b) as u64);
        let p = rec.compact_p.max(1);
        let passes = rec.retained_ops.div_ceil((p * t.k * t.n) as u64);
        let rows = (rec.retained_tokens + text).min(t.m);
        let producer = chunk_cycles(p, t.k, t.n, t.a, t.b);
        let consume = ((rows * t.n) as u64).div_ceil(cfg.scatter_accumulators.max(1) as u64);
        let mut stall = passes * consume.saturating_sub(producer);
        let mut sec = 0;
        if prunes_at(&cfg.retention_schedule, rec.layer) {
            let (sorter, exposed) = sec_exposure(cfg, prev_tokens, rec.retained_tokens);
            sec = sorter;
            stall += exposed;
        }
        let (read, written) = timing_layer_bytes(
            cfg,
            rec.retained_tokens + text,
            rec.retained_tokens,
            rec.retained_tokens < m_image,
            rec.op_density(),
        );
        let mem = memory_cycles(read + written, cfg.dram_bandwidth);
        stall += mem.saturating_sub(gemm + stall);
        let sram = passes * (p * t.k * 4 + t.k * t.n * 4 + 2 * rows * t.n * 4) as u64;
        if passes > 0 {
            *histogram.entry(rec.compact_p).or_insert(0) += passes;
        }
        layers.push(LayerPerf {
            layer: rec.layer,
            gemm_cycles: gemm,
            sec_cycles: sec,
            sic_cycles: 0,
            stall_cycles: stall,
            dram_read: read,
            dram_write: written,
            ops_dense: rec.total_ops,
            ops_actual: rec.retained_ops,
            utilization: utilization(rec.retained_ops, t.a, t.b, gemm),
            sram_bytes: sram,
        });
        prev_tokens = rec.retained_tokens;
    }
    let peak_p = trace.records.iter().map(|r| r.compact_p).max().unwrap_or(0);
    let peak_rows = (m_image + text).min(t.m);
    let buffers = occupancy(cfg, peak_p, peak_rows, m_image);
    Ok(PerfReport::assemble("timing", cfg, layers, histogram, buffers))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_tile_cycle_examples() {
        assert_eq!(gemm_tile_cycles(1024, 3584, 32, 32, 32, 32), 114_688);
        assert_eq!(gemm_tile_cycles(0, 3584, 32, 32, 32, 32), 0);
        assert_eq!(gemm_tile_cycles(17, 32, 32, 32, 32, 32), 17);
        // Ragged last chunk still costs a full b-step.
        assert_eq!(gemm_tile_cycles(1, 33, 32, 32, 32, 32), 2);
    }

    #[test]
    fn attention_cycle_examples() {
        assert_eq!(attention_cycles(6272, 109, 128, 28, 32, 32), 140_075_712);
        assert_eq!(attention_cycles(0, 109, 128, 28, 32, 32), 0);
        assert_eq!(
            attention_cycles(6272, 109, 128, 14, 32, 32) * 2,
            attention_cycles(6272, 109, 128, 28, 32, 32)
        );
    }

    #[test]
    fn sec_overlap_examples() {
        let attn = attention_cycles(6272, 109, 128, 28, 32, 32);
        let sorter = sorter_cycles(6272, 2509, 32);
        assert_eq!(
            sec_overlap(attn, sorter),
            SecOverlap {
                hidden: true,
                exposed_cycles: 0
            }
        );
        assert_eq!(
            sec_overlap(10, 10),
            SecOverlap {
                hidden: true,
                exposed_cycles: 0
            }
        );
        assert_eq!(
            sec_overlap(10, 15),
            SecOverlap {
                hidden: false,
                exposed_cycles: 5
            }
        );
    }

    #[test]
    fn scatter_stall_examples() {
        let chunks = vec![1024; 112];
        assert_eq!(scatter_stall_cycles(1024, 32, &chunks, 64, 32), 0);
        assert_eq!(scatter_stall_cycles(1024, 32, &[3, 3], usize::MAX, 32), 0);
        let mut prev = u64::MAX;
        for acc in [1, 2, 4, 8, 16, 32, 64, 128] {
            let s = scatter_stall_cycles(64, 32, &[4, 4, 4], acc, 32);
            assert!(s <= prev);
            prev = s;
        }
        assert!(scatter_stall_cycles(64, 32, &[4], 1, 32) > 0);
    }

    #[test]
    fn energy_is_linear() {
        let zero = EnergyCoeffs {
            pj_per_mac: 0.0,
            pj_per_sram_byte: 0.0,
            pj_per_dram_byte: 0.0,
        };
        assert_eq!(energy_mj(10, 10, 10, &zero), 0.0);
        let dram = EnergyCoeffs {
            pj_per_dram_byte: 20.0,
            ..zero
        };
        assert_eq!(energy_mj(5, 5, 200, &dram), 2.0 * energy_mj(5, 5, 100, &dram));
        let d = EnergyCoeffs::default();
        // 1000 MACs at 1 pJ + 100 SRAM bytes at 1.5 pJ + 10 DRAM bytes at 20 pJ = 1350 pJ.
        assert!((energy_mj(1000, 100, 10, &d) - 1.35e-6).abs() < 1e-15);
    }

    #[test]
    fn worst_case_buffers_fit() {
        let cfg = FocusConfig::default();
        let rep = buffer_occupancy_check(&cfg, None);
        assert!(!rep.any_overflow(), "{rep:?}");
        assert_eq!(rep.get("output").unwrap().peak_bytes, 128 * 1024);
        assert_eq!(rep.get("input").unwrap().peak_bytes, 128 * 1024);
    }

    #[test]
    fn doubling_tile_m_doubles_output_occupancy() {
        let mut cfg = FocusConfig::default();
        let base = buffer_occupancy_check(&cfg, None).get("output").unwrap().peak_bytes;
        cfg.tile.m = 2048;
        let rep = buffer_occupancy_check(&cfg, None);
        let out = rep.get("output").unwrap();
        assert_eq!(out.peak_bytes, 2 * base);
        assert_eq!(out.overflow, out.peak_bytes > out.capacity_bytes);
        // The input side scales with p = m and now overflows.
        assert!(rep.get("input").unwrap().overflow);
    }

    #[test]
    fn zero_layers_move_no_bytes() {
        assert_eq!(dram_traffic(&[]), (0, 0));
    }
}
