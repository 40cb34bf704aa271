//! One simplified transformer layer with semantic and similarity concentration.
//!
//! Tokens are ordered image rows (FHW) first, then text. There are no
//! residual connections, normalizations or masks.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::FocusConfig;
use crate::error::{FocusError, Result};
use crate::gemm::{concentrated_gemm_all, dense_gemm_tiled, gather_activation, ConcentratedActivation, GemmCounters};
use crate::grid::TokenGrid;
use crate::matrix::Matrix;
use crate::perf::record_dram_bytes;
use crate::sec::{
    importance_from_blocks, prunes_at, retained_count, retention_for_layer, semantic_prune, top_k_select, RetainedSet,
};
use crate::sic::RowTag;
use crate::stats::{GemmKind, GemmRecord, InputTile, LayerStats, OutputTile, SorterEvent};
use crate::wire::{Reader, Writer};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub w1: Matrix,
    pub w2: Matrix,
}

impl LayerWeights {
    /// Gaussian weights with standard deviation `1/sqrt(fan_in)`.
    pub fn random(d_model: usize, ffn_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut draw = |rows: usize, cols: usize| {
            let normal = Normal::new(0.0f32, 1.0 / (rows as f32).sqrt()).expect("positive std");
            let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
            Matrix::from_vec(rows, cols, data).expect("shape")
        };
        Self {
            wq: draw(d_model, d_model),
            wk: draw(d_model, d_model),
            wv: draw(d_model, d_model),
            wo: draw(d_model, d_model),
            w1: draw(d_model, ffn_dim),
            w2: draw(ffn_dim, d_model),
        }
    }

    fn named(&self) -> [(&'static str, &Matrix); 6] {
        [
            ("wq", &self.wq),
            ("wk", &self.wk),
            ("wv", &self.wv),
            ("wo", &self.wo),
            ("w1", &self.w1),
            ("w2", &self.w2),
        ]
    }

    pub fn validate(&self, d_model: usize, ffn_dim: usize) -> Result<()> {
        let want = [
            (d_model, d_model),
            (d_model, d_model),
            (d_model, d_model),
            (d_model, d_model),
            (d_model, ffn_dim),
            (ffn_dim, d_model),
        ];
        for ((name, m), (r, c)) in self.named().into_iter().zip(want) {
            if m.rows() != r || m.cols() != c {
                return Err(FocusError::arg(format!(
                    "weight {name} is {}x{}, expected {r}x{c}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        Ok(())
    }
}

/// Seeded random weights for `layers` layers.
pub fn random_weights(layers: usize, d_model: usize, ffn_dim: usize, seed: u64) -> Vec<LayerWeights> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..layers)
        .map(|_| LayerWeights::random(d_model, ffn_dim, &mut rng))
        .collect()
}

pub const WEIGHTS_MAGIC: &[u8; 4] = b"FCWT";
pub const WEIGHTS_VERSION: u16 = 1;

/// `"FCWT" | version u16 | layers d_model ffn_dim (u32) | per layer wq wk wv wo w1 w2 (f32 LE)`.
pub fn encode_weights(weights: &[LayerWeights]) -> Result<Vec<u8>> {
    let (d, f) = match weights.first() {
        Some(w) => (w.wq.rows(), w.w1.cols()),
        None => (0, 0),
    };
    let mut w = Writer::new();
    w.bytes(WEIGHTS_MAGIC);
    w.u16(WEIGHTS_VERSION);
    w.usize_as_u32(weights.len(), "layers")?;
    w.usize_as_u32(d, "d_model")?;
    w.usize_as_u32(f, "ffn_dim")?;
    for lw in weights {
        lw.validate(d, f)?;
        for (_, m) in lw.named() {
            w.f32s(m.as_slice());
        }
    }
    Ok(w.finish())
}

pub fn decode_weights(bytes: &[u8]) -> Result<Vec<LayerWeights>> {
    let mut r = Reader::new(bytes);
    r.magic(WEIGHTS_MAGIC)?;
    let version = r.u16("version")?;
    if version != WEIGHTS_VERSION {
        return Err(FocusError::format("version", format!("unsupported version {version}")));
    }
    let layers = r.usize("layers")?;
    let d = r.usize("d_model")?;
    let f = r.usize("ffn_dim")?;
    let mut out = Vec::with_capacity(layers.min(1024));
    for _ in 0..layers {
        let mut read = |rows: usize, cols: usize, field: &str| -> Result<Matrix> {
            Matrix::from_vec(rows, cols, r.f32s(rows * cols, field)?)
        };
        out.push(LayerWeights {
            wq: read(d, d, "wq")?,
            wk: read(d, d, "wk")?,
            wv: read(d, d, "wv")?,
            wo: read(d, d, "wo")?,
            w1: read(d, f, "w1")?,
            w2: read(f, d, "w2")?,
        });
    }
    r.finish()?;
    Ok(out)
}

pub fn write_weights(weights: &[LayerWeights], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_weights(weights)?)?;
    Ok(())
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<Vec<LayerWeights>> {
    decode_weights(&std::fs::read(path)?)
}

/// Layer input: the logical token grid plus, when the producer gathered it,
/// its concentrated form.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub grid: TokenGrid,
    pub concentrated: Option<ConcentratedActivation>,
}

impl Activations {
    pub fn dense(grid: TokenGrid) -> Self {
        Self {
            grid,
            concentrated: None,
        }
    }
}

/// In-place scaled row softmax, `exp(x·scale − max) / Σ`.
pub fn softmax_rows(m: &mut Matrix, scale: f32) {
    for r in 0..m.rows() {
        let row = m.row_mut(r);
        let mut mx = f32::NEG_INFINITY;
        for v in row.iter_mut() {
            *v *= scale;
            mx = mx.max(*v);
        }
        let mut sum = 0.0f32;
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

#[inline]
pub fn relu(v: f32) -> f32 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

pub fn row_tags(grid: &TokenGrid) -> Vec<RowTag> {
    grid.coords()
        .iter()
        .map(|&c| RowTag::Image(c))
        .chain(std::iter::repeat_n(RowTag::Text, grid.dims().text_tokens))
        .collect()
}

pub(crate) fn check_pipeline_config(cfg: &FocusConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.tile.n != cfg.tile.k {
        return Err(FocusError::Unsupported(format!(
            "tile.n ({}) must equal tile.k ({}) so gathered outputs can feed the next GEMM",
            cfg.tile.n, cfg.tile.k
        )));
    }
    Ok(())
}

/// Bookkeeping shared by the records of one layer.
struct Shape<'a> {
    cfg: &'a FocusConfig,
    /// Image rows in the tensor being described.
    image_rows: usize,
    pruned: bool,
}

impl Shape<'_> {
    fn offsets(&self, r0: usize, rows: usize) -> usize {
        if self.pruned {
            self.image_rows.saturating_sub(r0).min(rows)
        } else {
            0
        }
    }

    fn dense_tiles(&self, rows: usize, k_dim: usize) -> Vec<InputTile> {
        let t = &self.cfg.tile;
        let widths: Vec<usize> = (0..k_dim).step_by(t.k).map(|c| t.k.min(k_dim - c)).collect();
        (0..rows)
            .step_by(t.m)
            .map(|r0| {
                let n = t.m.min(rows - r0);
                InputTile {
                    rows: n,
                    chunk_p: vec![n; widths.len()],
                    chunk_width: widths.clone(),
                    offset_entries: self.offsets(r0, n),
                }
            })
            .collect()
    }

    fn concentrated_tiles(&self, act: &ConcentratedActivation) -> Vec<InputTile> {
        let mut r0 = 0;
        act.tiles
            .iter()
            .map(|t| {
                let tile = InputTile {
                    rows: t.rows(),
                    chunk_p: t.chunk_p(),
                    chunk_width: t.chunk_widths(),
                    offset_entries: self.offsets(r0, t.rows()),
                };
                r0 += t.rows();
                tile
            })
            .collect()
    }

    fn output_tiles(&self, act: &ConcentratedActivation) -> Vec<OutputTile> {
        let mut out = Vec::new();
        let mut r0 = 0;
        for (ti, t) in act.tiles.iter().enumerate() {
            for (p, w) in t.chunk_p().into_iter().zip(t.chunk_widths()) {
                out.push(OutputTile {
                    row_tile: ti,
                    rows: t.rows(),
                    width: w,
                    p,
                    offset_entries: self.offsets(r0, t.rows()),
                });
            }
            r0 += t.rows();
        }
        out
    }
}

struct RecordSpec {
    kind: GemmKind,
    batch: usize,
    k_dim: usize,
    n_dim: usize,
    input_tiles: Vec<InputTile>,
    input_concentrated: bool,
    output_tiles: Option<Vec<OutputTile>>,
    ops_dense: u64,
    ops_actual: u64,
    scatter_accum_ops: u64,
}

fn record(spec: RecordSpec) -> GemmRecord {
    let mut rec = GemmRecord {
        kind: spec.kind,
        batch: spec.batch,
        k_dim: spec.k_dim,
        n_dim: spec.n_dim,
        input_concentrated: spec.input_concentrated,
        input_tiles: spec.input_tiles,
        output_tiles: spec.output_tiles,
        ops_dense: spec.ops_dense,
        ops_actual: spec.ops_actual,
        scatter_accum_ops: spec.scatter_accum_ops,
        dram_read: 0,
        dram_written: 0,
    };
    let (r, w) = record_dram_bytes(&rec);
    rec.dram_read = r;
    rec.dram_written = w;
    rec
}

fn sum_counters(c: &[GemmCounters]) -> (u64, u64) {
    c.iter()
        .fold((0, 0), |(o, s), c| (o + c.ops_actual, s + c.scatter_accum_ops))
}

/// Projection of the layer input, consuming its concentrated form when one exists.
fn project(
    kind: GemmKind,
    input: &Activations,
    x: &Matrix,
    w: &Matrix,
    shape: &Shape,
    dense_rows: usize,
) -> Result<(Matrix, GemmRecord)> {
    let tile = &shape.cfg.tile;
    let ops_dense = (dense_rows * w.rows() * w.cols()) as u64;
    let (out, input_tiles, concentrated, ops_actual, scatter) = match &input.concentrated {
        Some(c) => {
            let (out, counters) = concentrated_gemm_all(c, w, tile)?;
            let (ops, sc) = sum_counters(&counters);
            (out, shape.concentrated_tiles(c), true, ops, sc)
        }
        None => {
            let out = dense_gemm_tiled(x, w, tile)?;
            let ops = (x.rows() * w.rows() * w.cols()) as u64;
            (out, shape.dense_tiles(x.rows(), w.rows()), false, ops, 0)
        }
    };
    let rec = record(RecordSpec {
        kind,
        batch: 1,
        k_dim: w.rows(),
        n_dim: w.cols(),
        input_tiles,
        input_concentrated: concentrated,
        output_tiles: None,
        ops_dense,
        ops_actual,
        scatter_accum_ops: scatter,
    });
    Ok((out, rec))
}

/// Concentrated GEMM on a gathered activation, gathering the result.
fn gathered_gemm(
    kind: GemmKind,
    x: &ConcentratedActivation,
    w: &Matrix,
    shape: &Shape,
    tags: &[RowTag],
    dense_rows: usize,
    post: Option<fn(f32) -> f32>,
) -> Result<(ConcentratedActivation, GemmRecord)> {
    let cfg = shape.cfg;
    let (mut out, counters) = concentrated_gemm_all(x, w, &cfg.tile)?;
    if let Some(f) = post {
        out.map_inplace(f);
    }
    let gathered = gather_activation(&out, tags, &cfg.tile, &cfg.block, cfg.sim_threshold)?;
    let (ops, sc) = sum_counters(&counters);
    let rec = record(RecordSpec {
        kind,
        batch: 1,
        k_dim: w.rows(),
        n_dim: w.cols(),
        input_tiles: shape.concentrated_tiles(x),
        input_concentrated: true,
        output_tiles: Some(shape.output_tiles(&gathered)),
        ops_dense: (dense_rows * w.rows() * w.cols()) as u64,
        ops_actual: ops,
        scatter_accum_ops: sc,
    });
    Ok((gathered, rec))
}

/// Runs one layer and returns the next layer's input with its stats.
pub fn layer_forward(
    input: &Activations,
    weights: &LayerWeights,
    cfg: &FocusConfig,
    layer: usize,
) -> Result<(Activations, LayerStats)> {
    check_pipeline_config(cfg)?;
    let grid = &input.grid;
    let dims = cfg.dims;
    if grid.dims().d_model != dims.d_model || grid.dims().text_tokens != dims.text_tokens {
        return Err(FocusError::arg(format!(
            "grid is {} wide with {} text tokens, config expects {} and {}",
            grid.dims().d_model,
            grid.dims().text_tokens,
            dims.d_model,
            dims.text_tokens
        )));
    }
    weights.validate(dims.d_model, cfg.ffn_dim())?;
    if let Some(c) = &input.concentrated {
        if c.rows() != grid.image_rows() + dims.text_tokens || c.cols() != dims.d_model {
            return Err(FocusError::arg("concentrated input does not match the grid"));
        }
    }

    let (heads, hd, t) = (dims.heads, dims.head_dim, dims.text_tokens);
    let m_orig = dims.image_tokens();
    let dense_rows = m_orig + t;
    let s_in = grid.image_rows();
    let r = s_in + t;
    let shape_in = Shape {
        cfg,
        image_rows: s_in,
        pruned: s_in < m_orig,
    };

    let x = grid.concat();
    let (q, rec_q) = project(GemmKind::QProj, input, &x, &weights.wq, &shape_in, dense_rows)?;
    let (k, rec_k) = project(GemmKind::KProj, input, &x, &weights.wk, &shape_in, dense_rows)?;
    let (v, rec_v) = project(GemmKind::VProj, input, &x, &weights.wv, &shape_in, dense_rows)?;

    let scale = 1.0 / (hd as f32).sqrt();
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = q.block(0, r, h * hd, hd);
        let kt = k.block(0, r, h * hd, hd).transpose();
        let mut scores = dense_gemm_tiled(&qh, &kt, &cfg.tile)?;
        softmax_rows(&mut scores, scale);
        probs.push(scores);
    }
    let rec_qk = record(RecordSpec {
        kind: GemmKind::Qk,
        batch: heads,
        k_dim: hd,
        n_dim: r,
        input_tiles: shape_in.dense_tiles(r, hd),
        input_concentrated: false,
        output_tiles: None,
        ops_dense: (heads * dense_rows * hd * dense_rows) as u64,
        ops_actual: (heads * r * hd * r) as u64,
        scatter_accum_ops: 0,
    });

    let mut sorter = None;
    let keep_image = if prunes_at(&cfg.retention_schedule, layer) && t > 0 && s_in > 0 {
        let blocks: Vec<Matrix> = probs.iter().map(|p| p.block(s_in, t, 0, s_in)).collect();
        let importance = importance_from_blocks(&blocks)?;
        let k = retained_count(retention_for_layer(&cfg.retention_schedule, layer), m_orig).min(s_in);
        sorter = Some(SorterEvent { candidates: s_in, k });
        top_k_select(&importance, k)?
    } else {
        RetainedSet::all(s_in)
    };
    let pruned_grid = semantic_prune(grid, &keep_image)?;
    let keep: Vec<usize> = keep_image.indices().iter().copied().chain(s_in..r).collect();
    let s_out = keep_image.len();
    let r2 = keep.len();
    let shape_out = Shape {
        cfg,
        image_rows: s_out,
        pruned: s_out < m_orig,
    };
    let tags = row_tags(&pruned_grid);

    let mut attn = Matrix::zeros(r2, dims.d_model);
    for (h, p) in probs.iter().enumerate() {
        let p_kept = p.select(&keep, &keep);
        let vh = v.block(0, r, h * hd, hd).select_rows(&keep);
        attn.put_block(0, h * hd, &dense_gemm_tiled(&p_kept, &vh, &cfg.tile)?);
    }
    let attn_c = gather_activation(&attn, &tags, &cfg.tile, &cfg.block, cfg.sim_threshold)?;
    let rec_pv = record(RecordSpec {
        kind: GemmKind::Pv,
        batch: heads,
        k_dim: r2,
        n_dim: hd,
        input_tiles: shape_out.dense_tiles(r2, r2),
        input_concentrated: false,
        output_tiles: Some(shape_out.output_tiles(&attn_c)),
        ops_dense: (heads * dense_rows * dense_rows * hd) as u64,
        ops_actual: (heads * r2 * r2 * hd) as u64,
        scatter_accum_ops: 0,
    });

    let (o_c, rec_o) = gathered_gemm(
        GemmKind::OProj,
        &attn_c,
        &weights.wo,
        &shape_out,
        &tags,
        dense_rows,
        None,
    )?;
    let (h_c, rec_f1) = gathered_gemm(
        GemmKind::Ffn1,
        &o_c,
        &weights.w1,
        &shape_out,
        &tags,
        dense_rows,
        Some(relu),
    )?;
    let (y_c, rec_f2) = gathered_gemm(GemmKind::Ffn2, &h_c, &weights.w2, &shape_out, &tags, dense_rows, None)?;

    let out_grid = pruned_grid.replace_values(&y_c.reconstruct())?;
    let mut stats = LayerStats::new(layer, s_in, s_out, t);
    stats.sorter = sorter;
    for rec in [rec_q, rec_k, rec_v, rec_qk, rec_pv, rec_o, rec_f1, rec_f2] {
        stats.push(rec);
    }
    Ok((
        Activations {
            grid: out_grid,
            concentrated: Some(y_c),
        },
        stats,
    ))
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub output: Activations,
    pub stats: Vec<LayerStats>,
}

/// Runs `cfg.num_layers` layers starting from a dense input grid.
pub fn run_pipeline(grid: &TokenGrid, weights: &[LayerWeights], cfg: &FocusConfig) -> Result<PipelineRun> {
    check_pipeline_config(cfg)?;
    if weights.len() < cfg.num_layers {
        return Err(FocusError::arg(format!(
            "{} weight layers for num_layers = {}",
            weights.len(),
            cfg.num_layers
        )));
    }
    let mut act = Activations::dense(grid.clone().with_dims(cfg.dims)?);
    let mut stats = Vec::with_capacity(cfg.num_layers);
    for (layer, w) in weights.iter().take(cfg.num_layers).enumerate() {
        let (next, s) = layer_forward(&act, w, cfg, layer)?;
        act = next;
        stats.push(s);
    }
    Ok(PipelineRun { output: act, stats })
}
