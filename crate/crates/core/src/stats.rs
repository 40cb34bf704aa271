//! Per-GEMM and per-layer execution records produced by the functional model.

use std::collections::BTreeMap;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GemmKind {
    QProj,
    KProj,
    VProj,
    Qk,
    Pv,
    OProj,
    Ffn1,
    Ffn2,
}

impl GemmKind {
    pub fn name(self) -> &'static str {
        match self {
            GemmKind::QProj => "q_proj",
            GemmKind::KProj => "k_proj",
            GemmKind::VProj => "v_proj",
            GemmKind::Qk => "qk",
            GemmKind::Pv => "pv",
            GemmKind::OProj => "o_proj",
            GemmKind::Ffn1 => "ffn1",
            GemmKind::Ffn2 => "ffn2",
        }
    }

    pub fn is_ffn(self) -> bool {
        matches!(self, GemmKind::Ffn1 | GemmKind::Ffn2)
    }
}

/// One row tile of a GEMM input, as consumed chunk by chunk along K.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputTile {
    pub rows: usize,
    /// Rows actually fed to the array per K-chunk (`rows` when dense).
    pub chunk_p: Vec<usize>,
    pub chunk_width: Vec<usize>,
    /// Retained-position entries stored with the tile (image rows after pruning).
    pub offset_entries: usize,
}

/// One gathered `rows x width` output tile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutputTile {
    /// Index of the row tile this output tile belongs to.
    pub row_tile: usize,
    pub rows: usize,
    pub width: usize,
    pub p: usize,
    /// Retained-position entries stored with the tile (image rows after pruning).
    pub offset_entries: usize,
}

/// Shape, work and traffic of one GEMM (or one batch of per-head GEMMs).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GemmRecord {
    pub kind: GemmKind,
    /// Independent GEMMs of identical shape (attention heads), 1 otherwise.
    pub batch: usize,
    pub k_dim: usize,
    pub n_dim: usize,
    pub input_concentrated: bool,
    /// Row tiles of one batch element; every element has the same tiling.
    pub input_tiles: Vec<InputTile>,
    /// Gathered output tiles, row tile major; `None` when written dense.
    pub output_tiles: Option<Vec<OutputTile>>,
    pub ops_dense: u64,
    pub ops_actual: u64,
    pub scatter_accum_ops: u64,
    pub dram_read: u64,
    pub dram_written: u64,
}

impl GemmRecord {
    pub fn rows(&self) -> usize {
        self.input_tiles.iter().map(|t| t.rows).sum()
    }
}

/// Sorter activity at a pruning layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SorterEvent {
    /// Image tokens ranked (S of the previous layer).
    pub candidates: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerStats {
    pub layer: usize,
    pub image_rows_in: usize,
    pub retained_tokens: usize,
    pub text_tokens: usize,
    pub sorter: Option<SorterEvent>,
    pub gemms: Vec<GemmRecord>,
    pub ops_dense: u64,
    pub ops_actual: u64,
    pub scatter_accum_ops: u64,
    pub bytes_dram_read: u64,
    pub bytes_dram_written: u64,
    /// Compact length of every chunk pass issued to the array.
    pub p_histogram: BTreeMap<usize, u64>,
}

impl LayerStats {
    pub fn new(layer: usize, image_rows_in: usize, retained_tokens: usize, text_tokens: usize) -> Self {
        Self {
            layer,
            image_rows_in,
            retained_tokens,
            text_tokens,
            sorter: None,
            gemms: Vec::new(),
            ops_dense: 0,
            ops_actual: 0,
            scatter_accum_ops: 0,
            bytes_dram_read: 0,
            bytes_dram_written: 0,
            p_histogram: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, g: GemmRecord) {
        self.ops_dense += g.ops_dense;
        self.ops_actual += g.ops_actual;
        self.scatter_accum_ops += g.scatter_accum_ops;
        self.bytes_dram_read += g.dram_read;
        self.bytes_dram_written += g.dram_written;
        for t in &g.input_tiles {
            for &p in &t.chunk_p {
                *self.p_histogram.entry(p).or_insert(0) += g.batch as u64;
            }
        }
        self.gemms.push(g);
    }

    /// `1 − ops_actual / ops_dense`.
    pub fn sparsity(&self) -> f64 {
        sparsity(self.ops_actual, self.ops_dense)
    }

    /// Sparsity over the FFN GEMMs only.
    pub fn ffn_sparsity(&self) -> f64 {
        let (a, d) = self
            .gemms
            .iter()
            .filter(|g| g.kind.is_ffn())
            .fold((0, 0), |(a, d), g| (a + g.ops_actual, d + g.ops_dense));
        sparsity(a, d)
    }
}

pub fn sparsity(ops_actual: u64, ops_dense: u64) -> f64 {
    if ops_dense == 0 {
        0.0
    } else {
        (1.0 - ops_actual as f64 / ops_dense as f64).clamp(0.0, 1.0)
    }
}
