//! Tiled GEMM over dense and concentrated inputs.
//!
//! Both paths share one accumulation order: for every output element, the
//! K dimension is walked chunk by chunk in ascending order; inside a chunk the
//! partial sum starts at zero and accumulates left to right, and the finished
//! partial is then added to the output-stationary accumulator. With identity
//! similarity maps the concentrated path is therefore bit-identical to the
//! dense one.

use crate::config::{BlockConfig, SimThreshold, TileConfig};
use crate::error::{FocusError, Result};
use crate::matrix::Matrix;
use crate::sic::{gather_tile, CompactTile, RowTag, SimilarityMap};

/// Chunked K-partial for one input row: `out += Σ_chunks (Σ_{i∈chunk} x_i·B[i,:])`.
///
/// `partial` is scratch space of width `b.cols()`.
#[inline]
fn accumulate_row_chunk(x: &[f32], b: &Matrix, k0: usize, partial: &mut [f32]) {
    partial.fill(0.0);
    for (di, &xi) in x.iter().enumerate() {
        let brow = b.row(k0 + di);
        for (p, &bv) in partial.iter_mut().zip(brow) {
            *p += xi * bv;
        }
    }
}

#[inline]
fn add_into(out: &mut [f32], partial: &[f32]) {
    for (o, p) in out.iter_mut().zip(partial) {
        *o += *p;
    }
}

/// `A (m_total x K) · B (K x N)` with the K dimension split into `tile.k` chunks.
pub fn dense_gemm_tiled(a: &Matrix, b: &Matrix, tile: &TileConfig) -> Result<Matrix> {
    if a.cols() != b.rows() {
        return Err(FocusError::arg(format!(
            "gemm shape mismatch: {}x{} times {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    tile.validate()?;
    let (m, kdim, n) = (a.rows(), a.cols(), b.cols());
    let mut out = Matrix::zeros(m, n);
    let mut partial = vec![0.0f32; n];
    // Row tiles and output column tiles only reorder independent work, so the
    // loop walks rows directly; the K chunking is what fixes the arithmetic.
    for r in 0..m {
        let arow = a.row(r);
        for k0 in (0..kdim).step_by(tile.k) {
            let k1 = (k0 + tile.k).min(kdim);
            accumulate_row_chunk(&arow[k0..k1], b, k0, &mut partial);
            add_into(out.row_mut(r), &partial);
        }
    }
    Ok(out)
}

/// One row tile of a logically `m' x K` matrix stored as per-K-chunk compact
/// tiles plus similarity maps.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentratedMatrix {
    rows: usize,
    chunks: Vec<(CompactTile, SimilarityMap)>,
}

impl ConcentratedMatrix {
    pub fn new(rows: usize, chunks: Vec<(CompactTile, SimilarityMap)>) -> Result<Self> {
        for (j, (tile, map)) in chunks.iter().enumerate() {
            if map.len() != rows {
                return Err(FocusError::arg(format!(
                    "chunk {j}: map covers {} rows, tile has {rows}",
                    map.len()
                )));
            }
            if tile.vectors.rows() != tile.source_rows.len() {
                return Err(FocusError::arg(format!(
                    "chunk {j}: compact vectors/source rows mismatch"
                )));
            }
        }
        Ok(Self { rows, chunks })
    }

    /// Identity-mapped view of a dense row tile, chunked every `k` columns.
    pub fn from_dense(x: &Matrix, k: usize) -> Self {
        let chunks = (0..x.cols())
            .step_by(k.max(1))
            .map(|k0| {
                let w = k.min(x.cols() - k0);
                (
                    CompactTile {
                        vectors: x.block(0, x.rows(), k0, w),
                        source_rows: (0..x.rows()).collect(),
                    },
                    SimilarityMap::identity(x.rows()),
                )
            })
            .collect();
        Self { rows: x.rows(), chunks }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.chunks.iter().map(|(t, _)| chunk_width(t)).sum()
    }

    pub fn chunks(&self) -> &[(CompactTile, SimilarityMap)] {
        &self.chunks
    }

    pub fn chunk_widths(&self) -> Vec<usize> {
        self.chunks.iter().map(|(t, _)| chunk_width(t)).collect()
    }

    pub fn chunk_p(&self) -> Vec<usize> {
        self.chunks.iter().map(|(t, _)| t.len()).collect()
    }

    /// Dense matrix implied by scattering every chunk.
    pub fn reconstruct(&self) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols());
        let mut c0 = 0;
        for (tile, map) in &self.chunks {
            let w = chunk_width(tile);
            for r in 0..self.rows {
                let src = tile.vectors.row(map.rep_index[r]);
                out.row_mut(r)[c0..c0 + w].copy_from_slice(src);
            }
            c0 += w;
        }
        out
    }
}

fn chunk_width(t: &CompactTile) -> usize {
    t.vectors.cols()
}

/// Work counters of one concentrated GEMM call.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GemmCounters {
    /// MACs issued to the PE array.
    pub ops_actual: u64,
    /// Scalar additions in the scatter accumulator.
    pub scatter_accum_ops: u64,
    /// Compact length of each K-chunk consumed.
    pub chunk_p: Vec<usize>,
}

/// Output-stationary GEMM over one concentrated row tile.
///
/// For each K-chunk, the `p_j x k` compact block is multiplied by the matching
/// weight rows, and every partial-sum vector is scattered to all tile rows
/// that map to it before accumulation.
pub fn concentrated_gemm(x: &ConcentratedMatrix, b: &Matrix, tile: &TileConfig) -> Result<(Matrix, GemmCounters)> {
    tile.validate()?;
    if x.cols() != b.rows() {
        return Err(FocusError::arg(format!(
            "concentrated gemm: input width {} != weight rows {}",
            x.cols(),
            b.rows()
        )));
    }
    let n = b.cols();
    let mut out = Matrix::zeros(x.rows, n);
    let mut counters = GemmCounters::default();
    let mut k0 = 0;
    for (j, (ct, map)) in x.chunks.iter().enumerate() {
        let w = chunk_width(ct);
        if w > tile.k {
            return Err(FocusError::arg(format!(
                "chunk {j} width {w} exceeds tile.k = {}",
                tile.k
            )));
        }
        let p = ct.len();
        if let Some((i, &r)) = map.rep_index.iter().enumerate().find(|(_, &r)| r >= p) {
            return Err(FocusError::invalid(format!(
                "chunk {j}: map entry {i} = {r} >= p = {p}"
            )));
        }
        let mut partials = Matrix::zeros(p, n);
        for c in 0..p {
            accumulate_row_chunk(ct.vectors.row(c), b, k0, partials.row_mut(c));
        }
        for r in 0..x.rows {
            add_into(out.row_mut(r), partials.row(map.rep_index[r]));
        }
        counters.ops_actual += (p * w * n) as u64;
        counters.scatter_accum_ops += (x.rows * n) as u64;
        counters.chunk_p.push(p);
        k0 += w;
    }
    Ok((out, counters))
}

/// A full activation matrix held as row tiles of concentrated chunks.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentratedActivation {
    pub tiles: Vec<ConcentratedMatrix>,
}

impl ConcentratedActivation {
    pub fn rows(&self) -> usize {
        self.tiles.iter().map(ConcentratedMatrix::rows).sum()
    }

    pub fn cols(&self) -> usize {
        self.tiles.first().map_or(0, ConcentratedMatrix::cols)
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut out = Matrix::zeros(self.rows(), self.cols());
        let mut r0 = 0;
        for t in &self.tiles {
            out.put_block(r0, 0, &t.reconstruct());
            r0 += t.rows();
        }
        out
    }

    /// Total compact vectors across all tiles and chunks.
    pub fn total_p(&self) -> usize {
        self.tiles.iter().flat_map(|t| t.chunk_p()).sum()
    }
}

/// Similarity-gathers `x` tile by tile: `tile.m` rows by `tile.n`-wide vectors.
pub fn gather_activation(
    x: &Matrix,
    tags: &[RowTag],
    tile: &TileConfig,
    block: &BlockConfig,
    threshold: SimThreshold,
) -> Result<ConcentratedActivation> {
    if tags.len() != x.rows() {
        return Err(FocusError::arg(format!("{} tags for {} rows", tags.len(), x.rows())));
    }
    tile.validate()?;
    let mut tiles = Vec::with_capacity(x.rows().div_ceil(tile.m));
    for r0 in (0..x.rows()).step_by(tile.m) {
        let rows = tile.m.min(x.rows() - r0);
        let tile_tags = &tags[r0..r0 + rows];
        let mut chunks = Vec::with_capacity(x.cols().div_ceil(tile.n));
        for c0 in (0..x.cols()).step_by(tile.n) {
            let w = tile.n.min(x.cols() - c0);
            let slab = x.block(r0, rows, c0, w);
            chunks.push(gather_tile(&slab, tile_tags, block, threshold)?);
        }
        tiles.push(ConcentratedMatrix::new(rows, chunks)?);
    }
    Ok(ConcentratedActivation { tiles })
}

/// Runs `concentrated_gemm` over every row tile and stacks the outputs.
pub fn concentrated_gemm_all(
    x: &ConcentratedActivation,
    b: &Matrix,
    tile: &TileConfig,
) -> Result<(Matrix, Vec<GemmCounters>)> {
    let mut out = Matrix::zeros(x.rows(), b.cols());
    let mut per_tile = Vec::with_capacity(x.tiles.len());
    let mut r0 = 0;
    for t in &x.tiles {
        let (o, c) = concentrated_gemm(t, b, tile)?;
        out.put_block(r0, 0, &o);
        r0 += t.rows();
        per_tile.push(c);
    }
    Ok((out, per_tile))
}
