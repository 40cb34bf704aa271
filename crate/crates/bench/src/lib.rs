//! Shared fixtures for the kernel benchmarks.

use focus_core::config::{BlockConfig, Dims, SimThreshold, TileConfig};
use focus_core::gemm::{gather_activation, ConcentratedActivation};
use focus_core::layer::row_tags;
use focus_core::sec::ImportanceVector;
use focus_core::sic::RowTag;
use focus_core::trace::{generate_synthetic_trace, TraceGenConfig};
use focus_core::{Matrix, TokenGrid};

pub const TILE: TileConfig = TileConfig {
    m: 1024,
    n: 32,
    k: 32,
    a: 32,
    b: 32,
};

pub fn grid(frames: usize, hw: usize, d_model: usize, temporal: f64) -> TokenGrid {
    let dims = Dims {
        frames,
        rows: hw,
        cols: hw,
        text_tokens: 16,
        d_model,
        heads: 1,
        head_dim: d_model,
    };
    generate_synthetic_trace(&TraceGenConfig {
        dims,
        temporal_similarity: temporal,
        spatial_similarity: 0.3,
        noise_sigma: 0.0,
        seed: 1,
    })
    .expect("valid trace parameters")
}

/// One `m x n` output tile with its row tags, cut from a synthetic trace.
pub fn output_tile(temporal: f64) -> (Matrix, Vec<RowTag>) {
    let g = grid(16, 8, TILE.n, temporal);
    let x = g.concat();
    let rows = TILE.m.min(x.rows());
    (x.block(0, rows, 0, TILE.n), row_tags(&g)[..rows].to_vec())
}

/// Activation, its gathered form, and a weight matrix for GEMM benches.
pub fn gemm_inputs(temporal: f64) -> (Matrix, ConcentratedActivation, Matrix) {
    let g = grid(16, 8, 256, temporal);
    let x = g.concat();
    let conc = gather_activation(
        &x,
        &row_tags(&g),
        &TILE,
        &BlockConfig::default(),
        SimThreshold::Enabled(0.9),
    )
    .expect("valid tile");
    let w = grid(1, 16, 256, 0.0).image().block(0, 256, 0, 256);
    (x, conc, w)
}

/// Deterministic scores in `[0, 1]` with frequent ties.
pub fn importance(m: usize) -> ImportanceVector {
    let scores = (0..m).map(|i| ((i * 7919) % 1000) as f32 / 1000.0).collect();
    ImportanceVector::new(scores).expect("scores in range")
}
