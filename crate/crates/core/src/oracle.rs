//! Dense reference forward pass: no pruning, no merging, same arithmetic order.

use crate::config::FocusConfig;
use crate::error::{FocusError, Result};
use crate::gemm::dense_gemm_tiled;
use crate::grid::TokenGrid;
use crate::layer::{check_pipeline_config, relu, softmax_rows, LayerWeights};
use crate::matrix::Matrix;

/// One dense layer on an `(S+T) x d_model` token matrix.
pub fn dense_layer(x: &Matrix, w: &LayerWeights, cfg: &FocusConfig) -> Result<Matrix> {
    let tile = &cfg.tile;
    let (heads, hd) = (cfg.dims.heads, cfg.dims.head_dim);
    let q = dense_gemm_tiled(x, &w.wq, tile)?;
    let k = dense_gemm_tiled(x, &w.wk, tile)?;
    let v = dense_gemm_tiled(x, &w.wv, tile)?;
    let rows = x.rows();
    let scale = 1.0 / (hd as f32).sqrt();
    let mut attn = Matrix::zeros(rows, cfg.dims.d_model);
    for h in 0..heads {
        let mut p = dense_gemm_tiled(
            &q.block(0, rows, h * hd, hd),
            &k.block(0, rows, h * hd, hd).transpose(),
            tile,
        )?;
        softmax_rows(&mut p, scale);
        attn.put_block(0, h * hd, &dense_gemm_tiled(&p, &v.block(0, rows, h * hd, hd), tile)?);
    }
    let o = dense_gemm_tiled(&attn, &w.wo, tile)?;
    let mut hidden = dense_gemm_tiled(&o, &w.w1, tile)?;
    hidden.map_inplace(relu);
    dense_gemm_tiled(&hidden, &w.w2, tile)
}

/// Runs `cfg.num_layers` dense layers over every token of `grid`.
pub fn dense_forward(grid: &TokenGrid, weights: &[LayerWeights], cfg: &FocusConfig) -> Result<TokenGrid> {
    check_pipeline_config(cfg)?;
    if weights.len() < cfg.num_layers {
        return Err(FocusError::arg(format!(
            "{} weight layers for num_layers = {}",
            weights.len(),
            cfg.num_layers
        )));
    }
    let grid = grid.clone().with_dims(cfg.dims)?;
    let mut x = grid.concat();
    for w in weights.iter().take(cfg.num_layers) {
        w.validate(cfg.dims.d_model, cfg.ffn_dim())?;
        x = dense_layer(&x, w, cfg)?;
    }
    grid.replace_values(&x)
}

/// Largest absolute difference between a pipeline output and the dense
/// reference, over the rows the pipeline kept (its image rows and all text).
pub fn max_abs_error(output: &TokenGrid, reference: &TokenGrid) -> Result<f32> {
    let ref_idx = reference.linear_indices();
    let mut rows = Vec::with_capacity(output.image_rows());
    for idx in output.linear_indices() {
        let pos = ref_idx
            .binary_search(&idx)
            .map_err(|_| FocusError::arg(format!("token {idx} missing from reference")))?;
        rows.push(pos);
    }
    let image = reference.image().select_rows(&rows);
    let mut err = output.image().max_abs_diff(&image)?;
    err = err.max(output.text().max_abs_diff(reference.text())?);
    Ok(err)
}
