//! Synthetic token traces, the `.fctr` container, and layer-wise sparsity traces.
//!
//! `.fctr` layout (all little-endian):
//!
//! ```text
//! "FCTR" | version u16 | F H W T d_model (u32 each)
//! version 1: M = F·H·W image rows, then T text rows (f32, FHW order)
//! version 2: S u32 | S offset deltas (u32) | S image rows | T text rows
//! ```
//!
//! Version 2 stores a pruned grid; the deltas are the offset encoding of the
//! surviving FHW indices.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::Dims;
use crate::error::{FocusError, Result};
use crate::grid::{fhw_delinearize, linear_unchecked, TokenGrid};
use crate::matrix::Matrix;
use crate::sec::{decode_offsets, encode_offsets, OffsetEncoding, RetainedSet};
use crate::wire::{Reader, Writer};

pub const TRACE_MAGIC: &[u8; 4] = b"FCTR";
pub const TRACE_VERSION_FULL: u16 = 1;
pub const TRACE_VERSION_PRUNED: u16 = 2;

/// Parameters of the synthetic video-token generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceGenConfig {
    pub dims: Dims,
    /// Probability that a token (f>0) is copied from the same position in frame f-1.
    pub temporal_similarity: f64,
    /// Probability that a non-temporal token is copied from its left (else upper) neighbour.
    pub spatial_similarity: f64,
    /// Std-dev of the i.i.d. Gaussian perturbation added to copied tokens.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl TraceGenConfig {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        for (name, v) in [
            ("temporal_similarity", self.temporal_similarity),
            ("spatial_similarity", self.spatial_similarity),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(FocusError::invalid(format!("{name} must be in [0,1], got {v}")));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(FocusError::invalid(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Generates a full token grid with controllable temporal and spatial redundancy.
///
/// Tokens are produced in FHW order. Each image token is, in priority order,
/// a noisy copy of the previous frame's token, a noisy copy of its left (or
/// upper) neighbour, or a fresh standard-normal vector. Text tokens are fresh.
pub fn generate_synthetic_trace(cfg: &TraceGenConfig) -> Result<TokenGrid> {
    cfg.validate()?;
    let dims = cfg.dims;
    let d = dims.d_model;
    let m = dims.image_tokens();
    let hw = dims.frame_size();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut image = Matrix::zeros(m, d);

    for idx in 0..m {
        let c = fhw_delinearize(idx, &dims)?;
        let source = if c.f > 0 && rng.random::<f64>() < cfg.temporal_similarity {
            Some(idx - hw)
        } else if (c.c > 0 || c.r > 0) && rng.random::<f64>() < cfg.spatial_similarity {
            Some(if c.c > 0 { idx - 1 } else { idx - dims.cols })
        } else {
            None
        };
        match source {
            Some(src) => {
                let copied = image.row(src).to_vec();
                let row = image.row_mut(idx);
                row.copy_from_slice(&copied);
                // Adding a zero perturbation would canonicalize -0.0, so skip it.
                if cfg.noise_sigma > 0.0 {
                    for v in row.iter_mut() {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *v += (z * cfg.noise_sigma) as f32;
                    }
                }
            }
            None => {
                for v in image.row_mut(idx).iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = z as f32;
                }
            }
        }
    }

    let mut text = Matrix::zeros(dims.text_tokens, d);
    for t in 0..dims.text_tokens {
        for v in text.row_mut(t).iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = z as f32;
        }
    }
    TokenGrid::new(dims, image, text)
}

/// Serializes a grid to the `.fctr` byte layout.
pub fn encode_trace(grid: &TokenGrid) -> Result<Vec<u8>> {
    let dims = grid.dims();
    let mut w = Writer::new();
    w.bytes(TRACE_MAGIC);
    w.u16(if grid.is_full() {
        TRACE_VERSION_FULL
    } else {
        TRACE_VERSION_PRUNED
    });
    w.usize_as_u32(dims.frames, "frames")?;
    w.usize_as_u32(dims.rows, "rows")?;
    w.usize_as_u32(dims.cols, "cols")?;
    w.usize_as_u32(dims.text_tokens, "text_tokens")?;
    w.usize_as_u32(dims.d_model, "d_model")?;
    if !grid.is_full() {
        let retained = RetainedSet::new(grid.linear_indices(), dims.image_tokens())?;
        let enc = encode_offsets(&retained);
        w.usize_as_u32(enc.deltas().len(), "retained_count")?;
        for &delta in enc.deltas() {
            w.usize_as_u32(delta, "offset_delta")?;
        }
    }
    w.f32s(grid.image().as_slice());
    w.f32s(grid.text().as_slice());
    Ok(w.finish())
}

/// Parses the `.fctr` byte layout.
///
/// `heads`/`head_dim` are not stored; the grid is returned with a single head
/// of width `d_model`.
pub fn decode_trace(bytes: &[u8]) -> Result<TokenGrid> {
    let mut r = Reader::new(bytes);
    r.magic(TRACE_MAGIC)?;
    let version = r.u16("version")?;
    if version != TRACE_VERSION_FULL && version != TRACE_VERSION_PRUNED {
        return Err(FocusError::format("version", format!("unsupported version {version}")));
    }
    let frames = r.usize("frames")?;
    let rows = r.usize("rows")?;
    let cols = r.usize("cols")?;
    let text_tokens = r.usize("text_tokens")?;
    let d_model = r.usize("d_model")?;
    let dims = Dims {
        frames,
        rows,
        cols,
        text_tokens,
        d_model,
        heads: 1,
        head_dim: d_model,
    };
    dims.validate().map_err(|e| FocusError::format("dims", e.to_string()))?;
    let m = dims.image_tokens();

    let coords = if version == TRACE_VERSION_PRUNED {
        let s = r.usize("retained_count")?;
        if s > m {
            return Err(FocusError::format("retained_count", format!("{s} exceeds F*H*W = {m}")));
        }
        let mut deltas = Vec::with_capacity(s);
        for _ in 0..s {
            deltas.push(r.usize("offset_delta")?);
        }
        let retained = decode_offsets(&OffsetEncoding::from_deltas(deltas))
            .and_then(|set| RetainedSet::new(set.indices().to_vec(), m))
            .map_err(|e| FocusError::format("offset_delta", e.to_string()))?;
        retained
            .indices()
            .iter()
            .map(|&i| fhw_delinearize(i, &dims))
            .collect::<Result<Vec<_>>>()?
    } else {
        (0..m).map(|i| fhw_delinearize(i, &dims)).collect::<Result<Vec<_>>>()?
    };

    let image = r.f32s(coords.len() * d_model, "image_rows")?;
    let text = r.f32s(text_tokens * d_model, "text_rows")?;
    r.finish()?;
    let image = Matrix::from_vec(coords.len(), d_model, image)?;
    let text = Matrix::from_vec(text_tokens, d_model, text)?;
    TokenGrid::with_coords(dims, coords, image, text)
}

pub fn write_trace(grid: &TokenGrid, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_trace(grid)?)?;
    Ok(())
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<TokenGrid> {
    decode_trace(&std::fs::read(path)?)
}

/// FHW index list of a grid, checked against its dims.
pub fn grid_retained_set(grid: &TokenGrid) -> Result<RetainedSet> {
    let dims = grid.dims();
    RetainedSet::new(
        grid.coords().iter().map(|&c| linear_unchecked(c, dims)).collect(),
        dims.image_tokens(),
    )
}

/// One layer's recorded operation counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityRecord {
    pub layer: usize,
    pub retained_ops: u64,
    pub total_ops: u64,
    pub retained_tokens: usize,
    pub compact_p: usize,
}

impl SparsityRecord {
    /// Executed fraction of the dense operation count.
    pub fn op_density(&self) -> f64 {
        self.retained_ops as f64 / self.total_ops as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparsityTrace {
    pub records: Vec<SparsityRecord>,
}

pub const SPARSITY_HEADER: &str = "layer,retained_ops,total_ops,retained_tokens,compact_p";

impl SparsityTrace {
    pub fn new(records: Vec<SparsityRecord>) -> Result<Self> {
        let t = Self { records };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(FocusError::invalid("sparsity trace has no layer records"));
        }
        let mut prev: Option<usize> = None;
        for rec in &self.records {
            if prev.is_some_and(|p| rec.layer <= p) {
                return Err(FocusError::invalid(format!(
                    "sparsity trace layer indices must be strictly increasing (layer {} after {})",
                    rec.layer,
                    prev.unwrap_or_default()
                )));
            }
            prev = Some(rec.layer);
            if rec.total_ops == 0 {
                return Err(FocusError::invalid(format!("layer {}: total_ops is 0", rec.layer)));
            }
            if rec.retained_ops > rec.total_ops {
                return Err(FocusError::invalid(format!(
                    "layer {}: retained_ops {} > total_ops {}",
                    rec.layer, rec.retained_ops, rec.total_ops
                )));
            }
            if rec.retained_tokens == 0 {
                return Err(FocusError::invalid(format!(
                    "layer {}: retained_tokens must be > 0",
                    rec.layer
                )));
            }
        }
        Ok(())
    }

    /// Checks the bounds that depend on the run configuration (S ≤ M, p ≤ m).
    pub fn validate_against(&self, m_image: usize, tile_m: usize) -> Result<()> {
        for rec in &self.records {
            if rec.retained_tokens > m_image {
                return Err(FocusError::invalid(format!(
                    "layer {}: retained_tokens {} > image tokens {m_image}",
                    rec.layer, rec.retained_tokens
                )));
            }
            if rec.compact_p == 0 || rec.compact_p > tile_m {
                return Err(FocusError::invalid(format!(
                    "layer {}: compact_p {} not in [1, tile.m = {tile_m}]",
                    rec.layer, rec.compact_p
                )));
            }
        }
        Ok(())
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        let records = if headers.is_empty() {
            Vec::new()
        } else if headers.iter().any(|h| h.parse::<u64>().is_ok()) {
            // Headerless file: the first line is data.
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(false)
                .trim(csv::Trim::All)
                .from_reader(text.as_bytes());
            rdr.deserialize().collect::<Result<Vec<SparsityRecord>, _>>()?
        } else {
            let expected: Vec<&str> = SPARSITY_HEADER.split(',').collect();
            if headers.iter().collect::<Vec<_>>() != expected {
                return Err(FocusError::invalid(format!(
                    "sparsity trace header must be `{SPARSITY_HEADER}`"
                )));
            }
            rdr.deserialize().collect::<Result<Vec<SparsityRecord>, _>>()?
        };
        Self::new(records)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(SPARSITY_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.layer, r.retained_ops, r.total_ops, r.retained_tokens, r.compact_p
            ));
        }
        out
    }
}

pub fn read_sparsity_trace(path: impl AsRef<Path>) -> Result<SparsityTrace> {
    SparsityTrace::from_csv_str(&std::fs::read_to_string(path)?)
}

pub fn write_sparsity_trace(trace: &SparsityTrace, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, trace.to_csv_string())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(f: usize, h: usize, w: usize, t: usize, d: usize) -> Dims {
        Dims {
            frames: f,
            rows: h,
            cols: w,
            text_tokens: t,
            d_model: d,
            heads: 1,
            head_dim: d,
        }
    }

    fn gen(temporal: f64, spatial: f64, noise: f64, seed: u64, d: Dims) -> TokenGrid {
        generate_synthetic_trace(&TraceGenConfig {
            dims: d,
            temporal_similarity: temporal,
            spatial_similarity: spatial,
            noise_sigma: noise,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn full_temporal_copy_without_noise_repeats_frames() {
        let d = dims(3, 4, 5, 2, 16);
        let g = gen(1.0, 0.0, 0.0, 11, d);
        let hw = d.frame_size();
        for f in 1..3 {
            for i in 0..hw {
                let a = g.image().row(f * hw + i);
                let b = g.image().row(i);
                assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }

    #[test]
    fn independent_frames_are_dissimilar() {
        // 1000 adjacent-frame pairs.
        let d = dims(11, 10, 10, 0, 64);
        let g = gen(0.0, 0.0, 0.0, 3, d);
        let hw = d.frame_size();
        let mut total = 0.0f64;
        let mut count = 0usize;
        for f in 1..d.frames {
            for i in 0..hw {
                let a = g.image().row(f * hw + i);
                let b = g.image().row((f - 1) * hw + i);
                let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
                let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
                let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
                total += dot / (na * nb);
                count += 1;
            }
        }
        assert_eq!(count, 1000);
        assert!(total / (count as f64) < 0.3);
    }

    #[test]
    fn generator_is_deterministic() {
        let d = dims(2, 3, 3, 4, 8);
        assert!(gen(0.5, 0.5, 0.1, 42, d) == gen(0.5, 0.5, 0.1, 42, d));
        assert!(gen(0.5, 0.5, 0.1, 42, d) != gen(0.5, 0.5, 0.1, 43, d));
    }

    #[test]
    fn generator_rejects_bad_fractions() {
        let cfg = TraceGenConfig {
            dims: dims(1, 1, 1, 0, 4),
            temporal_similarity: 1.5,
            spatial_similarity: 0.0,
            noise_sigma: 0.0,
            seed: 0,
        };
        assert!(generate_synthetic_trace(&cfg).is_err());
    }

    #[test]
    fn corrupt_magic_is_a_format_error() {
        let g = gen(0.5, 0.5, 0.1, 1, dims(1, 2, 2, 1, 4));
        let mut bytes = encode_trace(&g).unwrap();
        bytes[0] = b'X';
        match decode_trace(&bytes) {
            Err(FocusError::Format { field, .. }) => assert_eq!(field, "magic"),
            other => panic!("expected magic error, got {other:?}"),
        }
    }

    #[test]
    fn missing_row_is_a_truncation_error() {
        // M = 10 in the header, 9 rows in the payload.
        let d = dims(1, 2, 5, 0, 4);
        let g = gen(0.0, 0.0, 0.0, 1, d);
        let mut bytes = encode_trace(&g).unwrap();
        bytes.truncate(bytes.len() - 4 * 4);
        match decode_trace(&bytes) {
            Err(FocusError::Format { field, reason }) => {
                assert_eq!(field, "image_rows");
                assert!(reason.contains("truncated"));
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let g = gen(0.0, 0.0, 0.0, 1, dims(1, 1, 2, 0, 4));
        let mut bytes = encode_trace(&g).unwrap();
        bytes.push(0);
        assert!(decode_trace(&bytes).is_err());
    }

    #[test]
    fn header_layout_is_pinned() {
        let g = gen(0.0, 0.0, 0.0, 1, dims(2, 3, 4, 5, 8));
        let bytes = encode_trace(&g).unwrap();
        assert_eq!(&bytes[0..4], b"FCTR");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        let u = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        assert_eq!((u(6), u(10), u(14), u(18), u(22)), (2, 3, 4, 5, 8));
        assert_eq!(bytes.len(), 26 + (24 + 5) * 8 * 4);
        assert_eq!(
            f32::from_le_bytes(bytes[26..30].try_into().unwrap()).to_bits(),
            g.image().get(0, 0).to_bits()
        );
    }

    #[test]
    fn sparsity_row_parses() {
        let t = SparsityTrace::from_csv_str(&format!("{SPARSITY_HEADER}\n0,1000,5000,400,512\n")).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.records[0].layer, 0);
        assert!((t.records[0].op_density() - 0.2).abs() < 1e-12);
        let bare = SparsityTrace::from_csv_str("0,1000,5000,400,512\n").unwrap();
        assert_eq!(bare, t);
    }

    #[test]
    fn sparsity_validation_errors() {
        assert!(matches!(
            SparsityTrace::from_csv_str(""),
            Err(FocusError::Validation(_))
        ));
        assert!(matches!(
            SparsityTrace::from_csv_str(&format!("{SPARSITY_HEADER}\n")),
            Err(FocusError::Validation(_))
        ));
        assert!(matches!(
            SparsityTrace::from_csv_str(&format!("{SPARSITY_HEADER}\n0,6000,5000,400,512\n")),
            Err(FocusError::Validation(_))
        ));
        assert!(matches!(
            SparsityTrace::from_csv_str(&format!("{SPARSITY_HEADER}\n1,10,50,4,5\n1,10,50,4,5\n")),
            Err(FocusError::Validation(_))
        ));
    }

    #[test]
    fn sparsity_csv_round_trip() {
        let t = SparsityTrace::new(vec![
            SparsityRecord {
                layer: 0,
                retained_ops: 10,
                total_ops: 20,
                retained_tokens: 7,
                compact_p: 3,
            },
            SparsityRecord {
                layer: 4,
                retained_ops: 1,
                total_ops: 20,
                retained_tokens: 2,
                compact_p: 1,
            },
        ])
        .unwrap();
        assert_eq!(SparsityTrace::from_csv_str(&t.to_csv_string()).unwrap(), t);
    }
}
