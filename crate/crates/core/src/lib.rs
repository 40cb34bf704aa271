//! Functional and cycle-level model of a streaming-concentration VLM accelerator.
//!
//! The functional side runs a simplified transformer layer stack in which
//! image tokens are pruned by cross-modal importance ([`sec`]) and similar
//! output vectors are deduplicated inside GEMM tiles ([`sic`], [`gemm`]).
//! The analytical side ([`perf`]) turns the recorded work into cycles, DRAM
//! traffic, energy and buffer occupancy.

pub mod config;
pub mod error;
pub mod gemm;
pub mod grid;
pub mod layer;
pub mod matrix;
pub mod oracle;
pub mod perf;
pub mod sec;
pub mod sic;
pub mod stats;
pub mod trace;
mod wire;

pub use config::{
    BlockConfig, BufferCapacities, Dims, EnergyCoeffs, FocusConfig, RetentionSchedule, SimThreshold, TileConfig,
};
pub use error::{FocusError, Result};
pub use gemm::{ConcentratedActivation, ConcentratedMatrix};
pub use grid::{Coord, TokenGrid};
pub use layer::{layer_forward, run_pipeline, Activations, LayerWeights, PipelineRun};
pub use matrix::Matrix;
pub use perf::{PerfReport, SecOverlap};
pub use sec::{ImportanceVector, OffsetEncoding, RetainedSet};
pub use sic::{CompactTile, SimilarityMap};
pub use stats::{GemmKind, GemmRecord, LayerStats};
pub use trace::{SparsityRecord, SparsityTrace, TraceGenConfig};
