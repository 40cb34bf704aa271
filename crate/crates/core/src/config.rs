//! Configuration records shared by every stage of the model.
//!
//! All records are plain data, immutable once validated, and round-trip
//! through JSON with snake_case field names.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FocusError, Result};

/// Problem dimensions of one VLM prefill pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Frame count F.
    pub frames: usize,
    /// Rows per frame H.
    pub rows: usize,
    /// Columns per frame W.
    pub cols: usize,
    /// Text-token count T.
    pub text_tokens: usize,
    /// Hidden width.
    pub d_model: usize,
    pub heads: usize,
    pub head_dim: usize,
}

impl Dims {
    /// Image-token count M = F·H·W.
    #[inline]
    pub fn image_tokens(&self) -> usize {
        self.frames * self.rows * self.cols
    }

    #[inline]
    pub fn frame_size(&self) -> usize {
        self.rows * self.cols
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.rows == 0 || self.cols == 0 {
            return Err(FocusError::invalid(format!(
                "dims.frames/rows/cols must be >= 1, got {}x{}x{}",
                self.frames, self.rows, self.cols
            )));
        }
        if self.d_model == 0 {
            return Err(FocusError::invalid("dims.d_model must be >= 1"));
        }
        if self.heads == 0 || self.head_dim == 0 || self.heads * self.head_dim != self.d_model {
            return Err(FocusError::invalid(format!(
                "dims.heads * dims.head_dim must equal dims.d_model ({} * {} != {})",
                self.heads, self.head_dim, self.d_model
            )));
        }
        Ok(())
    }
}

/// GEMM tiling and PE-array geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileConfig {
    /// Output-tile row count.
    pub m: usize,
    /// Output-tile column count, which is also the gathered vector length.
    pub n: usize,
    /// K-dimension sub-tile width.
    pub k: usize,
    /// PE array width.
    pub a: usize,
    /// PE array height.
    pub b: usize,
}

impl Default for TileConfig {
    fn default() -> Self {
        Self {
            m: 1024,
            n: 32,
            k: 32,
            a: 32,
            b: 32,
        }
    }
}

impl TileConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("m", self.m),
            ("n", self.n),
            ("k", self.k),
            ("a", self.a),
            ("b", self.b),
        ] {
            if v == 0 {
                return Err(FocusError::invalid(format!("tile.{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// Spatiotemporal comparison window; stride is always 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockConfig {
    pub bf: usize,
    pub bh: usize,
    pub bw: usize,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self { bf: 2, bh: 2, bw: 2 }
    }
}

impl BlockConfig {
    pub fn new(bf: usize, bh: usize, bw: usize) -> Self {
        Self { bf, bh, bw }
    }

    #[inline]
    pub fn volume(&self) -> usize {
        self.bf * self.bh * self.bw
    }

    pub fn validate(&self) -> Result<()> {
        if self.bf == 0 || self.bh == 0 || self.bw == 0 {
            return Err(FocusError::invalid(format!(
                "block extents must be >= 1, got {}x{}x{}",
                self.bf, self.bh, self.bw
            )));
        }
        Ok(())
    }
}

/// Cosine-similarity threshold for vector merging, or `"disabled"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SimThreshold {
    Enabled(f32),
    Disabled(Disabled),
}

/// Serde marker for the literal string `"disabled"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Disabled {
    Disabled,
}

impl SimThreshold {
    pub const DISABLED: SimThreshold = SimThreshold::Disabled(Disabled::Disabled);

    pub fn value(&self) -> Option<f32> {
        match self {
            SimThreshold::Enabled(t) => Some(*t),
            SimThreshold::Disabled(_) => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let SimThreshold::Enabled(t) = self {
            if !(0.0..=1.0).contains(t) {
                return Err(FocusError::invalid(format!(
                    "sim_threshold must be in [0,1] or \"disabled\", got {t}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for SimThreshold {
    fn default() -> Self {
        SimThreshold::Enabled(0.9)
    }
}

/// Layer-indexed image-token retention fractions (of the original M).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RetentionSchedule(pub Vec<(usize, f64)>);

impl RetentionSchedule {
    /// Retain 40/30/20/15/10 % at layers 3/6/9/18/26.
    pub fn focus_default() -> Self {
        Self(vec![(3, 0.40), (6, 0.30), (9, 0.20), (18, 0.15), (26, 0.10)])
    }

    pub fn none() -> Self {
        Self(Vec::new())
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.0
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev: Option<(usize, f64)> = None;
        for &(layer, frac) in &self.0 {
            if !(frac > 0.0 && frac <= 1.0) {
                return Err(FocusError::invalid(format!(
                    "retention_schedule fraction {frac} at layer {layer} not in (0,1]"
                )));
            }
            if let Some((pl, pf)) = prev {
                if layer <= pl {
                    return Err(FocusError::invalid(format!(
                        "retention_schedule layers must be strictly increasing ({pl} then {layer})"
                    )));
                }
                if frac > pf {
                    return Err(FocusError::invalid(format!(
                        "retention_schedule fractions must be non-increasing ({pf} then {frac})"
                    )));
                }
            }
            prev = Some((layer, frac));
        }
        Ok(())
    }
}

/// Per-event energy coefficients in picojoules.
///
/// The shipped defaults are round placeholder numbers; they are not calibrated
/// against any synthesized design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyCoeffs {
    pub pj_per_mac: f64,
    pub pj_per_sram_byte: f64,
    pub pj_per_dram_byte: f64,
}

impl Default for EnergyCoeffs {
    fn default() -> Self {
        Self {
            pj_per_mac: 1.0,
            pj_per_sram_byte: 1.5,
            pj_per_dram_byte: 20.0,
        }
    }
}

impl EnergyCoeffs {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pj_per_mac", self.pj_per_mac),
            ("pj_per_sram_byte", self.pj_per_sram_byte),
            ("pj_per_dram_byte", self.pj_per_dram_byte),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(FocusError::invalid(format!(
                    "energy_coeffs.{name} must be a finite value >= 0"
                )));
            }
        }
        Ok(())
    }
}

/// On-chip buffer capacities in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferCapacities {
    pub input: usize,
    pub weight: usize,
    pub output: usize,
    pub layouter: usize,
    pub importance: usize,
}

impl Default for BufferCapacities {
    fn default() -> Self {
        const KB: usize = 1024;
        Self {
            input: 128 * KB,
            weight: 78 * KB,
            output: 512 * KB,
            layouter: 16 * KB,
            importance: 25 * KB,
        }
    }
}

/// Complete accelerator + workload configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocusConfig {
    pub dims: Dims,
    #[serde(default)]
    pub tile: TileConfig,
    #[serde(default)]
    pub block: BlockConfig,
    #[serde(default)]
    pub sim_threshold: SimThreshold,
    #[serde(default)]
    pub retention_schedule: RetentionSchedule,
    pub num_layers: usize,
    #[serde(default = "default_accumulators")]
    pub scatter_accumulators: usize,
    #[serde(default)]
    pub energy_coeffs: EnergyCoeffs,
    /// Off-chip bandwidth in bytes per cycle.
    #[serde(default = "default_bandwidth")]
    pub dram_bandwidth: f64,
    /// FFN hidden width; defaults to `4 * d_model`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ffn_dim: Option<usize>,
    #[serde(default)]
    pub buffers: BufferCapacities,
}

fn default_accumulators() -> usize {
    64
}

fn default_bandwidth() -> f64 {
    // 64 GB/s at 500 MHz.
    128.0
}

impl Default for FocusConfig {
    /// 32 frames of 14x14 tokens (M = 6272), 109 text tokens, 28 heads of 128,
    /// a 32x32 array and the published hyper-parameters.
    fn default() -> Self {
        Self {
            dims: Dims {
                frames: 32,
                rows: 14,
                cols: 14,
                text_tokens: 109,
                d_model: 3584,
                heads: 28,
                head_dim: 128,
            },
            tile: TileConfig::default(),
            block: BlockConfig::default(),
            sim_threshold: SimThreshold::default(),
            retention_schedule: RetentionSchedule::focus_default(),
            num_layers: 28,
            scatter_accumulators: default_accumulators(),
            energy_coeffs: EnergyCoeffs::default(),
            dram_bandwidth: default_bandwidth(),
            ffn_dim: None,
            buffers: BufferCapacities::default(),
        }
    }
}

impl FocusConfig {
    pub fn ffn_dim(&self) -> usize {
        self.ffn_dim.unwrap_or(4 * self.dims.d_model)
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.tile.validate()?;
        self.block.validate()?;
        self.sim_threshold.validate()?;
        self.retention_schedule.validate()?;
        self.energy_coeffs.validate()?;
        if self.scatter_accumulators == 0 {
            return Err(FocusError::invalid("scatter_accumulators must be >= 1"));
        }
        if !(self.dram_bandwidth > 0.0 && self.dram_bandwidth.is_finite()) {
            return Err(FocusError::invalid("dram_bandwidth must be > 0"));
        }
        if self.ffn_dim == Some(0) {
            return Err(FocusError::invalid("ffn_dim must be >= 1"));
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: FocusConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = FocusConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.dims.image_tokens(), 6272);
    }

    #[test]
    fn json_round_trip_with_disabled_threshold() {
        let cfg = FocusConfig {
            sim_threshold: SimThreshold::DISABLED,
            ..FocusConfig::default()
        };
        let text = cfg.to_json_pretty();
        assert!(text.contains("\"disabled\""));
        let back = FocusConfig::from_json_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn minimal_json_uses_defaults() {
        let text = r#"{
            "dims": {"frames": 2, "rows": 4, "cols": 4, "text_tokens": 3,
                     "d_model": 64, "heads": 2, "head_dim": 32},
            "num_layers": 1,
            "sim_threshold": 0.8,
            "retention_schedule": [[0, 0.5]]
        }"#;
        let cfg = FocusConfig::from_json_str(text).unwrap();
        assert_eq!(cfg.tile, TileConfig::default());
        assert_eq!(cfg.sim_threshold.value(), Some(0.8));
        assert_eq!(cfg.retention_schedule.entries(), &[(0, 0.5)]);
        assert_eq!(cfg.scatter_accumulators, 64);
    }

    #[test]
    fn schedule_validation() {
        assert!(RetentionSchedule(vec![(3, 0.4), (3, 0.3)]).validate().is_err());
        assert!(RetentionSchedule(vec![(3, 0.4), (6, 0.5)]).validate().is_err());
        assert!(RetentionSchedule(vec![(3, 0.0)]).validate().is_err());
        assert!(RetentionSchedule(vec![(3, 1.2)]).validate().is_err());
        RetentionSchedule::focus_default().validate().unwrap();
    }

    #[test]
    fn head_product_must_match_width() {
        let mut d = FocusConfig::default().dims;
        d.heads = 3;
        assert!(d.validate().is_err());
    }

    #[test]
    fn threshold_out_of_range_rejected() {
        assert!(SimThreshold::Enabled(1.5).validate().is_err());
        assert!(SimThreshold::Enabled(-0.1).validate().is_err());
        SimThreshold::DISABLED.validate().unwrap();
    }
}
