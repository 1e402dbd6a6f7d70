//! Architecture and model configuration shared by every other module.
//!
//! Configurations are plain JSON files with an explicit `schema_version`
//! field. All counts are explicit; the only silent default is the pipeline
//! depth `P` (4 stages, typical of a MAC + accumulate + shift pipeline).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

fn default_pipeline_stages() -> u64 {
    4
}

fn default_psum_element_bits() -> u64 {
    32
}

/// Full architecture parameterization of one machine.
///
/// `legions` is the paper's L, `cores_per_legion` is C, `core_dim` is D and
/// `pipeline_stages` is P. Immutable after validation; safe to share
/// read-only across concurrently executing simulation runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub schema_version: u32,
    pub legions: u64,
    pub cores_per_legion: u64,
    /// PEs per row/column of one systolic core.
    pub core_dim: u64,
    #[serde(default = "default_pipeline_stages")]
    pub pipeline_stages: u64,
    pub frequency_hz: f64,
    pub accumulators_per_legion: u64,
    pub psum_bank_count: u64,
    pub psum_bank_bytes: u64,
    pub legion_link_bits: u64,
    /// Accumulator width of one psum element.
    #[serde(default = "default_psum_element_bits")]
    pub psum_element_bits: u64,
}

impl ArchConfig {
    pub fn total_pes(&self) -> u64 {
        self.legions * self.cores_per_legion * self.core_dim * self.core_dim
    }

    /// Checks every invariant and returns the config unchanged on success.
    pub fn validate(self) -> Result<ArchConfig> {
        let mut errors = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            errors.push(format!(
                "schema_version: expected {SCHEMA_VERSION}, found {}",
                self.schema_version
            ));
        }
        if self.legions < 1 {
            errors.push("legions: L >= 1 violated".to_string());
        }
        if self.cores_per_legion < 1 {
            errors.push("cores_per_legion: C >= 1 violated".to_string());
        }
        if self.core_dim < 1 {
            errors.push("core_dim: D >= 1 violated".to_string());
        }
        if !(self.frequency_hz > 0.0) {
            errors.push("frequency_hz: must be > 0".to_string());
        }
        if self.accumulators_per_legion < 1 {
            errors.push("accumulators_per_legion: must be >= 1".to_string());
        }
        if self.psum_bank_count < 1 {
            errors.push("psum_bank_count: must be >= 1".to_string());
        }
        if self.legion_link_bits % 8 != 0 {
            errors.push(format!(
                "legion_link_bits: {} not divisible by 8",
                self.legion_link_bits
            ));
        }
        // One widest output tile (D x 4D, accumulator-width elements) must
        // fit in the on-chip psum banks.
        let widest_tile = self.core_dim * 4 * self.core_dim * (self.psum_element_bits / 8);
        if self.psum_bank_bytes * self.psum_bank_count < widest_tile {
            errors.push(format!(
                "psum banks: {} x {} bytes cannot hold one widest output tile ({widest_tile} bytes)",
                self.psum_bank_count, self.psum_bank_bytes
            ));
        }
        if errors.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidConfig(errors))
        }
    }
}

/// Precision mode of the reconfigurable PEs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PrecisionMode {
    /// 8b x 8b, one product per PE per cycle.
    Dense8x8,
    /// 8b x 4b, two interleaved products per PE per cycle.
    Proj8x4,
    /// 8b x 2b, four interleaved products per PE per cycle.
    Proj8x2,
}

impl PrecisionMode {
    /// Acceleration ratio R for quantized workloads.
    pub fn acceleration_ratio(self) -> u64 {
        match self {
            PrecisionMode::Dense8x8 => 1,
            PrecisionMode::Proj8x4 => 2,
            PrecisionMode::Proj8x2 => 4,
        }
    }

    /// Weight width in bits for this mode.
    pub fn weight_bits(self) -> u8 {
        match self {
            PrecisionMode::Dense8x8 => 8,
            PrecisionMode::Proj8x4 => 4,
            PrecisionMode::Proj8x2 => 2,
        }
    }

    pub fn is_projection(self) -> bool {
        !matches!(self, PrecisionMode::Dense8x8)
    }

    /// Narrowest projection mode able to hold `weight_bits`-wide weights.
    pub fn for_weight_bits(weight_bits: u64) -> PrecisionMode {
        match weight_bits {
            0..=2 => PrecisionMode::Proj8x2,
            3..=4 => PrecisionMode::Proj8x4,
            _ => PrecisionMode::Dense8x8,
        }
    }
}

impl std::fmt::Display for PrecisionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PrecisionMode::Dense8x8 => "dense8x8",
            PrecisionMode::Proj8x4 => "proj8x4",
            PrecisionMode::Proj8x2 => "proj8x2",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttentionKind {
    Mha,
    Gqa,
    Mqa,
}

/// Transformer model shape driving the attention workload generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub schema_version: u32,
    pub layers: u64,
    pub hidden_size: u64,
    pub num_heads: u64,
    pub num_kv_heads: u64,
    pub head_dim: u64,
    pub seq_len: u64,
    pub weight_bits: u64,
    pub activation_bits: u64,
}

impl ModelConfig {
    pub fn attention_kind(&self) -> AttentionKind {
        if self.num_kv_heads == self.num_heads {
            AttentionKind::Mha
        } else if self.num_kv_heads == 1 {
            AttentionKind::Mqa
        } else {
            AttentionKind::Gqa
        }
    }

    pub fn validate(self) -> Result<ModelConfig> {
        let mut errors = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            errors.push(format!(
                "schema_version: expected {SCHEMA_VERSION}, found {}",
                self.schema_version
            ));
        }
        for (name, v) in [
            ("layers", self.layers),
            ("hidden_size", self.hidden_size),
            ("num_heads", self.num_heads),
            ("head_dim", self.head_dim),
            ("seq_len", self.seq_len),
            ("weight_bits", self.weight_bits),
            ("activation_bits", self.activation_bits),
        ] {
            if v < 1 {
                errors.push(format!("{name}: must be >= 1"));
            }
        }
        if self.num_kv_heads < 1 {
            errors.push("num_kv_heads: G >= 1 violated".to_string());
        } else if self.num_heads % self.num_kv_heads != 0 {
            errors.push(format!(
                "num_kv_heads: H mod G != 0 (H={}, G={})",
                self.num_heads, self.num_kv_heads
            ));
        }
        if errors.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidConfig(errors))
        }
    }
}

/// Timing and traffic model family a configuration belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArchKind {
    /// Many-Legion machine with multicast NoC and spatial psum reduction.
    DLegion,
    /// Weight-stationary single core with input/output synchronization FIFOs.
    Ws,
    /// Diagonal-input-permuted-weight single core, INT8 only.
    Dip,
    /// Single adaptive-precision core.
    AdipSingle,
    /// Four parallel weight-stationary 128x128 MXUs.
    Tpuv4i,
}

impl ArchKind {
    /// WS-style cores pay diagonal-wave fill/drain overhead per tile pass.
    pub fn is_weight_stationary(self) -> bool {
        matches!(self, ArchKind::Ws | ArchKind::Tpuv4i)
    }

    /// Whether projection workloads run in their quantized mode. WS, DiP and
    /// TPUv4i execute everything in INT8.
    pub fn supports_quantized_accel(self) -> bool {
        matches!(self, ArchKind::DLegion | ArchKind::AdipSingle)
    }

    /// Whether the NoC can multicast one off-chip fetch to several units.
    pub fn supports_multicast(self) -> bool {
        matches!(self, ArchKind::DLegion)
    }

    /// Whether accumulators spatially reduce the C per-core psum streams to
    /// one stream before the banks. Single-core machines have nothing to
    /// reduce.
    pub fn spatial_reduction(self) -> bool {
        matches!(self, ArchKind::DLegion)
    }
}

impl std::fmt::Display for ArchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ArchKind::DLegion => "d-legion",
            ArchKind::Ws => "ws",
            ArchKind::Dip => "dip",
            ArchKind::AdipSingle => "adip",
            ArchKind::Tpuv4i => "tpuv4i",
        };
        write!(f, "{s}")
    }
}

/// A named canonical configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub kind: ArchKind,
    pub arch: ArchConfig,
    pub model: ModelConfig,
}

fn dlegion_arch(legions: u64) -> ArchConfig {
    ArchConfig {
        schema_version: SCHEMA_VERSION,
        legions,
        cores_per_legion: 8,
        core_dim: 16,
        pipeline_stages: 4,
        frequency_hz: 1.0e9,
        accumulators_per_legion: 4,
        psum_bank_count: 4,
        psum_bank_bytes: 660_000, // 0.66 MB per bank, 2.64 MB per Legion
        legion_link_bits: 1024,
        psum_element_bits: 32,
    }
}

fn single_core_64() -> ArchConfig {
    ArchConfig {
        schema_version: SCHEMA_VERSION,
        legions: 1,
        cores_per_legion: 1,
        core_dim: 64,
        pipeline_stages: 4,
        frequency_hz: 1.0e9,
        accumulators_per_legion: 1,
        psum_bank_count: 4,
        psum_bank_bytes: 660_000,
        legion_link_bits: 512,
        psum_element_bits: 32,
    }
}

fn tpuv4i_arch() -> ArchConfig {
    ArchConfig {
        schema_version: SCHEMA_VERSION,
        legions: 4, // 4 MXUs
        cores_per_legion: 1,
        core_dim: 128,
        pipeline_stages: 4,
        frequency_hz: 1.05e9,
        accumulators_per_legion: 1,
        psum_bank_count: 4,
        psum_bank_bytes: 4 << 20,
        legion_link_bits: 1024,
        psum_element_bits: 32,
    }
}

fn bitnet_1_58b() -> ModelConfig {
    ModelConfig {
        schema_version: SCHEMA_VERSION,
        layers: 32,
        hidden_size: 2560,
        num_heads: 16,
        num_kv_heads: 16,
        head_dim: 128,
        seq_len: 2048,
        weight_bits: 2,
        activation_bits: 8,
    }
}

fn bitnet_1_58b_kv() -> ModelConfig {
    ModelConfig {
        num_kv_heads: 4,
        ..bitnet_1_58b()
    }
}

pub const PRESET_NAMES: &[&str] = &[
    "dlegion-8",
    "dlegion-32",
    "dlegion-64",
    "ws-64",
    "dip-64",
    "adip-64",
    "tpuv4i",
    "bitnet-1.58b",
    "bitnet-1.58b-kv",
];

/// Looks up a canonical configuration by name. Architecture presets pair
/// with the BitNet-1.58B model; model presets pair with the 8-Legion
/// machine.
pub fn preset(name: &str) -> Result<Preset> {
    let (kind, arch, model) = match name {
        "dlegion-8" => (ArchKind::DLegion, dlegion_arch(8), bitnet_1_58b()),
        "dlegion-32" => (ArchKind::DLegion, dlegion_arch(32), bitnet_1_58b()),
        "dlegion-64" => (ArchKind::DLegion, dlegion_arch(64), bitnet_1_58b()),
        "ws-64" => (ArchKind::Ws, single_core_64(), bitnet_1_58b()),
        "dip-64" => (ArchKind::Dip, single_core_64(), bitnet_1_58b()),
        "adip-64" => (ArchKind::AdipSingle, single_core_64(), bitnet_1_58b()),
        "tpuv4i" => (ArchKind::Tpuv4i, tpuv4i_arch(), bitnet_1_58b()),
        "bitnet-1.58b" => (ArchKind::DLegion, dlegion_arch(8), bitnet_1_58b()),
        "bitnet-1.58b-kv" => (ArchKind::DLegion, dlegion_arch(8), bitnet_1_58b_kv()),
        _ => return Err(Error::UnknownPreset(name.to_string())),
    };
    Ok(Preset {
        name: name.to_string(),
        kind,
        arch: arch.validate()?,
        model: model.validate()?,
    })
}
