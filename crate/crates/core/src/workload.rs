//! Per-stage GEMM workloads of an attention layer.
//!
//! The generator walks the four matrix-multiplication stages of attention
//! (QKV projections, attention score, attention output, output projection)
//! and emits one GEMM per head per layer. Softmax and other non-GEMM
//! operators are not modeled.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, PrecisionMode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    QProj,
    KProj,
    VProj,
    AttnScore,
    AttnOutput,
    OutProj,
}

pub const ALL_STAGES: [Stage; 6] = [
    Stage::QProj,
    Stage::KProj,
    Stage::VProj,
    Stage::AttnScore,
    Stage::AttnOutput,
    Stage::OutProj,
];

impl Stage {
    pub fn is_projection(self) -> bool {
        matches!(
            self,
            Stage::QProj | Stage::KProj | Stage::VProj | Stage::OutProj
        )
    }

    /// Activation-to-activation stages process per query head.
    pub fn is_attention(self) -> bool {
        matches!(self, Stage::AttnScore | Stage::AttnOutput)
    }

    pub fn label(self) -> &'static str {
        match self {
            Stage::QProj => "q_proj",
            Stage::KProj => "k_proj",
            Stage::VProj => "v_proj",
            Stage::AttnScore => "attn_score",
            Stage::AttnOutput => "attn_output",
            Stage::OutProj => "out_proj",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// One GEMM stage workload: output is M x N with inner dimension K.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub m: u64,
    pub k: u64,
    pub n: u64,
    pub mode: PrecisionMode,
    pub stage: Stage,
    pub layer: u32,
    pub head_id: Option<u32>,
    pub kv_group_id: Option<u32>,
}

impl WorkloadSpec {
    /// Multiplications + additions of this GEMM.
    pub fn ops(&self) -> u64 {
        2 * self.m * self.k * self.n
    }

    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.m < 1 || self.k < 1 || self.n < 1 {
            errors.push(format!(
                "workload dimensions must be >= 1 (M={}, K={}, N={})",
                self.m, self.k, self.n
            ));
        }
        if self.stage.is_attention() && self.mode != PrecisionMode::Dense8x8 {
            errors.push(format!(
                "{}: activation-to-activation stages run in dense 8b x 8b, got {}",
                self.stage, self.mode
            ));
        }
        if self.stage.is_projection() && !self.mode.is_projection() && self.mode != PrecisionMode::Dense8x8
        {
            errors.push(format!("{}: invalid mode {}", self.stage, self.mode));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errors))
        }
    }
}

/// Ordered list of workloads plus operation-count bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkloadSet {
    pub specs: Vec<WorkloadSpec>,
    pub total_ops: u64,
    pub per_stage_ops: BTreeMap<Stage, u64>,
}

impl WorkloadSet {
    pub fn from_specs(specs: Vec<WorkloadSpec>) -> WorkloadSet {
        let mut per_stage_ops = BTreeMap::new();
        let mut total_ops = 0u64;
        for spec in &specs {
            let ops = spec.ops();
            total_ops += ops;
            *per_stage_ops.entry(spec.stage).or_insert(0) += ops;
        }
        WorkloadSet {
            specs,
            total_ops,
            per_stage_ops,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DeriveOptions {
    /// Emit Q/K/V as fused N = H x head_dim GEMMs instead of one per head.
    pub fused_proj: bool,
}

/// Derives the per-stage GEMM workloads of every attention layer.
///
/// Per layer: Q projection per head, K/V projections per KV head, attention
/// score and output per query head, and one output projection. Prefill-only:
/// M is the full sequence length.
pub fn derive_attention_workloads(model: &ModelConfig) -> Result<WorkloadSet> {
    derive_attention_workloads_with(model, DeriveOptions::default())
}

pub fn derive_attention_workloads_with(
    model: &ModelConfig,
    opts: DeriveOptions,
) -> Result<WorkloadSet> {
    let model = model.clone().validate()?;
    let proj_mode = PrecisionMode::for_weight_bits(model.weight_bits);
    let h = model.num_heads;
    let g = model.num_kv_heads;
    let heads_per_group = h / g;
    let mut specs = Vec::new();
    for layer in 0..model.layers as u32 {
        let mut push_proj = |stage: Stage, count: u64, n: u64, is_kv: bool| {
            if opts.fused_proj {
                specs.push(WorkloadSpec {
                    m: model.seq_len,
                    k: model.hidden_size,
                    n: n * count,
                    mode: proj_mode,
                    stage,
                    layer,
                    head_id: None,
                    kv_group_id: None,
                });
            } else {
                for head in 0..count as u32 {
                    specs.push(WorkloadSpec {
                        m: model.seq_len,
                        k: model.hidden_size,
                        n,
                        mode: proj_mode,
                        stage,
                        layer,
                        head_id: Some(head),
                        kv_group_id: Some(if is_kv {
                            head
                        } else {
                            head / heads_per_group as u32
                        }),
                    });
                }
            }
        };
        push_proj(Stage::QProj, h, model.head_dim, false);
        push_proj(Stage::KProj, g, model.head_dim, true);
        push_proj(Stage::VProj, g, model.head_dim, true);
        for head in 0..h as u32 {
            // scores = Q . K^T; the transpose layout is assumed free
            specs.push(WorkloadSpec {
                m: model.seq_len,
                k: model.head_dim,
                n: model.seq_len,
                mode: PrecisionMode::Dense8x8,
                stage: Stage::AttnScore,
                layer,
                head_id: Some(head),
                kv_group_id: Some(head / heads_per_group as u32),
            });
        }
        for head in 0..h as u32 {
            specs.push(WorkloadSpec {
                m: model.seq_len,
                k: model.seq_len,
                n: model.head_dim,
                mode: PrecisionMode::Dense8x8,
                stage: Stage::AttnOutput,
                layer,
                head_id: Some(head),
                kv_group_id: Some(head / heads_per_group as u32),
            });
        }
        specs.push(WorkloadSpec {
            m: model.seq_len,
            k: h * model.head_dim,
            n: model.hidden_size,
            mode: proj_mode,
            stage: Stage::OutProj,
            layer,
            head_id: None,
            kv_group_id: None,
        });
    }
    Ok(WorkloadSet::from_specs(specs))
}

/// Fraction of total operations per stage. Fractions sum to 1.
pub fn stage_distribution(set: &WorkloadSet) -> Result<BTreeMap<Stage, f64>> {
    if set.specs.is_empty() || set.total_ops == 0 {
        return Err(Error::EmptyWorkloadSet);
    }
    let total = set.total_ops as f64;
    Ok(set
        .per_stage_ops
        .iter()
        .map(|(stage, ops)| (*stage, *ops as f64 / total))
        .collect())
}
