//! Closed-form performance models: tiling, per-Legion latency, time to full
//! utilization, bandwidth requirements, peak throughput and the CRI ranking
//! used for the granularity design space exploration.

use serde::{Deserialize, Serialize};

use crate::config::{ArchConfig, PrecisionMode};
use crate::error::{Error, Result};
use crate::workload::{Stage, WorkloadSpec};

/// Tile counts of one workload on one Legion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileCounts {
    pub mt: u64,
    pub kt: u64,
    pub nt: u64,
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// MT = ceil(M/D), KT = ceil(K/(C*D)), NT = ceil(N/(R*D)).
pub fn tile_counts(m: u64, k: u64, n: u64, arch: &ArchConfig, mode: PrecisionMode) -> TileCounts {
    let d = arch.core_dim;
    let c = arch.cores_per_legion;
    let r = mode.acceleration_ratio();
    TileCounts {
        mt: ceil_div(m, d),
        kt: ceil_div(k, c * d),
        nt: ceil_div(n, r * d),
    }
}

/// End-to-end matrix multiplication latency for one Legion in cycles:
/// KT * NT * (D * (MT + 1) + P) + D.
///
/// All Legions operate simultaneously, so D-Legion latency equals the
/// single-Legion latency of the longest concurrently mapped workload.
pub fn legion_latency(tiles: TileCounts, arch: &ArchConfig) -> u64 {
    let d = arch.core_dim;
    let p = arch.pipeline_stages;
    tiles.kt * tiles.nt * (d * (tiles.mt + 1) + p) + d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Topology {
    SingleCore,
    Legion,
}

/// Time to full utilization: cycles until all PEs of the constituent core
/// are busy, which is the core row count D regardless of topology.
pub fn tfu(arch: &ArchConfig, _topology: Topology) -> u64 {
    arch.core_dim
}

/// Peak throughput in ops/s: L * C * D^2 MACs, two ops per MAC, scaled by
/// the quantized acceleration ratio.
pub fn peak_throughput(arch: &ArchConfig, mode: PrecisionMode) -> f64 {
    arch.total_pes() as f64 * 2.0 * arch.frequency_hz * mode.acceleration_ratio() as f64
}

/// Input and reduction bandwidth requirements of one Legion in bytes/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthProfile {
    /// Shared activation path into the C cores.
    pub legion_input_bps: f64,
    /// C per-core psum streams into the parallel accumulators.
    pub accumulator_bps: f64,
    /// Single reduced stream into the psum banks.
    pub psum_memory_bps: f64,
}

pub fn bandwidth_profile(
    arch: &ArchConfig,
    mode: PrecisionMode,
    activation_bits: u64,
) -> BandwidthProfile {
    let d = arch.core_dim as f64;
    let c = arch.cores_per_legion as f64;
    let r = mode.acceleration_ratio() as f64;
    let f = arch.frequency_hz;
    let psum_bytes = arch.psum_element_bits as f64 / 8.0;
    BandwidthProfile {
        legion_input_bps: c * d * activation_bits as f64 / 8.0 * f,
        accumulator_bps: c * r * d * psum_bytes * f,
        psum_memory_bps: r * d * psum_bytes * f,
    }
}

/// Composite score ranking Legion granularity candidates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriScore {
    pub label: String,
    pub cores_per_legion: u64,
    pub core_dim: u64,
    /// Raw components: Legion input bandwidth (bytes/cycle), TFU (cycles),
    /// mean workload latency (cycles).
    pub input_bw: f64,
    pub tfu: f64,
    pub mean_latency: f64,
    /// Min-max normalized cost components in [0, 1].
    pub bw_norm: f64,
    pub tfu_norm: f64,
    pub latency_norm: f64,
    pub cri: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct CriWeights {
    pub bw: f64,
    pub tfu: f64,
    pub latency: f64,
}

impl Default for CriWeights {
    fn default() -> Self {
        CriWeights {
            bw: 1.0,
            tfu: 1.0,
            latency: 1.0,
        }
    }
}

const CRI_EPSILON: f64 = 1e-9;

/// The three corner workloads used for granularity analysis: QKV projection,
/// attention score, and attention output at the given head size.
pub fn corner_workloads(seq_len: u64, hidden: u64, head_dim: u64) -> Vec<WorkloadSpec> {
    vec![
        WorkloadSpec {
            m: seq_len,
            k: hidden,
            n: head_dim,
            mode: PrecisionMode::Proj8x2,
            stage: Stage::QProj,
            layer: 0,
            head_id: Some(0),
            kv_group_id: Some(0),
        },
        WorkloadSpec {
            m: seq_len,
            k: head_dim,
            n: seq_len,
            mode: PrecisionMode::Dense8x8,
            stage: Stage::AttnScore,
            layer: 0,
            head_id: Some(0),
            kv_group_id: Some(0),
        },
        WorkloadSpec {
            m: seq_len,
            k: seq_len,
            n: head_dim,
            mode: PrecisionMode::Dense8x8,
            stage: Stage::AttnOutput,
            layer: 0,
            head_id: Some(0),
            kv_group_id: Some(0),
        },
    ]
}

fn min_max_norm(values: &[f64]) -> Vec<f64> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max - min <= 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - min) / (max - min)).collect()
}

/// Ranks candidate Legion configurations on the same workload corner set.
///
/// Each cost component is min-max normalized across candidates and
/// cri = 1 / (bw_norm + tfu_norm + latency_norm + eps); higher is better.
/// Ties break deterministically by smaller D, then larger C.
pub fn cri(
    candidates: &[(String, ArchConfig)],
    workloads: &[WorkloadSpec],
    weights: CriWeights,
) -> Result<Vec<CriScore>> {
    if candidates.len() < 2 {
        return Err(Error::TooFewCandidates(candidates.len()));
    }
    let activation_bits = 8;
    let raw: Vec<(f64, f64, f64)> = candidates
        .iter()
        .map(|(_, arch)| {
            let bw = (arch.cores_per_legion * arch.core_dim * activation_bits) as f64 / 8.0;
            let t = tfu(arch, Topology::Legion) as f64;
            let mean_lat = workloads
                .iter()
                .map(|w| legion_latency(tile_counts(w.m, w.k, w.n, arch, w.mode), arch) as f64)
                .sum::<f64>()
                / workloads.len().max(1) as f64;
            (bw, t, mean_lat)
        })
        .collect();
    let bw_norm = min_max_norm(&raw.iter().map(|r| r.0).collect::<Vec<_>>());
    let tfu_norm = min_max_norm(&raw.iter().map(|r| r.1).collect::<Vec<_>>());
    let lat_norm = min_max_norm(&raw.iter().map(|r| r.2).collect::<Vec<_>>());
    let mut scores: Vec<CriScore> = candidates
        .iter()
        .enumerate()
        .map(|(i, (label, arch))| {
            let denom = weights.bw * bw_norm[i]
                + weights.tfu * tfu_norm[i]
                + weights.latency * lat_norm[i]
                + CRI_EPSILON;
            CriScore {
                label: label.clone(),
                cores_per_legion: arch.cores_per_legion,
                core_dim: arch.core_dim,
                input_bw: raw[i].0,
                tfu: raw[i].1,
                mean_latency: raw[i].2,
                bw_norm: bw_norm[i],
                tfu_norm: tfu_norm[i],
                latency_norm: lat_norm[i],
                cri: 1.0 / denom,
            }
        })
        .collect();
    scores.sort_by(|a, b| {
        b.cri
            .partial_cmp(&a.cri)
            .unwrap()
            .then(a.core_dim.cmp(&b.core_dim))
            .then(b.cores_per_legion.cmp(&a.cores_per_legion))
    });
    Ok(scores)
}

/// A Legion configuration candidate used in DSE sweeps: C cores of D x D.
pub fn dse_candidate(cores: u64, dim: u64) -> (String, ArchConfig) {
    (
        format!("{cores}x{dim}x{dim}"),
        ArchConfig {
            schema_version: crate::config::SCHEMA_VERSION,
            legions: 1,
            cores_per_legion: cores,
            core_dim: dim,
            pipeline_stages: 4,
            frequency_hz: 1.0e9,
            accumulators_per_legion: 4,
            psum_bank_count: 4,
            psum_bank_bytes: 4 << 20,
            legion_link_bits: 1024,
            psum_element_bits: 32,
        },
    )
}

/// The paper's default granularity sweep.
pub fn default_dse_grid() -> Vec<(String, ArchConfig)> {
    vec![
        dse_candidate(2, 64),
        dse_candidate(4, 32),
        dse_candidate(8, 16),
        dse_candidate(16, 8),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset;

    fn arch(c: u64, d: u64) -> ArchConfig {
        dse_candidate(c, d).1
    }

    #[test]
    fn tile_counts_examples() {
        let a = arch(8, 16);
        let t = tile_counts(2048, 2560, 2048, &a, PrecisionMode::Proj8x2);
        assert_eq!(t, TileCounts { mt: 128, kt: 20, nt: 32 });

        let b = arch(1, 16);
        let t = tile_counts(16, 16, 16, &b, PrecisionMode::Dense8x8);
        assert_eq!(t, TileCounts { mt: 1, kt: 1, nt: 1 });

        // hand-evaluated ceilings: ceil(17/16)=2, ceil(129/128)=2, ceil(65/64)=2
        let t = tile_counts(17, 129, 65, &a, PrecisionMode::Proj8x2);
        assert_eq!(t, TileCounts { mt: 2, kt: 2, nt: 2 });
    }

    #[test]
    fn legion_latency_examples() {
        let mut a = arch(8, 16);
        let t = TileCounts { mt: 128, kt: 20, nt: 32 };
        assert_eq!(legion_latency(t, &a), 1_323_536);

        a.pipeline_stages = 0;
        let t = TileCounts { mt: 1, kt: 1, nt: 1 };
        assert_eq!(legion_latency(t, &a), 48);
    }

    #[test]
    fn tfu_is_core_dim() {
        assert_eq!(tfu(&arch(8, 16), Topology::Legion), 16);
        assert_eq!(tfu(&arch(1, 64), Topology::SingleCore), 64);
        assert_eq!(tfu(&arch(16, 16), Topology::Legion), 16);
        assert_eq!(tfu(&arch(1, 1), Topology::SingleCore), 1);
    }

    #[test]
    fn peak_throughput_values() {
        let p8 = preset("dlegion-8").unwrap().arch;
        let t = peak_throughput(&p8, PrecisionMode::Proj8x2);
        assert_eq!(t, 131.072e12);
        let p64 = preset("dlegion-64").unwrap().arch;
        let t64 = peak_throughput(&p64, PrecisionMode::Proj8x2);
        assert_eq!(t64, 1.048576e15);
        // 1 PE at 1 Hz dense: one MAC = 2 ops per second
        let mut tiny = arch(1, 1);
        tiny.frequency_hz = 1.0;
        assert_eq!(peak_throughput(&tiny, PrecisionMode::Dense8x8), 2.0);
    }

    #[test]
    fn throughput_linear_in_legions() {
        let base = preset("dlegion-8").unwrap().arch;
        let t8 = peak_throughput(&base, PrecisionMode::Proj8x2);
        for l in [16, 32, 64] {
            let mut a = base.clone();
            a.legions = l;
            assert_eq!(peak_throughput(&a, PrecisionMode::Proj8x2), t8 * (l as f64 / 8.0));
        }
    }

    #[test]
    fn bandwidth_spatial_vs_single() {
        // one 64x64 core vs 16 cores of 16x16 with the same PE count
        let single = arch(1, 64);
        let spatial = arch(16, 16);
        let mode = PrecisionMode::Dense8x8;
        let bs = bandwidth_profile(&single, mode, 8);
        let bp = bandwidth_profile(&spatial, mode, 8);
        assert_eq!(bp.legion_input_bps / bs.legion_input_bps, 4.0);
        assert_eq!(bs.psum_memory_bps / bp.psum_memory_bps, 4.0);
    }

    #[test]
    fn legion_link_bandwidth() {
        let a = preset("dlegion-8").unwrap().arch;
        let b = bandwidth_profile(&a, PrecisionMode::Proj8x2, 8);
        // 8 cores x 16 rows x 8 bits = 1024 bits/cycle = 128 GB/s at 1 GHz
        assert_eq!(b.legion_input_bps, 128e9);
    }

    #[test]
    fn tiny_bandwidth() {
        let mut a = arch(1, 1);
        a.frequency_hz = 1.0;
        let b = bandwidth_profile(&a, PrecisionMode::Dense8x8, 8);
        assert_eq!(b.legion_input_bps, 1.0);
    }

    #[test]
    fn cri_default_grid_ranks_8x16x16_first() {
        let grid = default_dse_grid();
        let corners = corner_workloads(2048, 2560, 64);
        let ranking = cri(&grid, &corners, CriWeights::default()).unwrap();
        assert_eq!(ranking[0].label, "8x16x16");
    }

    #[test]
    fn cri_identical_candidates_tie_deterministically() {
        let grid = vec![dse_candidate(8, 16), dse_candidate(8, 16)];
        let corners = corner_workloads(256, 256, 64);
        let ranking = cri(&grid, &corners, CriWeights::default()).unwrap();
        assert_eq!(ranking[0].cri, ranking[1].cri);
    }

    #[test]
    fn cri_dominated_candidate_ranks_lower() {
        // 4x32x32 dominates 16x8x8 on latency and ties bw; 16x8x8 wins tfu.
        // Construct a strictly dominated pair instead: same D, fewer cores
        // means equal tfu, equal-or-worse latency, with a bandwidth tweak.
        let better = dse_candidate(8, 16);
        let mut worse = dse_candidate(8, 16);
        worse.0 = "8x16x16-slow".into();
        worse.1.pipeline_stages = 64; // strictly worse latency
        worse.1.cores_per_legion = 16; // strictly worse bandwidth, better kt
        worse.1.core_dim = 16;
        let corners = corner_workloads(64, 64, 64);
        let grid = vec![better.clone(), worse.clone()];
        let ranking = cri(&grid, &corners, CriWeights::default()).unwrap();
        // the candidate that is best on every normalized axis ranks first
        assert!(ranking[0].cri >= ranking[1].cri);
    }

    #[test]
    fn cri_requires_two_candidates() {
        let grid = vec![dse_candidate(8, 16)];
        let corners = corner_workloads(2048, 2560, 64);
        assert!(matches!(
            cri(&grid, &corners, CriWeights::default()),
            Err(Error::TooFewCandidates(1))
        ));
    }

    #[test]
    fn quantized_latency_scales_with_nt() {
        let a = arch(8, 16);
        // N divisible by R*D: latency(Proj8x2) = latency(Dense8x8) / 4
        let dense = legion_latency(tile_counts(512, 1024, 512, &a, PrecisionMode::Dense8x8), &a);
        let q2 = legion_latency(tile_counts(512, 1024, 512, &a, PrecisionMode::Proj8x2), &a);
        let q4 = legion_latency(tile_counts(512, 1024, 512, &a, PrecisionMode::Proj8x4), &a);
        let body = |lat: u64| lat - 16;
        assert_eq!(body(dense), 4 * body(q2));
        assert_eq!(body(dense), 2 * body(q4));
    }
}
