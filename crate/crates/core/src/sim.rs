//! Cycle-level machine model: workload-to-Legion mapping, window-granular
//! timing, off-chip traffic with multicast deduplication, psum bank
//! accounting, sparse-window skipping and the bit-accurate functional path.
//!
//! Timing is window-exact rather than event-driven: the systolic pipeline
//! is deterministic within one (k chunk, n tile) window, so per-window
//! closed forms reproduce the cycle count a PE-level event simulation would
//! produce, and the dense case collapses to the analytic latency formula.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::{ArchConfig, ArchKind, PrecisionMode};
use crate::error::{Error, Result};
use crate::functional::{core_matmul, naive_matmul, IntMatrix};
use crate::report::{FunctionalSummary, NocTotals, SimReport, StageMetrics};
use crate::workload::{Stage, WorkloadSet, WorkloadSpec};
use crate::ztb::ZeroTileBook;

/// A machine is an architecture plus the timing/traffic model family it
/// belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    pub kind: ArchKind,
    pub arch: ArchConfig,
}

impl Machine {
    pub fn from_preset(name: &str) -> Result<Machine> {
        let p = crate::config::preset(name)?;
        Ok(Machine {
            kind: p.kind,
            arch: p.arch,
        })
    }

    /// Precision the PEs actually run a workload in. Machines without
    /// reconfigurable PEs execute everything as dense 8b x 8b.
    pub fn exec_mode(&self, spec_mode: PrecisionMode) -> PrecisionMode {
        if self.kind.supports_quantized_accel() {
            spec_mode
        } else {
            PrecisionMode::Dense8x8
        }
    }
}

/// NoC destination: 6-bit Legion id, 3-bit core id, 2-bit link id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NocAddress {
    pub legion: u8,
    pub core: u8,
    pub link: u8,
}

/// Link ids on the per-Legion crossbar port.
pub const LINK_ACTIVATION: u8 = 0;
pub const LINK_WEIGHT: u8 = 1;
pub const LINK_PSUM: u8 = 2;

impl NocAddress {
    pub fn new(legion: u8, core: u8, link: u8) -> Result<NocAddress> {
        if legion >= 64 || core >= 8 || link >= 4 {
            return Err(Error::InvalidConfig(vec![format!(
                "NoC address out of range: legion {legion} (max 63), core {core} (max 7), link {link} (max 3)"
            )]));
        }
        Ok(NocAddress { legion, core, link })
    }

    pub fn pack(self) -> u16 {
        (self.legion as u16) << 5 | (self.core as u16) << 2 | self.link as u16
    }

    pub fn unpack(word: u16) -> NocAddress {
        NocAddress {
            legion: (word >> 5 & 0x3f) as u8,
            core: (word >> 2 & 0x7) as u8,
            link: (word & 0x3) as u8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    /// Largest number of Legions one activation-to-activation GEMM is
    /// partitioned across. Wider groups trade multicast efficiency for
    /// shorter heads-in-flight queues.
    pub a2a_group_cap: u64,
    /// Inflate window cycles when the activation stream exceeds the Legion
    /// link width.
    pub bw_stall: bool,
    /// Run the bit-accurate dataflow on every workload and self-check
    /// against a naive reference.
    pub functional: bool,
    pub seed: u64,
    /// Zero-tile book, applied to every workload whose tile grid matches
    /// its shape.
    pub ztb: Option<ZeroTileBook>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            a2a_group_cap: 8,
            bw_stall: false,
            functional: false,
            seed: 0,
            ztb: None,
        }
    }
}

/// One workload slice mapped onto one Legion.
#[derive(Debug, Clone)]
pub struct PlanItem {
    pub spec: WorkloadSpec,
    pub legion: u64,
    /// First owned n tile, in exec-mode tile units of the full GEMM.
    pub n_tile_offset: u64,
    pub nt_slice: u64,
    /// Items in one round sharing this id stream the same activations.
    pub stream_id: String,
    /// Items in one stage group sharing this id load the same stationary
    /// operand slice.
    pub stationary_id: String,
}

/// Items that run concurrently; the round takes as long as its slowest
/// item.
#[derive(Debug, Clone)]
pub struct Round {
    pub items: Vec<PlanItem>,
}

/// All rounds of one pipeline stage of one layer. Stage groups execute
/// back to back (a barrier separates them).
#[derive(Debug, Clone)]
pub struct StageGroup {
    pub layer: u32,
    pub label: &'static str,
    pub rounds: Vec<Round>,
}

#[derive(Debug, Clone)]
pub struct Plan {
    pub groups: Vec<StageGroup>,
}

fn a2a_stationary_id(spec: &WorkloadSpec, off: u64, len: u64) -> String {
    format!(
        "l{}/{}/kv{}/t{off}+{len}",
        spec.layer,
        spec.stage,
        spec.kv_group_id.unwrap_or(u32::MAX)
    )
}

fn proj_stationary_id(spec: &WorkloadSpec, off: u64, len: u64) -> String {
    format!(
        "l{}/{}/h{}/t{off}+{len}",
        spec.layer,
        spec.stage,
        spec.head_id.map(|h| h as i64).unwrap_or(-1)
    )
}

/// Splits `total` tiles into `parts` contiguous runs, front-loaded.
fn partition_tiles(total: u64, parts: u64) -> Vec<(u64, u64)> {
    let base = total / parts;
    let extra = total % parts;
    let mut out = Vec::with_capacity(parts as usize);
    let mut off = 0;
    for p in 0..parts {
        let len = base + u64::from(p < extra);
        out.push((off, len));
        off += len;
    }
    out
}

fn full_nt(machine: &Machine, spec: &WorkloadSpec) -> u64 {
    let mode = machine.exec_mode(spec.mode);
    crate::analytic::tile_counts(spec.m, spec.k, spec.n, &machine.arch, mode).nt
}

/// Maps a workload set onto the machine.
///
/// Per layer, four stage groups run back to back:
/// - Q/K/V projections: one whole GEMM per Legion, taken round-robin from
///   the combined queue; all Legions of a round share the layer input X.
/// - attention score and attention output: each head is partitioned across
///   a group of Legions by n tiles (multicast machines only; others run
///   whole heads per unit), with as many heads in flight as groups fit.
/// - output projection: a single GEMM partitioned across all Legions.
pub fn orchestrate(machine: &Machine, set: &WorkloadSet, opts: &SimOptions) -> Result<Plan> {
    if set.specs.is_empty() {
        return Err(Error::EmptyWorkloadSet);
    }
    for spec in &set.specs {
        spec.validate()?;
    }
    let l = machine.arch.legions;
    let mut by_layer: BTreeMap<u32, Vec<&WorkloadSpec>> = BTreeMap::new();
    for spec in &set.specs {
        by_layer.entry(spec.layer).or_default().push(spec);
    }
    let mut groups = Vec::new();
    for (&layer, specs) in &by_layer {
        let qkv: Vec<&&WorkloadSpec> = specs
            .iter()
            .filter(|s| matches!(s.stage, Stage::QProj | Stage::KProj | Stage::VProj))
            .collect();
        if !qkv.is_empty() {
            let mut rounds = Vec::new();
            for (r, chunk) in qkv.chunks(l as usize).enumerate() {
                let items = chunk
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        let nt = full_nt(machine, s);
                        PlanItem {
                            spec: (**s).clone(),
                            legion: i as u64,
                            n_tile_offset: 0,
                            nt_slice: nt,
                            stream_id: format!("l{layer}/x/r{r}"),
                            stationary_id: proj_stationary_id(s, 0, nt),
                        }
                    })
                    .collect();
                rounds.push(Round { items });
            }
            groups.push(StageGroup {
                layer,
                label: "qkv_proj",
                rounds,
            });
        }
        for (stage, label) in [
            (Stage::AttnScore, "attn_score"),
            (Stage::AttnOutput, "attn_output"),
        ] {
            let heads: Vec<&&WorkloadSpec> = specs.iter().filter(|s| s.stage == stage).collect();
            if heads.is_empty() {
                continue;
            }
            let nt_total = full_nt(machine, heads[0]);
            let g = if machine.kind.supports_multicast() {
                l.min(opts.a2a_group_cap).min(nt_total).max(1)
            } else {
                1
            };
            let in_flight = (l / g).max(1);
            let mut rounds = Vec::new();
            for chunk in heads.chunks(in_flight as usize) {
                let mut items = Vec::new();
                for (slot, s) in chunk.iter().enumerate() {
                    let nt_total = full_nt(machine, s);
                    for (j, (off, len)) in partition_tiles(nt_total, g).into_iter().enumerate() {
                        if len == 0 {
                            continue;
                        }
                        items.push(PlanItem {
                            spec: (**s).clone(),
                            legion: slot as u64 * g + j as u64,
                            n_tile_offset: off,
                            nt_slice: len,
                            stream_id: format!(
                                "l{layer}/{stage}/h{}",
                                s.head_id.map(|h| h as i64).unwrap_or(-1)
                            ),
                            stationary_id: a2a_stationary_id(s, off, len),
                        });
                    }
                }
                rounds.push(Round { items });
            }
            groups.push(StageGroup {
                layer,
                label,
                rounds,
            });
        }
        let outs: Vec<&&WorkloadSpec> = specs
            .iter()
            .filter(|s| s.stage == Stage::OutProj)
            .collect();
        for s in outs {
            let nt_total = full_nt(machine, s);
            let parts = l.min(nt_total);
            let items = partition_tiles(nt_total, parts)
                .into_iter()
                .enumerate()
                .filter(|(_, (_, len))| *len > 0)
                .map(|(j, (off, len))| PlanItem {
                    spec: (*s).clone(),
                    legion: j as u64,
                    n_tile_offset: off,
                    nt_slice: len,
                    stream_id: format!("l{layer}/outproj"),
                    stationary_id: proj_stationary_id(s, off, len),
                })
                .collect();
            groups.push(StageGroup {
                layer,
                label: "out_proj",
                rounds: vec![Round { items }],
            });
        }
    }
    Ok(Plan { groups })
}

/// Window-level cost and traffic of one plan item.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ItemMetrics {
    pub cycles: u64,
    pub dense_windows: u64,
    pub skipped_windows: u64,
    /// Stationary operand bytes read from off-chip memory.
    pub weight_bytes: u64,
    /// Activation bytes streamed into the Legion.
    pub act_bytes: u64,
    /// Psum bank read + write traffic.
    pub psum_bytes: u64,
    pub deactivated_core_cycles: u64,
    /// Peak bytes needed in one psum bank while this item runs.
    pub psum_bank_need: u64,
    pub ops: u64,
}

/// Width of one exec-mode tile in output columns, clipped to the matrix.
fn tile_r_eff(n: u64, tile: u64, r: u64, d: u64) -> u64 {
    let start = tile * r * d;
    let end = n.min(start + r * d);
    debug_assert!(end > start);
    (end - start).div_ceil(d)
}

/// Evaluates one item against the machine's timing and traffic model.
///
/// Dense windows cost D*(MT+1)+P cycles (plus 2*(D-1) fill/drain on
/// weight-stationary machines); fully sparse windows are skipped in one
/// cycle; partially sparse windows run at full latency with the idle cores
/// counted. Stationary bytes use the storage width of the workload's
/// precision, activations are 8-bit, psums accumulator-width.
pub fn item_metrics(machine: &Machine, item: &PlanItem, opts: &SimOptions) -> Result<ItemMetrics> {
    let arch = &machine.arch;
    let (c, d, p) = (arch.cores_per_legion, arch.core_dim, arch.pipeline_stages);
    let spec = &item.spec;
    let mode = machine.exec_mode(spec.mode);
    let r = mode.acceleration_ratio();
    let mt = spec.m.div_ceil(d);
    let kt = spec.k.div_ceil(c * d);
    let storage_bits = spec.mode.weight_bits() as u64;
    let psum_elem = arch.psum_element_bits / 8;

    let ztb = match &opts.ztb {
        Some(book) => {
            let nt_full = spec.n.div_ceil(r * d);
            if book.check_shape(kt, nt_full, c).is_ok() {
                Some(book)
            } else {
                None
            }
        }
        None => None,
    };

    let ws = machine.kind.is_weight_stationary();
    let mut window = d * (mt + 1) + p;
    let tail = if ws { d + (d - 1) } else { d };
    if ws {
        window += 2 * (d - 1);
    }
    if opts.bw_stall {
        let need_bits = c * d * 8;
        if need_bits > arch.legion_link_bits {
            window = (window * need_bits).div_ceil(arch.legion_link_bits);
        }
    }

    let mut m = ItemMetrics::default();
    let mut max_r_eff = 1;
    for t in item.n_tile_offset..item.n_tile_offset + item.nt_slice {
        let r_eff = tile_r_eff(spec.n, t, r, d);
        max_r_eff = max_r_eff.max(r_eff);
        let mut dense_in_col = 0u64;
        for kc in 0..kt {
            if let Some(book) = ztb {
                if book.window_fully_sparse(kc, t) {
                    m.skipped_windows += 1;
                    continue;
                }
                let zeros = book.window_zero_count(kc, t);
                m.deactivated_core_cycles += zeros * window;
                m.weight_bytes += (c - zeros) * r_eff * d * d * storage_bits / 8;
            } else {
                m.weight_bytes += c * r_eff * d * d * storage_bits / 8;
            }
            dense_in_col += 1;
            m.dense_windows += 1;
            m.act_bytes += mt * c * d * d; // 8-bit activations
        }
        if dense_in_col > 0 {
            // first pass writes the strip, later passes read-modify-write
            m.psum_bytes += mt * d * r_eff * d * psum_elem * (1 + 2 * (dense_in_col - 1));
        }
    }
    m.cycles = m.dense_windows * window + m.skipped_windows;
    if m.dense_windows > 0 {
        m.cycles += tail;
    }
    // one output strip of M x (R_eff * D) accumulator words, striped over
    // min(R_eff, banks) psum banks
    m.psum_bank_need =
        mt * d * max_r_eff * d * psum_elem / max_r_eff.min(arch.psum_bank_count).max(1);
    if m.psum_bank_need > arch.psum_bank_bytes {
        return Err(Error::PsumBankOverflow {
            legion: item.legion as usize,
            needed: m.psum_bank_need,
            bank_bytes: arch.psum_bank_bytes,
        });
    }
    let col_start = item.n_tile_offset * r * d;
    let col_end = spec.n.min((item.n_tile_offset + item.nt_slice) * r * d);
    m.ops = 2 * spec.m * spec.k * (col_end - col_start);
    Ok(m)
}

/// Tile-load event stream for one item: which window lands on which NoC
/// destination, with its start cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowEvent {
    pub start_cycle: u64,
    pub k_chunk: u64,
    pub n_tile: u64,
    pub skipped: bool,
    pub dest: NocAddress,
}

pub fn window_schedule(
    machine: &Machine,
    item: &PlanItem,
    opts: &SimOptions,
) -> Result<Vec<WindowEvent>> {
    let arch = &machine.arch;
    let (c, d, p) = (arch.cores_per_legion, arch.core_dim, arch.pipeline_stages);
    let spec = &item.spec;
    let mode = machine.exec_mode(spec.mode);
    let kt = spec.k.div_ceil(c * d);
    let mt = spec.m.div_ceil(d);
    let mut window = d * (mt + 1) + p;
    if machine.kind.is_weight_stationary() {
        window += 2 * (d - 1);
    }
    let mut events = Vec::new();
    let mut cycle = 0;
    for t in item.n_tile_offset..item.n_tile_offset + item.nt_slice {
        for kc in 0..kt {
            let skipped = opts
                .ztb
                .as_ref()
                .filter(|b| b.check_shape(kt, spec.n.div_ceil(mode.acceleration_ratio() * d), c).is_ok())
                .map(|b| b.window_fully_sparse(kc, t))
                .unwrap_or(false);
            events.push(WindowEvent {
                start_cycle: cycle,
                k_chunk: kc,
                n_tile: t,
                skipped,
                dest: NocAddress::new(
                    (item.legion % 64) as u8,
                    (kc % c.max(1)).min(7) as u8,
                    LINK_WEIGHT,
                )?,
            });
            cycle += if skipped { 1 } else { window };
        }
    }
    Ok(events)
}

#[derive(Default)]
struct StageAcc {
    cycles: f64,
    ops: u64,
    weight_off: f64,
    weight_del: u64,
    act_off: f64,
    act_del: u64,
    psum: u64,
    skipped: u64,
    deact: u64,
    r_exec: u64,
}

/// Runs the full model: orchestrate, evaluate every item, apply multicast
/// deduplication and compose latency with round and stage barriers.
pub fn simulate(machine: &Machine, set: &WorkloadSet, opts: &SimOptions) -> Result<SimReport> {
    let arch = machine.arch.clone().validate()?;
    let machine = Machine {
        kind: machine.kind,
        arch,
    };
    let plan = orchestrate(&machine, set, opts)?;
    let multicast = machine.kind.supports_multicast();

    let mut total_cycles = 0u64;
    let mut off_chip = 0u64;
    let mut delivered = 0u64;
    let mut psum_total = 0u64;
    let mut psum_peak = 0u64;
    let mut skipped = 0u64;
    let mut deact = 0u64;
    let mut per_stage: BTreeMap<Stage, StageAcc> = BTreeMap::new();

    for group in &plan.groups {
        // metrics first; dedup bookkeeping needs the whole group
        let mut metrics: Vec<Vec<ItemMetrics>> = Vec::with_capacity(group.rounds.len());
        for round in &group.rounds {
            let ms = round
                .items
                .iter()
                .map(|it| item_metrics(&machine, it, opts))
                .collect::<Result<Vec<_>>>()?;
            metrics.push(ms);
        }

        // latency: rounds run back to back, each as long as its slowest
        // item, attributed to stages proportionally to item cycles
        for (round, ms) in group.rounds.iter().zip(&metrics) {
            let round_cycles = ms.iter().map(|m| m.cycles).max().unwrap_or(0);
            total_cycles += round_cycles;
            let item_sum: u64 = ms.iter().map(|m| m.cycles).sum();
            for (it, m) in round.items.iter().zip(ms) {
                let acc = per_stage.entry(it.spec.stage).or_default();
                if item_sum > 0 {
                    acc.cycles += round_cycles as f64 * m.cycles as f64 / item_sum as f64;
                }
                acc.ops += m.ops;
                acc.psum += m.psum_bytes;
                acc.skipped += m.skipped_windows;
                acc.deact += m.deactivated_core_cycles;
                acc.r_exec = acc
                    .r_exec
                    .max(machine.exec_mode(it.spec.mode).acceleration_ratio());
                psum_total += m.psum_bytes;
                psum_peak = psum_peak.max(m.psum_bank_need);
                skipped += m.skipped_windows;
                deact += m.deactivated_core_cycles;
                delivered += m.weight_bytes + m.act_bytes;
                acc.weight_del += m.weight_bytes;
                acc.act_del += m.act_bytes;
            }
        }

        // activation streams: items of one round sharing a stream id read
        // the same data, which multicast fetches once per pass
        for (round, ms) in group.rounds.iter().zip(&metrics) {
            let mut streams: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, it) in round.items.iter().enumerate() {
                streams.entry(&it.stream_id).or_default().push(i);
            }
            for idxs in streams.values() {
                let fetched = if multicast {
                    idxs.iter().map(|&i| ms[i].act_bytes).max().unwrap_or(0)
                } else {
                    idxs.iter().map(|&i| ms[i].act_bytes).sum()
                };
                off_chip += fetched;
                let share = fetched as f64 / idxs.len() as f64;
                for &i in idxs {
                    per_stage
                        .entry(round.items[i].spec.stage)
                        .or_default()
                        .act_off += share;
                }
            }
        }

        // stationary operands: identical slices (same id) anywhere in the
        // stage group are fetched once and kept resident
        let mut stationary: BTreeMap<&str, Vec<(usize, usize)>> = BTreeMap::new();
        for (ri, round) in group.rounds.iter().enumerate() {
            for (ii, it) in round.items.iter().enumerate() {
                stationary
                    .entry(&it.stationary_id)
                    .or_default()
                    .push((ri, ii));
            }
        }
        for idxs in stationary.values() {
            let fetched = if multicast {
                idxs.iter()
                    .map(|&(r, i)| metrics[r][i].weight_bytes)
                    .max()
                    .unwrap_or(0)
            } else {
                idxs.iter().map(|&(r, i)| metrics[r][i].weight_bytes).sum()
            };
            off_chip += fetched;
            let share = fetched as f64 / idxs.len() as f64;
            for &(r, i) in idxs {
                per_stage
                    .entry(group.rounds[r].items[i].spec.stage)
                    .or_default()
                    .weight_off += share;
            }
        }
    }

    let freq = machine.arch.frequency_hz;
    let time_s = total_cycles as f64 / freq;
    let total_ops: u64 = per_stage.values().map(|a| a.ops).sum();
    let dense_peak = machine.arch.total_pes() as f64 * 2.0 * freq;
    let stage_report: BTreeMap<String, StageMetrics> = per_stage
        .iter()
        .map(|(stage, a)| {
            let t = a.cycles / freq;
            (
                stage.label().to_string(),
                StageMetrics {
                    cycles: a.cycles,
                    ops: a.ops,
                    time_s: t,
                    throughput_ops: if t > 0.0 { a.ops as f64 / t } else { 0.0 },
                    utilization: if t > 0.0 {
                        a.ops as f64 / (t * dense_peak * a.r_exec.max(1) as f64)
                    } else {
                        0.0
                    },
                    weight_off_chip_bytes: a.weight_off,
                    weight_delivered_bytes: a.weight_del as f64,
                    activation_off_chip_bytes: a.act_off,
                    activation_delivered_bytes: a.act_del as f64,
                    psum_bytes: a.psum,
                    skipped_windows: a.skipped,
                    deactivated_core_cycles: a.deact,
                },
            )
        })
        .collect();

    let functional = if opts.functional {
        let mut summary = FunctionalSummary::default();
        for spec in &set.specs {
            let run = functional_gemm(&machine, spec, opts.ztb.as_ref(), opts.seed)?;
            let expect = naive_matmul(&run.a, &run.w_masked)?;
            summary.workloads_checked += 1;
            summary.elements_checked += (spec.m * spec.n) as u64;
            for i in 0..run.output.rows {
                for j in 0..run.output.cols {
                    if run.output.get(i, j) != expect.get(i, j) {
                        summary.mismatches += 1;
                    }
                }
            }
        }
        Some(summary)
    } else {
        None
    };

    Ok(SimReport {
        schema_version: crate::config::SCHEMA_VERSION,
        kind: machine.kind,
        arch: machine.arch.clone(),
        total_cycles,
        time_s,
        total_ops,
        throughput_ops: if time_s > 0.0 {
            total_ops as f64 / time_s
        } else {
            0.0
        },
        off_chip_bytes: off_chip,
        delivered_bytes: delivered,
        psum_bytes: psum_total,
        psum_peak_bank_bytes: psum_peak,
        noc: NocTotals {
            off_chip_bytes: off_chip,
            delivered_bytes: delivered,
            multicast_saved_bytes: delivered - off_chip,
        },
        skipped_windows: skipped,
        deactivated_core_cycles: deact,
        per_stage: stage_report,
        functional,
    })
}

/// Inputs and result of the bit-accurate path for one workload.
#[derive(Debug, Clone)]
pub struct FunctionalRun {
    pub a: IntMatrix,
    /// Weight operand with zero-book tiles cleared; padding regions of the
    /// tile grid are implicitly zero.
    pub w_masked: IntMatrix,
    pub output: IntMatrix,
}

/// Runs one GEMM through the dataflow exactly as the cores would compute
/// it: per window, each core multiplies its D-column activation slice with
/// its R permuted weight tiles and the accumulators sum across cores.
///
/// Operands are generated deterministically from `seed` at the workload's
/// activation/weight widths. The mapping across Legions does not change
/// the arithmetic, so the computation iterates the full tile grid.
pub fn functional_gemm(
    machine: &Machine,
    spec: &WorkloadSpec,
    ztb: Option<&ZeroTileBook>,
    seed: u64,
) -> Result<FunctionalRun> {
    use rand::SeedableRng;
    let arch = &machine.arch;
    let (c, d) = (arch.cores_per_legion as usize, arch.core_dim as usize);
    let mode = machine.exec_mode(spec.mode);
    let r = mode.acceleration_ratio() as usize;
    let (m, k, n) = (spec.m as usize, spec.k as usize, spec.n as usize);
    let kt = k.div_ceil(c * d);
    let nt = n.div_ceil(r * d);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let a = IntMatrix::random(m, k, 8, &mut rng);
    let mut w = IntMatrix::random(k, n, spec.mode.weight_bits(), &mut rng);

    let book = match ztb {
        Some(b) => {
            b.check_shape(kt as u64, nt as u64, c as u64)?;
            Some(b)
        }
        None => None,
    };
    if let Some(b) = book {
        for t in 0..nt {
            for kc in 0..kt {
                for core in 0..c {
                    if b.is_zero(kc as u64, t as u64, core as u64) {
                        let r0 = (kc * c + core) * d;
                        for row in r0..(r0 + d).min(k) {
                            for col in t * r * d..(t * r * d + r * d).min(n) {
                                w.set(row, col, 0);
                            }
                        }
                    }
                }
            }
        }
    }

    let mut out = IntMatrix::zeros(m, n, 32);
    for t in 0..nt {
        for kc in 0..kt {
            if book.map(|b| b.window_fully_sparse(kc as u64, t as u64)) == Some(true) {
                continue;
            }
            for core in 0..c {
                if book.map(|b| b.is_zero(kc as u64, t as u64, core as u64)) == Some(true) {
                    continue;
                }
                let row0 = (kc * c + core) * d;
                if row0 >= k {
                    continue; // padding rows of the last k chunk
                }
                let a_slice = a.slice_padded(0, m, row0, d, 8);
                let tiles: Vec<IntMatrix> = (0..r)
                    .map(|sub| {
                        w.slice_padded(row0, d, (t * r + sub) * d, d, spec.mode.weight_bits())
                    })
                    .collect();
                let results = core_matmul(&a_slice, &tiles, mode)?;
                for (sub, res) in results.iter().enumerate() {
                    let col0 = (t * r + sub) * d;
                    for row in 0..m {
                        for j in 0..d {
                            if col0 + j < n {
                                out.set(row, col0 + j, out.get(row, col0 + j) + res.get(row, j));
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(FunctionalRun {
        a,
        w_masked: w,
        output: out,
    })
}
