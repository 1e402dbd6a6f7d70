//! Simulation report types and emitters (JSON and CSV), plus ratio tables
//! for architecture comparisons.
//!
//! Floats are serialized with shortest round-trip formatting so a report
//! read back from disk is bit-identical.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::{ArchConfig, ArchKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    /// Fractional because concurrent rounds attribute their critical path
    /// across the stages running in them.
    pub cycles: f64,
    pub ops: u64,
    pub time_s: f64,
    pub throughput_ops: f64,
    /// Achieved fraction of the stage's mode-scaled peak.
    pub utilization: f64,
    pub weight_off_chip_bytes: f64,
    pub weight_delivered_bytes: f64,
    pub activation_off_chip_bytes: f64,
    pub activation_delivered_bytes: f64,
    pub psum_bytes: u64,
    pub skipped_windows: u64,
    pub deactivated_core_cycles: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NocTotals {
    /// Unique bytes fetched from off-chip memory.
    pub off_chip_bytes: u64,
    /// Bytes arriving at consuming Legions (multicast copies included).
    pub delivered_bytes: u64,
    /// delivered - off_chip; zero without multicast.
    pub multicast_saved_bytes: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionalSummary {
    pub workloads_checked: u64,
    pub elements_checked: u64,
    pub mismatches: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub schema_version: u32,
    pub kind: ArchKind,
    pub arch: ArchConfig,
    pub total_cycles: u64,
    pub time_s: f64,
    pub total_ops: u64,
    pub throughput_ops: f64,
    pub off_chip_bytes: u64,
    pub delivered_bytes: u64,
    pub psum_bytes: u64,
    pub psum_peak_bank_bytes: u64,
    pub noc: NocTotals,
    pub skipped_windows: u64,
    pub deactivated_core_cycles: u64,
    pub per_stage: BTreeMap<String, StageMetrics>,
    pub functional: Option<FunctionalSummary>,
}

/// Provenance block attached to every CLI artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub version: String,
    pub config_hash: String,
}

/// Report plus manifest as written by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBundle {
    pub manifest: RunManifest,
    pub report: SimReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<ReportFormat> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }
}

pub fn to_json(report: &SimReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

pub fn from_json(text: &str) -> Result<SimReport> {
    Ok(serde_json::from_str(text)?)
}

fn fmt_f64(v: f64) -> String {
    // {:?} is the shortest representation that parses back exactly
    format!("{v:?}")
}

const CSV_HEADER: &str = "stage,cycles,ops,time_s,throughput_ops,utilization,\
weight_off_chip_bytes,weight_delivered_bytes,activation_off_chip_bytes,\
activation_delivered_bytes,psum_bytes,skipped_windows,deactivated_core_cycles";

/// One row per stage plus a `total` row.
pub fn to_csv(report: &SimReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let row = |name: &str, m: &StageMetrics| {
        format!(
            "{name},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            fmt_f64(m.cycles),
            m.ops,
            fmt_f64(m.time_s),
            fmt_f64(m.throughput_ops),
            fmt_f64(m.utilization),
            fmt_f64(m.weight_off_chip_bytes),
            fmt_f64(m.weight_delivered_bytes),
            fmt_f64(m.activation_off_chip_bytes),
            fmt_f64(m.activation_delivered_bytes),
            m.psum_bytes,
            m.skipped_windows,
            m.deactivated_core_cycles,
        )
    };
    for (stage, m) in &report.per_stage {
        out.push_str(&row(stage, m));
    }
    let mut total = StageMetrics {
        cycles: report.total_cycles as f64,
        ops: report.total_ops,
        time_s: report.time_s,
        throughput_ops: report.throughput_ops,
        utilization: 0.0,
        psum_bytes: report.psum_bytes,
        skipped_windows: report.skipped_windows,
        deactivated_core_cycles: report.deactivated_core_cycles,
        ..StageMetrics::default()
    };
    for m in report.per_stage.values() {
        total.weight_off_chip_bytes += m.weight_off_chip_bytes;
        total.weight_delivered_bytes += m.weight_delivered_bytes;
        total.activation_off_chip_bytes += m.activation_off_chip_bytes;
        total.activation_delivered_bytes += m.activation_delivered_bytes;
    }
    out.push_str(&row("total", &total));
    out
}

/// Parses a CSV produced by [`to_csv`] back into per-stage metrics.
pub fn stage_metrics_from_csv(text: &str) -> Result<BTreeMap<String, StageMetrics>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::UnsupportedFormat("empty csv".into()))?;
    if header != CSV_HEADER {
        return Err(Error::UnsupportedFormat("unexpected csv header".into()));
    }
    let mut out = BTreeMap::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 13 {
            return Err(Error::UnsupportedFormat(format!(
                "csv row has {} fields, expected 13",
                fields.len()
            )));
        }
        let f = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|_| Error::UnsupportedFormat(format!("bad float `{}`", fields[i])))
        };
        let u = |i: usize| -> Result<u64> {
            fields[i]
                .parse()
                .map_err(|_| Error::UnsupportedFormat(format!("bad integer `{}`", fields[i])))
        };
        out.insert(
            fields[0].to_string(),
            StageMetrics {
                cycles: f(1)?,
                ops: u(2)?,
                time_s: f(3)?,
                throughput_ops: f(4)?,
                utilization: f(5)?,
                weight_off_chip_bytes: f(6)?,
                weight_delivered_bytes: f(7)?,
                activation_off_chip_bytes: f(8)?,
                activation_delivered_bytes: f(9)?,
                psum_bytes: u(10)?,
                skipped_windows: u(11)?,
                deactivated_core_cycles: u(12)?,
            },
        );
    }
    Ok(out)
}

/// Side-by-side comparison with ratios relative to the first entry.
pub fn comparison_table(reports: &[(String, SimReport)]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::EmptyWorkloadSet);
    }
    let base = &reports[0].1;
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14} {:>14} {:>12} {:>16} {:>16} {:>10} {:>10}\n",
        "name", "cycles", "time_ms", "off_chip_MB", "psum_MB", "lat_ratio", "mem_ratio"
    ));
    for (name, r) in reports {
        out.push_str(&format!(
            "{:<14} {:>14} {:>12.4} {:>16.2} {:>16.2} {:>10.3} {:>10.3}\n",
            name,
            r.total_cycles,
            r.time_s * 1e3,
            r.off_chip_bytes as f64 / 1e6,
            r.psum_bytes as f64 / 1e6,
            r.time_s / base.time_s,
            r.off_chip_bytes as f64 / base.off_chip_bytes as f64,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SimReport {
        let mut per_stage = BTreeMap::new();
        per_stage.insert(
            "q_proj".to_string(),
            StageMetrics {
                cycles: 123.456789012345,
                ops: 42,
                time_s: 1.23e-7,
                throughput_ops: 0.3333333333333333,
                utilization: 0.1,
                weight_off_chip_bytes: 1024.5,
                weight_delivered_bytes: 2048.0,
                activation_off_chip_bytes: 1.0 / 3.0,
                activation_delivered_bytes: 7.0,
                psum_bytes: 99,
                skipped_windows: 1,
                deactivated_core_cycles: 2,
            },
        );
        SimReport {
            schema_version: 1,
            kind: ArchKind::DLegion,
            arch: crate::config::preset("dlegion-8").unwrap().arch,
            total_cycles: 1000,
            time_s: 1e-6,
            total_ops: 42,
            throughput_ops: 4.2e7,
            off_chip_bytes: 3072,
            delivered_bytes: 4096,
            psum_bytes: 99,
            psum_peak_bank_bytes: 7,
            noc: NocTotals {
                off_chip_bytes: 3072,
                delivered_bytes: 4096,
                multicast_saved_bytes: 1024,
            },
            skipped_windows: 1,
            deactivated_core_cycles: 2,
            per_stage,
            functional: None,
        }
    }

    #[test]
    fn json_round_trip() {
        let r = sample();
        let text = to_json(&r).unwrap();
        let back = from_json(&text).unwrap();
        assert_eq!(r, back);
    }

    #[test]
    fn csv_round_trips_floats_exactly() {
        let r = sample();
        let csv = to_csv(&r);
        let stages = stage_metrics_from_csv(&csv).unwrap();
        assert_eq!(stages["q_proj"], r.per_stage["q_proj"]);
        assert_eq!(stages["total"].ops, 42);
        assert_eq!(stages["total"].cycles, 1000.0);
    }

    #[test]
    fn csv_rejects_garbage() {
        assert!(stage_metrics_from_csv("").is_err());
        assert!(stage_metrics_from_csv("not,a,header\n1,2,3").is_err());
        let bad = format!("{CSV_HEADER}\nstage,oops");
        assert!(stage_metrics_from_csv(&bad).is_err());
    }

    #[test]
    fn format_parsing() {
        assert_eq!("json".parse::<ReportFormat>().unwrap(), ReportFormat::Json);
        assert_eq!("csv".parse::<ReportFormat>().unwrap(), ReportFormat::Csv);
        assert!(matches!(
            "xml".parse::<ReportFormat>(),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn comparison_table_ratios() {
        let a = sample();
        let mut b = sample();
        b.total_cycles = 2000;
        b.time_s = 2e-6;
        b.off_chip_bytes = 6144;
        let table =
            comparison_table(&[("base".to_string(), a), ("other".to_string(), b)]).unwrap();
        assert!(table.contains("base"));
        assert!(table.contains("2.000"));
    }
}
