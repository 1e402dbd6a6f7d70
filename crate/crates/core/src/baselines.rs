//! Convenience runners for the comparison machines (weight-stationary,
//! diagonal-input, single adaptive core, the four-MXU reference design and
//! the Legion machines themselves) over a shared model.

use crate::config::{preset, ModelConfig};
use crate::error::Result;
use crate::report::SimReport;
use crate::sim::{simulate, Machine, SimOptions};
use crate::workload::derive_attention_workloads;

/// Architecture presets that make sense in a cross-machine comparison.
pub const COMPARISON_PRESETS: &[&str] = &[
    "dlegion-8",
    "dlegion-32",
    "dlegion-64",
    "ws-64",
    "dip-64",
    "adip-64",
    "tpuv4i",
];

/// Runs one named architecture preset over a model with default options.
pub fn run_preset_on_model(name: &str, model: &ModelConfig) -> Result<SimReport> {
    let p = preset(name)?;
    let machine = Machine {
        kind: p.kind,
        arch: p.arch,
    };
    let set = derive_attention_workloads(model)?;
    simulate(&machine, &set, &SimOptions::default())
}

/// Runs several architectures over the same model, preserving order.
pub fn compare_presets(names: &[&str], model: &ModelConfig) -> Result<Vec<(String, SimReport)>> {
    names
        .iter()
        .map(|n| Ok((n.to_string(), run_preset_on_model(n, model)?)))
        .collect()
}
