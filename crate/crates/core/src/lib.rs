//! Performance and correctness models for a many-Legion adaptive-precision
//! systolic accelerator: closed-form analytics, a window-exact simulator
//! with multicast traffic accounting, a bit-accurate dataflow model and
//! comparison runners for the reference designs.

pub mod analytic;
pub mod baselines;
pub mod config;
pub mod error;
pub mod functional;
pub mod report;
pub mod sim;
pub mod workload;
pub mod ztb;

pub use config::{ArchConfig, ArchKind, ModelConfig, PrecisionMode, Preset};
pub use error::{Error, Result};
pub use report::{ReportFormat, RunManifest, SimReport, StageMetrics};
pub use sim::{simulate, Machine, SimOptions};
pub use workload::{Stage, WorkloadSet, WorkloadSpec};
pub use ztb::ZeroTileBook;
