//! `dlegion`: command line front end for the accelerator models.
//!
//! Exit codes: 0 success, 1 internal error, 2 input/validation error,
//! 3 data-file mismatch, 4 functional-check failure.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sha2::Digest;

use dlegion_core::analytic;
use dlegion_core::baselines;
use dlegion_core::config::{self, ArchConfig, ModelConfig, PrecisionMode};
use dlegion_core::report::{self, ReportBundle, ReportFormat, RunManifest, SimReport};
use dlegion_core::sim::{simulate, Machine, SimOptions};
use dlegion_core::workload::{self, Stage, WorkloadSet, WorkloadSpec};
use dlegion_core::ztb::ZeroTileBook;
use dlegion_core::Error;

/// Environment variable naming the directory searched for config files
/// given by bare name.
const CONFIG_DIR_ENV: &str = "DLEGION_CONFIG_DIR";

#[derive(Parser)]
#[command(name = "dlegion", version, about = "Legion accelerator model toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive the per-stage GEMM workloads of a model
    Workloads(WorkloadsArgs),
    /// Rank Legion granularity candidates by configuration rate index
    Dse(DseArgs),
    /// Run the cycle-level model on a model or a single GEMM
    Simulate(SimulateArgs),
    /// Run several architectures over one model and tabulate ratios
    Compare(CompareArgs),
    /// Generate a zero-tile book file
    ZtbGen(ZtbGenArgs),
    /// Write the full experiment bundle as CSVs
    Repro(ReproArgs),
}

#[derive(Args)]
struct WorkloadsArgs {
    /// Model preset name or JSON file
    #[arg(long)]
    model: String,
    /// Emit fused Q/K/V GEMMs instead of per-head ones
    #[arg(long)]
    fused: bool,
    #[arg(long, default_value = "table")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DseArgs {
    /// JSON file with candidate list [{"label": "...", "cores": C, "dim": D}, ...]
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, default_value_t = 2048)]
    seq: u64,
    #[arg(long, default_value_t = 2560)]
    hidden: u64,
    #[arg(long, default_value_t = 64)]
    head_dim: u64,
    #[arg(long, default_value = "table")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Architecture preset name or JSON file
    #[arg(long)]
    arch: String,
    /// Model preset name or JSON file
    #[arg(long, conflicts_with = "gemm")]
    model: Option<String>,
    /// Single GEMM as MxKxN
    #[arg(long)]
    gemm: Option<String>,
    /// Precision for --gemm: dense8x8, proj8x4 or proj8x2
    #[arg(long, default_value = "dense8x8")]
    mode: String,
    /// Stage tag for --gemm (defaults to q_proj for projection modes,
    /// attn_score for dense)
    #[arg(long)]
    stage: Option<String>,
    /// Zero-tile book file
    #[arg(long)]
    ztb: Option<PathBuf>,
    /// Verify the bit-accurate dataflow against the reference
    #[arg(long)]
    functional: bool,
    /// Model stream stalls on narrow Legion links
    #[arg(long)]
    bw_stall: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cap on Legions one attention GEMM is partitioned across
    #[arg(long, default_value_t = 8)]
    a2a_group: u64,
    /// Baseline report JSON to print per-metric ratios against
    #[arg(long)]
    ratio: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    model: String,
    /// Comma-separated architecture presets
    #[arg(long, required = true, value_delimiter = ',')]
    archs: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ZtbGenArgs {
    #[arg(long)]
    arch: String,
    /// GEMM the book is shaped for, as MxKxN
    #[arg(long)]
    gemm: String,
    #[arg(long, default_value = "proj8x2")]
    mode: String,
    /// Mark exactly this fraction of windows fully sparse
    #[arg(long, conflicts_with = "tile_sparsity")]
    window_sparsity: Option<f64>,
    /// Mark each tile zero independently with this probability
    #[arg(long)]
    tile_sparsity: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReproArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Workloads(a) => cmd_workloads(a),
        Command::Dse(a) => cmd_dse(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Compare(a) => cmd_compare(a),
        Command::ZtbGen(a) => cmd_ztb_gen(a),
        Command::Repro(a) => cmd_repro(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ZtbShapeMismatch { .. } | Error::ZtbFormat(_) => 3,
        Error::FunctionalMismatch { .. } => 4,
        Error::Io(io) if io.kind() != std::io::ErrorKind::NotFound => 1,
        _ => 2,
    }
}

/// Resolves `name` as a file path, a path under $DLEGION_CONFIG_DIR, or
/// nothing (caller falls back to presets).
fn config_file(name: &str) -> Option<PathBuf> {
    let p = Path::new(name);
    if p.exists() {
        return Some(p.to_path_buf());
    }
    if let Ok(dir) = std::env::var(CONFIG_DIR_ENV) {
        for candidate in [
            Path::new(&dir).join(name),
            Path::new(&dir).join(format!("{name}.json")),
        ] {
            if candidate.exists() {
                return Some(candidate);
            }
        }
    }
    None
}

fn load_machine(name: &str) -> Result<Machine, Error> {
    if let Some(path) = config_file(name) {
        let text = std::fs::read_to_string(path)?;
        // either {"kind": ..., "arch": {...}} or a bare architecture
        // (treated as the Legion machine family)
        if let Ok(machine) = serde_json::from_str::<Machine>(&text) {
            return Ok(Machine {
                kind: machine.kind,
                arch: machine.arch.validate()?,
            });
        }
        let arch: dlegion_core::ArchConfig = serde_json::from_str(&text)?;
        return Ok(Machine {
            kind: dlegion_core::ArchKind::DLegion,
            arch: arch.validate()?,
        });
    }
    if config::PRESET_NAMES.contains(&name) {
        return Machine::from_preset(name);
    }
    Err(Error::UnknownPreset(name.to_string()))
}

fn load_model(name: &str) -> Result<ModelConfig, Error> {
    if let Some(path) = config_file(name) {
        let text = std::fs::read_to_string(path)?;
        let model: ModelConfig = serde_json::from_str(&text)?;
        return model.validate();
    }
    if config::PRESET_NAMES.contains(&name) {
        return Ok(config::preset(name)?.model);
    }
    Err(Error::UnknownPreset(name.to_string()))
}

fn parse_mode(s: &str) -> Result<PrecisionMode, Error> {
    match s {
        "dense8x8" => Ok(PrecisionMode::Dense8x8),
        "proj8x4" => Ok(PrecisionMode::Proj8x4),
        "proj8x2" => Ok(PrecisionMode::Proj8x2),
        other => Err(Error::InvalidConfig(vec![format!(
            "unknown precision mode `{other}` (dense8x8, proj8x4, proj8x2)"
        )])),
    }
}

fn parse_stage(s: &str) -> Result<Stage, Error> {
    workload::ALL_STAGES
        .into_iter()
        .find(|st| st.label() == s)
        .ok_or_else(|| Error::InvalidConfig(vec![format!("unknown stage `{s}`")]))
}

fn parse_gemm(s: &str) -> Result<(u64, u64, u64), Error> {
    let parts: Vec<&str> = s.split('x').collect();
    let bad = || Error::InvalidConfig(vec![format!("--gemm expects MxKxN, got `{s}`")]);
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut dims = [0u64; 3];
    for (d, p) in dims.iter_mut().zip(&parts) {
        *d = p.parse().map_err(|_| bad())?;
    }
    Ok((dims[0], dims[1], dims[2]))
}

fn config_hash(parts: &[&str]) -> String {
    let mut h = sha2::Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0]);
    }
    hex::encode(&h.finalize()[..16])
}

fn manifest(command: &str, seed: u64, hash_parts: &[&str]) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        args: std::env::args().skip(1).collect(),
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(hash_parts),
    }
}

fn write_or_print(out: &Option<PathBuf>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => {
            let mut f = std::fs::File::create(path)?;
            f.write_all(text.as_bytes())?;
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn workload_table(set: &WorkloadSet) -> Result<String, Error> {
    let dist = workload::stage_distribution(set)?;
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:>8} {:>20} {:>8}\n",
        "stage", "gemms", "ops", "share"
    ));
    for (stage, ops) in &set.per_stage_ops {
        let count = set.specs.iter().filter(|s| s.stage == *stage).count();
        out.push_str(&format!(
            "{:<12} {:>8} {:>20} {:>7.2}%\n",
            stage.label(),
            count,
            ops,
            dist[stage] * 100.0
        ));
    }
    out.push_str(&format!(
        "{:<12} {:>8} {:>20} {:>7.2}%\n",
        "total",
        set.specs.len(),
        set.total_ops,
        100.0
    ));
    Ok(out)
}

fn cmd_workloads(a: WorkloadsArgs) -> Result<(), Error> {
    let model = load_model(&a.model)?;
    let set = workload::derive_attention_workloads_with(
        &model,
        workload::DeriveOptions { fused_proj: a.fused },
    )?;
    let text = match a.format.as_str() {
        "table" => workload_table(&set)?,
        "json" => serde_json::to_string_pretty(&set)? + "\n",
        "csv" => {
            let dist = workload::stage_distribution(&set)?;
            let mut s = String::from("stage,gemms,ops,share\n");
            for (stage, ops) in &set.per_stage_ops {
                let count = set.specs.iter().filter(|w| w.stage == *stage).count();
                s.push_str(&format!("{},{count},{ops},{:?}\n", stage.label(), dist[stage]));
            }
            s.push_str(&format!("total,{},{},1.0\n", set.specs.len(), set.total_ops));
            s
        }
        other => return Err(Error::UnsupportedFormat(other.to_string())),
    };
    write_or_print(&a.out, &text)
}

#[derive(serde::Deserialize)]
struct GridEntry {
    label: Option<String>,
    cores: u64,
    dim: u64,
}

fn dse_table(scores: &[analytic::CriScore]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:>10} {:>8} {:>14} {:>8} {:>8} {:>8} {:>10}\n",
        "candidate", "input_B/c", "tfu", "mean_latency", "bw_n", "tfu_n", "lat_n", "cri"
    ));
    for s in scores {
        out.push_str(&format!(
            "{:<12} {:>10.0} {:>8.0} {:>14.1} {:>8.3} {:>8.3} {:>8.3} {:>10.3}\n",
            s.label, s.input_bw, s.tfu, s.mean_latency, s.bw_norm, s.tfu_norm, s.latency_norm, s.cri
        ));
    }
    out
}

fn cmd_dse(a: DseArgs) -> Result<(), Error> {
    let grid: Vec<(String, ArchConfig)> = match &a.grid {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let entries: Vec<GridEntry> = serde_json::from_str(&text)?;
            entries
                .into_iter()
                .map(|e| {
                    let (default_label, arch) = analytic::dse_candidate(e.cores, e.dim);
                    (e.label.unwrap_or(default_label), arch)
                })
                .collect()
        }
        None => analytic::default_dse_grid(),
    };
    let corners = analytic::corner_workloads(a.seq, a.hidden, a.head_dim);
    let ranking = analytic::cri(&grid, &corners, analytic::CriWeights::default())?;
    let text = match a.format.as_str() {
        "table" => dse_table(&ranking),
        "json" => serde_json::to_string_pretty(&ranking)? + "\n",
        "csv" => {
            let mut s =
                String::from("candidate,input_bw,tfu,mean_latency,bw_norm,tfu_norm,latency_norm,cri\n");
            for r in &ranking {
                s.push_str(&format!(
                    "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
                    r.label, r.input_bw, r.tfu, r.mean_latency, r.bw_norm, r.tfu_norm,
                    r.latency_norm, r.cri
                ));
            }
            s
        }
        other => return Err(Error::UnsupportedFormat(other.to_string())),
    };
    write_or_print(&a.out, &text)
}

fn gemm_workload_set(a: &SimulateArgs) -> Result<WorkloadSet, Error> {
    let (m, k, n) = parse_gemm(a.gemm.as_deref().unwrap())?;
    let mode = parse_mode(&a.mode)?;
    let stage = match &a.stage {
        Some(s) => parse_stage(s)?,
        None => {
            if mode.is_projection() {
                Stage::QProj
            } else {
                Stage::AttnScore
            }
        }
    };
    let spec = WorkloadSpec {
        m,
        k,
        n,
        mode,
        stage,
        layer: 0,
        head_id: Some(0),
        kv_group_id: Some(0),
    };
    spec.validate()?;
    Ok(WorkloadSet::from_specs(vec![spec]))
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), Error> {
    let machine = load_machine(&a.arch)?;
    let set = match (&a.model, &a.gemm) {
        (Some(model), None) => {
            let model = load_model(model)?;
            workload::derive_attention_workloads(&model)?
        }
        (None, Some(_)) => gemm_workload_set(&a)?,
        _ => {
            return Err(Error::InvalidConfig(vec![
                "exactly one of --model or --gemm is required".to_string(),
            ]))
        }
    };
    let ztb = match &a.ztb {
        Some(path) => Some(ZeroTileBook::load(path)?),
        None => None,
    };
    let opts = SimOptions {
        a2a_group_cap: a.a2a_group,
        bw_stall: a.bw_stall,
        functional: a.functional,
        seed: a.seed,
        ztb,
    };
    // a book that matches no workload is a shape error, not a silent no-op
    if let Some(book) = &opts.ztb {
        let mut matched = false;
        let mut expected = (0, 0, 0);
        for spec in &set.specs {
            let mode = machine.exec_mode(spec.mode);
            let t = analytic::tile_counts(spec.m, spec.k, spec.n, &machine.arch, mode);
            expected = (t.kt, t.nt, machine.arch.cores_per_legion);
            if book.check_shape(t.kt, t.nt, machine.arch.cores_per_legion).is_ok() {
                matched = true;
                break;
            }
        }
        if !matched {
            book.check_shape(expected.0, expected.1, expected.2)?;
        }
    }
    let rep = simulate(&machine, &set, &opts)?;
    if let Some(f) = &rep.functional {
        if f.mismatches > 0 {
            return Err(Error::FunctionalMismatch {
                mismatches: f.mismatches,
                context: format!("{} workloads", f.workloads_checked),
            });
        }
        eprintln!(
            "functional: PASS ({} workloads, {} elements)",
            f.workloads_checked, f.elements_checked
        );
    }
    let text = match a.format.parse::<ReportFormat>()? {
        ReportFormat::Json => {
            let bundle = ReportBundle {
                manifest: manifest(
                    "simulate",
                    a.seed,
                    &[
                        &serde_json::to_string(&machine)?,
                        a.model.as_deref().unwrap_or(""),
                        a.gemm.as_deref().unwrap_or(""),
                        &a.mode,
                        &format!("{}:{}:{}", a.a2a_group, a.bw_stall, a.functional),
                    ],
                ),
                report: rep.clone(),
            };
            serde_json::to_string_pretty(&bundle)? + "\n"
        }
        ReportFormat::Csv => report::to_csv(&rep),
    };
    write_or_print(&a.out, &text)?;
    if let Some(path) = &a.ratio {
        let base: SimReport = match serde_json::from_str::<ReportBundle>(&std::fs::read_to_string(
            path,
        )?) {
            Ok(b) => b.report,
            Err(_) => report::from_json(&std::fs::read_to_string(path)?)?,
        };
        let table = report::comparison_table(&[
            ("baseline".to_string(), base),
            ("this-run".to_string(), rep),
        ])?;
        println!("\n{table}");
    }
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<(), Error> {
    let model = load_model(&a.model)?;
    let names: Vec<&str> = a.archs.iter().map(|s| s.as_str()).collect();
    let rows = baselines::compare_presets(&names, &model)?;
    let table = report::comparison_table(&rows)?;
    print!("{table}");
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        for (name, rep) in &rows {
            std::fs::write(dir.join(format!("{name}.json")), report::to_json(rep)?)?;
            std::fs::write(dir.join(format!("{name}.csv")), report::to_csv(rep))?;
        }
        std::fs::write(dir.join("comparison.txt"), &table)?;
    }
    Ok(())
}

fn cmd_ztb_gen(a: ZtbGenArgs) -> Result<(), Error> {
    let machine = load_machine(&a.arch)?;
    let (_, k, n) = parse_gemm(&a.gemm)?;
    let mode = machine.exec_mode(parse_mode(&a.mode)?);
    let t = analytic::tile_counts(1, k, n, &machine.arch, mode);
    let c = machine.arch.cores_per_legion;
    let book = match (a.window_sparsity, a.tile_sparsity) {
        (Some(f), None) => ZeroTileBook::with_window_sparsity(t.kt, t.nt, c, f, a.seed),
        (None, Some(p)) => ZeroTileBook::with_tile_sparsity(t.kt, t.nt, c, p, a.seed),
        (None, None) => ZeroTileBook::dense(t.kt, t.nt, c),
        _ => unreachable!("clap conflicts_with"),
    };
    book.save(&a.out)?;
    eprintln!(
        "wrote {} (kt={}, nt={}, cores={}, zero tiles={}, fully sparse windows={})",
        a.out.display(),
        t.kt,
        t.nt,
        c,
        book.zero_tile_count(),
        book.fully_sparse_window_count()
    );
    Ok(())
}

fn cmd_repro(a: ReproArgs) -> Result<(), Error> {
    let dir = &a.out;
    std::fs::create_dir_all(dir)?;

    // workload distribution tables
    for preset in ["bitnet-1.58b", "bitnet-1.58b-kv"] {
        let model = load_model(preset)?;
        let set = workload::derive_attention_workloads(&model)?;
        let dist = workload::stage_distribution(&set)?;
        let mut s = String::from("stage,gemms,ops,share\n");
        for (stage, ops) in &set.per_stage_ops {
            let count = set.specs.iter().filter(|w| w.stage == *stage).count();
            s.push_str(&format!("{},{count},{ops},{:?}\n", stage.label(), dist[stage]));
        }
        std::fs::write(dir.join(format!("workloads_{preset}.csv")), s)?;
    }

    // granularity sweep
    let ranking = analytic::cri(
        &analytic::default_dse_grid(),
        &analytic::corner_workloads(2048, 2560, 64),
        analytic::CriWeights::default(),
    )?;
    let mut s =
        String::from("candidate,input_bw,tfu,mean_latency,bw_norm,tfu_norm,latency_norm,cri\n");
    for r in &ranking {
        s.push_str(&format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
            r.label, r.input_bw, r.tfu, r.mean_latency, r.bw_norm, r.tfu_norm, r.latency_norm,
            r.cri
        ));
    }
    std::fs::write(dir.join("dse_ranking.csv"), s)?;

    // peak throughput scaling
    let base = config::preset("dlegion-8")?.arch;
    let mut s = String::from("legions,peak_dense_ops,peak_proj8x2_ops\n");
    for l in [8u64, 16, 32, 64] {
        let arch = ArchConfig {
            legions: l,
            ..base.clone()
        };
        s.push_str(&format!(
            "{l},{:?},{:?}\n",
            analytic::peak_throughput(&arch, PrecisionMode::Dense8x8),
            analytic::peak_throughput(&arch, PrecisionMode::Proj8x2),
        ));
    }
    std::fs::write(dir.join("scaling.csv"), s)?;

    // cross-architecture comparisons on both models
    let mut summaries: BTreeMap<String, String> = BTreeMap::new();
    for preset in ["bitnet-1.58b", "bitnet-1.58b-kv"] {
        let model = load_model(preset)?;
        let rows = baselines::compare_presets(baselines::COMPARISON_PRESETS, &model)?;
        for (name, rep) in &rows {
            std::fs::write(
                dir.join(format!("compare_{preset}_{name}.csv")),
                report::to_csv(rep),
            )?;
        }
        let table = report::comparison_table(&rows)?;
        summaries.insert(preset.to_string(), table);
    }
    let mut s = String::new();
    for (preset, table) in &summaries {
        s.push_str(&format!("== {preset} ==\n{table}\n"));
    }
    std::fs::write(dir.join("comparison_summary.txt"), s)?;

    let m = manifest("repro", a.seed, &["repro", &a.seed.to_string()]);
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&m)? + "\n",
    )?;
    eprintln!("wrote experiment bundle to {}", dir.display());
    Ok(())
}
