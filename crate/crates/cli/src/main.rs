// SPDX-License-Identifier: Apache-2.0

//! `ccabench` — desk-scale toolkit for confidential on-device inference:
//! an attestation-gated model-deployment demo, a world-switch overhead
//! simulator, and a marker-annotated instruction-trace analyzer.
//!
//! Exit codes are a stable contract: 0 success, 1 unexpected failure,
//! 2 input error, 3 expected security rejection.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::thread;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use ccabench_core::realm::UsagePolicy;
use ccabench_core::sim::emit_trace;
use ccabench_core::trace::{
    aggregate, overhead, render_overhead, render_stage_report, Analyzer, MarkerConfig, ParseMode,
    ReportFormat, StageReport, TraceAnalysis, TraceReader,
};
use ccabench_core::{
    run_demo, simulate_service, CostModel, DemoConfig, DemoOutcome, DemoTransport, DeploymentKind,
    ProtocolError, SimResult, TamperMode, TimerConfig, WorkloadProfile,
};

const EXIT_INTERNAL: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_REJECTED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "ccabench",
    version,
    about = "Attestation-gated deployment demo, exit-overhead simulator, and trace analyzer",
    after_help = "Set CCABENCH_LOG=debug (or info, warn, ...) for diagnostics on stderr."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the three-party deployment pipeline (steps 1-8) in-process.
    Demo(DemoArgs),
    /// Simulate a service workload under a cost model and timer setup.
    Simulate(SimulateArgs),
    /// Parse instruction traces and report per-stage / per-context counts.
    Analyze(AnalyzeArgs),
}

/// Input problems exit 2; everything unexpected exits 1. The demo's
/// deliberate attestation rejection is not an error (exit 3, see
/// [`cmd_demo`]).
enum CliError {
    Input(String),
    Internal(String),
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CCABENCH_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Demo(args) => cmd_demo(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Analyze(args) => cmd_analyze(args),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}

// -----------------------------------------------------------------------
// demo
// -----------------------------------------------------------------------

#[derive(Args)]
struct DemoArgs {
    /// Seed for every derived artifact (image, weights, keys, page layout).
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Corrupt one protocol element; the run must end in attestation
    /// rejection and exit 3.
    #[arg(long, value_name = "image|token|replay", value_parser = TamperMode::from_str)]
    tamper: Option<TamperMode>,
    /// Link type between the device and the two services.
    #[arg(long, default_value = "queue", value_name = "queue|socket",
          value_parser = DemoTransport::from_str)]
    transport: DemoTransport,
    /// Run verifier and provider on their own threads (sockets imply this).
    #[arg(long)]
    threaded: bool,
    /// Usage policy: inferences allowed before the realm self-destructs.
    #[arg(long)]
    max_inferences: Option<u64>,
    /// Queries the normal world submits through the shared slots.
    #[arg(long, default_value_t = 3)]
    queries: u32,
    /// Simulated physical memory size, in 4 KiB pages.
    #[arg(long, default_value_t = 512)]
    pages: u64,
    /// Realm image payload size, in bytes.
    #[arg(long, default_value_t = 10_000)]
    image_bytes: usize,
    /// Model weight size, in bytes.
    #[arg(long, default_value_t = 65_536)]
    model_bytes: usize,
    /// Back the shared slots with files in this directory instead of
    /// normal-world pages.
    #[arg(long, value_name = "DIR")]
    shared_dir: Option<PathBuf>,
    /// Provider gains a newer model right after delivery, so the step-8
    /// poll installs an update.
    #[arg(long)]
    update: bool,
}

fn cmd_demo(args: DemoArgs) -> Result<ExitCode, CliError> {
    if args.pages < 8 {
        return Err(input(format!(
            "--pages {}: the demo needs at least 8 pages",
            args.pages
        )));
    }
    if args.image_bytes == 0 || args.model_bytes == 0 {
        return Err(input("--image-bytes and --model-bytes must be positive"));
    }
    let config = DemoConfig {
        total_pages: args.pages,
        image_bytes: args.image_bytes,
        model_bytes: args.model_bytes,
        query_count: args.queries,
        policy: UsagePolicy {
            max_inferences: args.max_inferences,
            valid_until: None,
        },
        tamper: args.tamper,
        threaded: args.threaded,
        transport: args.transport,
        shared_dir: args.shared_dir.clone(),
        update_available: args.update,
        ..DemoConfig::new(args.seed)
    };
    let report = run_demo(&config).map_err(|err| match err {
        // The only way flags alone can sink the run: too little memory
        // for the image/model/shared slots they describe.
        ProtocolError::OutOfPages { .. } => input(format!("demo out of memory: {err}")),
        other => CliError::Internal(format!("demo failed: {other}")),
    })?;
    for line in &report.events {
        println!("{line}");
    }
    println!(
        "scan: {}; teardown scrub: {}",
        if report.scan.clean() {
            "no weight bytes visible outside the realm".to_string()
        } else {
            format!("{} LEAKED WINDOWS", report.scan.hits.len())
        },
        if report.scrub_verified {
            "all realm granules zeroed and returned"
        } else {
            "INCOMPLETE"
        }
    );
    match &report.outcome {
        DemoOutcome::Completed {
            answers,
            expired,
            update_installed,
        } => {
            println!(
                "outcome: completed — {} of {} queries answered{}{}",
                answers.len(),
                args.queries,
                if *expired {
                    "; realm expired under its usage policy"
                } else {
                    ""
                },
                if *update_installed {
                    "; update installed"
                } else {
                    ""
                }
            );
            Ok(ExitCode::SUCCESS)
        }
        DemoOutcome::Rejected(reason) => {
            println!("outcome: attestation rejected — {reason}");
            Ok(ExitCode::from(EXIT_REJECTED))
        }
    }
}

// -----------------------------------------------------------------------
// simulate
// -----------------------------------------------------------------------

#[derive(Args)]
struct SimulateArgs {
    /// Workload profile JSON (schema in docs/formats.md).
    #[arg(long, value_name = "FILE")]
    workload: PathBuf,
    /// Cost model JSON; defaults to the built-in calibrated model.
    #[arg(long, value_name = "FILE")]
    cost: Option<PathBuf>,
    /// Guest timer frequencies, "EL1_HZ:EL2_HZ".
    #[arg(long, default_value = "100:1000", value_name = "HZ:HZ")]
    timers: String,
    /// Deployment to simulate.
    #[arg(long, default_value = "realm", value_name = "realm|normal",
          value_parser = parse_kind)]
    kind: DeploymentKind,
    /// Simulate both deployments and write their overhead comparison
    /// instead of a single result.
    #[arg(long)]
    both: bool,
    /// Also write the simulated run as a synthetic instruction trace
    /// (the realm run when --both).
    #[arg(long, value_name = "FILE")]
    emit_trace: Option<PathBuf>,
    /// Report destination (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Encoding of the --both comparison report; single results are
    /// always SimResult JSON.
    #[arg(long, default_value = "json", value_name = "csv|json",
          value_parser = ReportFormat::from_str)]
    format: ReportFormat,
}

fn parse_kind(s: &str) -> Result<DeploymentKind, String> {
    match s {
        "realm" => Ok(DeploymentKind::RealmVM),
        "normal" => Ok(DeploymentKind::NormalWorldVM),
        other => Err(format!(
            "unknown deployment kind {other:?} (expected realm or normal)"
        )),
    }
}

fn parse_timers(spec: &str) -> Result<TimerConfig, CliError> {
    let (el1, el2) = spec
        .split_once(':')
        .ok_or_else(|| input(format!("--timers expects \"EL1_HZ:EL2_HZ\", got {spec:?}")))?;
    let hz = |s: &str, which: &str| {
        s.trim()
            .parse::<u64>()
            .map_err(|err| input(format!("--timers {which} frequency {s:?}: {err}")))
    };
    TimerConfig::new(hz(el1, "EL1")?, hz(el2, "EL2")?)
        .map_err(|err| input(format!("--timers: {err}")))
}

/// A one-run stage report, so simulated results flow through the same
/// overhead arithmetic measured traces use.
fn stage_report(result: &SimResult) -> StageReport {
    let analysis = TraceAnalysis {
        per_context: result.per_context(),
        per_stage: result.per_stage(),
        attributed_total: result.total,
        final_cumulative: Some(result.total),
    };
    aggregate(&[analysis]).expect("a single run always aggregates")
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode, CliError> {
    let workload: WorkloadProfile = load_json(&args.workload)?;
    let cost = match &args.cost {
        Some(path) => {
            let cost: CostModel = load_json(path)?;
            cost.validate()
                .map_err(|err| input(format!("{}: {err}", path.display())))?;
            cost
        }
        None => CostModel::calibrated(),
    };
    let timers = parse_timers(&args.timers)?;

    let primary_kind = if args.both {
        DeploymentKind::RealmVM
    } else {
        args.kind
    };
    let primary = simulate_service(&workload, primary_kind, timers, &cost);
    log::info!(
        "{primary_kind:?}: {} instructions, {} exits",
        primary.total,
        primary.exits
    );

    let output = if args.both {
        let nw = simulate_service(&workload, DeploymentKind::NormalWorldVM, timers, &cost);
        let report = overhead(&stage_report(&primary), &stage_report(&nw))
            .map_err(|err| input(format!("overhead undefined: {err}")))?;
        render_overhead(&report, args.format)
    } else {
        let mut json =
            serde_json::to_string_pretty(&primary).expect("result serialization cannot fail");
        json.push('\n');
        json
    };

    if let Some(path) = &args.emit_trace {
        let text = emit_trace(&primary, &MarkerConfig::builtin())
            .map_err(|err| CliError::Internal(format!("trace emission failed: {err}")))?;
        write_atomic(path, &text)?;
    }
    emit_report(args.out.as_deref(), &output)
}

// -----------------------------------------------------------------------
// analyze
// -----------------------------------------------------------------------

#[derive(Args)]
struct AnalyzeArgs {
    /// Trace files, one per run; several are aggregated as repetitions.
    #[arg(required = true, value_name = "TRACE")]
    traces: Vec<PathBuf>,
    /// Marker vocabulary JSON; defaults to the built-in convention.
    #[arg(long, value_name = "FILE")]
    markers: Option<PathBuf>,
    /// Normal-world baseline trace files; adds an overhead comparison.
    #[arg(long, value_name = "TRACE")]
    baseline: Vec<PathBuf>,
    /// Report encoding.
    #[arg(long, default_value = "csv", value_name = "csv|json",
          value_parser = ReportFormat::from_str)]
    format: ReportFormat,
    /// Skip malformed lines with a warning instead of failing.
    #[arg(long)]
    lenient: bool,
    /// Report destination (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn analyze_file(
    path: &Path,
    markers: &MarkerConfig,
    mode: ParseMode,
) -> Result<TraceAnalysis, CliError> {
    let file = fs::File::open(path).map_err(|err| input(format!("{}: {err}", path.display())))?;
    let mut reader = TraceReader::new(BufReader::new(file), markers.clone(), mode);
    let mut analyzer = Analyzer::new();
    for event in &mut reader {
        let event = event.map_err(|err| input(format!("{}: {err}", path.display())))?;
        analyzer
            .push(&event)
            .map_err(|err| input(format!("{}: {err}", path.display())))?;
    }
    if reader.skipped_lines() > 0 {
        log::warn!(
            "{}: skipped {} malformed line(s)",
            path.display(),
            reader.skipped_lines()
        );
    }
    analyzer
        .finish()
        .map_err(|err| input(format!("{}: {err}", path.display())))
}

/// Each trace parses independently; results come back in input order, so
/// the aggregation is deterministic regardless of completion order.
fn analyze_files(
    paths: &[PathBuf],
    markers: &MarkerConfig,
    mode: ParseMode,
) -> Result<Vec<TraceAnalysis>, CliError> {
    if paths.len() == 1 {
        return Ok(vec![analyze_file(&paths[0], markers, mode)?]);
    }
    thread::scope(|scope| {
        let handles: Vec<_> = paths
            .iter()
            .map(|path| scope.spawn(move || analyze_file(path, markers, mode)))
            .collect();
        handles
            .into_iter()
            .map(|handle| handle.join().expect("analysis thread"))
            .collect()
    })
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<ExitCode, CliError> {
    let markers = match &args.markers {
        Some(path) => {
            let markers: MarkerConfig = load_json(path)?;
            markers
                .validate()
                .map_err(|err| input(format!("{}: {err}", path.display())))?;
            markers
        }
        None => MarkerConfig::builtin(),
    };
    let mode = if args.lenient {
        ParseMode::Lenient
    } else {
        ParseMode::Strict
    };

    let runs = analyze_files(&args.traces, &markers, mode)?;
    let report = aggregate(&runs).map_err(|err| input(err.to_string()))?;

    let output = if args.baseline.is_empty() {
        render_stage_report(&report, args.format)
    } else {
        let baseline_runs = analyze_files(&args.baseline, &markers, mode)?;
        let baseline = aggregate(&baseline_runs).map_err(|err| input(err.to_string()))?;
        let comparison =
            overhead(&report, &baseline).map_err(|err| input(format!("overhead: {err}")))?;
        match args.format {
            // Two CSV blocks, blank-line separated: the stage/context
            // table, then the wide comparison row.
            ReportFormat::Csv => format!(
                "{}\n{}",
                render_stage_report(&report, args.format),
                render_overhead(&comparison, args.format)
            ),
            ReportFormat::Json => {
                let mut json = serde_json::to_string_pretty(&serde_json::json!({
                    "stages": report,
                    "overhead": comparison,
                }))
                .expect("report serialization cannot fail");
                json.push('\n');
                json
            }
        }
    };
    emit_report(args.out.as_deref(), &output)
}

// -----------------------------------------------------------------------
// shared plumbing
// -----------------------------------------------------------------------

/// Deserialize a JSON config, reporting the offending field path on
/// schema violations.
fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text =
        fs::read_to_string(path).map_err(|err| input(format!("{}: {err}", path.display())))?;
    let mut deserializer = serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(&mut deserializer).map_err(|err| {
        input(format!(
            "{}: {} (at {})",
            path.display(),
            err.inner(),
            err.path()
        ))
    })
}

fn emit_report(out: Option<&Path>, contents: &str) -> Result<ExitCode, CliError> {
    match out {
        Some(path) => write_atomic(path, contents)?,
        None => print!("{contents}"),
    }
    Ok(ExitCode::SUCCESS)
}

/// Write via a sibling temp file + rename, so readers never observe a
/// half-written report.
fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let file_name = path
        .file_name()
        .ok_or_else(|| input(format!("{}: not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp-{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents)
        .and_then(|()| fs::rename(&tmp, path))
        .map_err(|err| {
            let _ = fs::remove_file(&tmp);
            input(format!("{}: {err}", path.display()))
        })
}
