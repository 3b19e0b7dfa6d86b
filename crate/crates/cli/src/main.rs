//! `ward-sentinel` command-line front end.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use ward_sentinel_core::camera::{
    bed_stats_all, placement_distribution, write_stats_csv, HistogramBins,
};
use ward_sentinel_core::eval::{evaluate_frames, trend_accuracy_report, FrameLabel};
use ward_sentinel_core::flow::farneback_flow_timed;
use ward_sentinel_core::geometry::Polygon;
use ward_sentinel_core::io::detector::{ReplayDetector, SyntheticDetector};
use ward_sentinel_core::io::files::{
    create, export_rows_csv, read_jsonl, read_observation_logs, write_cohort_csv,
    write_crossings_csv, write_jsonl, write_observation_logs, write_trend_accuracy_csv,
    write_trends_csv,
};
use ward_sentinel_core::io::ingest::{ingest_external, Adapter, IngestOptions};
use ward_sentinel_core::io::pipeline::{
    derive_states, row_ticks, run_many, run_to_store, scenario_ticks, MotionMode, SessionJob,
    SessionRunner,
};
use ward_sentinel_core::io::store::Store;
use ward_sentinel_core::io::{IoError, CSV_SCHEMA_HEADER};
use ward_sentinel_core::logic::attribute_detections;
use ward_sentinel_core::model::CanonicalRow;
use ward_sentinel_core::sim::{generate, textured_pair, ScenarioSpec};
use ward_sentinel_core::trend::{aggregate_hourly, assisted_trends, cohort_average};
use ward_sentinel_core::{par, Error as CoreError, LogicalState, PipelineConfig, SessionId};

#[derive(Parser, Debug)]
#[command(
    name = "ward-sentinel",
    version,
    about = "Patient-monitoring analytics pipeline"
)]
struct Cli {
    /// TOML file with pipeline settings; unspecified fields keep defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the per-second pipeline into the store at <out>/store.
    Run(RunArgs),
    /// Generate a synthetic session with ground truth.
    Simulate {
        /// Scenario spec (JSON).
        #[arg(long)]
        spec: PathBuf,
    },
    /// Hourly trends and cohort averages from stored or exported states.
    Trends {
        /// Store directory, canonical JSONL or logical-state JSONL.
        #[arg(long)]
        states: PathBuf,
        /// Observation log CSV; adds log-assisted trends.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Compare pipeline output against labels or observation logs
    #[command(subcommand)]
    Evaluate(EvalCommand),
    /// Bed placement statistics from frame labels.
    CameraMeta {
        /// Frame-label JSONL.
        #[arg(long)]
        labels: PathBuf,
        /// Histogram bins per axis.
        #[arg(long, default_value_t = 20)]
        bins: usize,
    },
    /// Import external data into the store at <out>/store.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// `canonical` or `public-csv`.
        #[arg(long, default_value = "canonical")]
        adapter: String,
        /// Drop sessions spanning fewer days (default: 2 for public-csv).
        #[arg(long)]
        min_days: Option<f64>,
    },
    /// Timing benchmarks
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Flat CSV of every stored second.
    Export {
        /// Store directory (default <out>/store).
        #[arg(long)]
        store: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Canonical JSONL to replay (detections, optional motion).
    #[arg(long, conflicts_with = "scenario")]
    input: Option<PathBuf>,
    /// Scenario spec to simulate and run end to end.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Motion source: dense flow on rendered frames, scenario-provided values, or none.
    #[arg(long, value_enum, default_value_t = MotionArg::Provided)]
    motion: MotionArg,
    /// Safety-zone polygon as JSON `[[x, y], ...]` in analysis pixels.
    #[arg(long)]
    zone: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MotionArg {
    Flow,
    Provided,
    Off,
}

#[derive(Subcommand, Debug)]
enum EvalCommand {
    /// Detection, role and patient-alone metrics against frame labels.
    Frames {
        /// Frame-label JSONL.
        #[arg(long)]
        labels: PathBuf,
        /// Canonical JSONL or store directory.
        #[arg(long)]
        preds: PathBuf,
    },
    /// Per patient-day agreement of alone states with observation logs.
    Trends {
        #[arg(long)]
        log: PathBuf,
        /// Store directory, canonical JSONL or logical-state JSONL.
        #[arg(long)]
        states: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum BenchCommand {
    /// Time optical flow on synthetic translated pairs.
    Flow {
        /// Number of frame pairs.
        #[arg(long, default_value_t = 20)]
        pairs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

/// Bad user input detected by the CLI itself.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

fn core<T, E: Into<CoreError>>(r: std::result::Result<T, E>) -> Result<T> {
    r.map_err(|e| anyhow::Error::new(e.into()))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return if e.is_validation() { 2 } else { 1 };
        }
        if let Some(e) = cause.downcast_ref::<IoError>() {
            return if e.is_validation() { 2 } else { 1 };
        }
        if cause.is::<Invalid>() || cause.is::<toml::de::Error>() || cause.is::<serde_json::Error>()
        {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => PipelineConfig::default(),
    };
    core(cfg.validate())?;
    Ok(cfg)
}

/// TOML or JSON by extension.
fn read_config_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
    } else {
        Ok(toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = core(create(path))?;
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::write_all(&mut w, b"\n")?;
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let out = cli.out;
    match cli.command {
        Command::Run(args) => cmd_run(&cfg, &out, args),
        Command::Simulate { spec } => cmd_simulate(&out, &spec),
        Command::Trends { states, log } => cmd_trends(&cfg, &out, &states, log.as_deref()),
        Command::Evaluate(EvalCommand::Frames { labels, preds }) => {
            cmd_eval_frames(&cfg, &out, &labels, &preds)
        }
        Command::Evaluate(EvalCommand::Trends { log, states }) => {
            cmd_eval_trends(&cfg, &out, &log, &states)
        }
        Command::CameraMeta { labels, bins } => cmd_camera_meta(&cfg, &out, &labels, bins),
        Command::Ingest {
            input,
            adapter,
            min_days,
        } => cmd_ingest(&cfg, &out, &input, &adapter, min_days),
        Command::Bench(BenchCommand::Flow { pairs, seed }) => {
            cmd_bench_flow(&cfg, &out, pairs, seed)
        }
        Command::Export { store } => {
            let root = store.unwrap_or_else(|| out.join("store"));
            cmd_export(&out, &root)
        }
    }
}

fn group_by_session(rows: Vec<CanonicalRow>) -> BTreeMap<SessionId, Vec<CanonicalRow>> {
    let mut by: BTreeMap<SessionId, Vec<CanonicalRow>> = BTreeMap::new();
    for r in rows {
        by.entry(r.session_id.clone()).or_default().push(r);
    }
    by
}

/// Canonical rows from a store directory or a JSONL file, by session.
fn load_rows(path: &Path) -> Result<BTreeMap<SessionId, Vec<CanonicalRow>>> {
    if path.is_dir() {
        let store = core(Store::open(path))?;
        let mut by = BTreeMap::new();
        for s in store.sessions() {
            let rows = core(store.read_session(&s))?;
            by.insert(s, rows);
        }
        Ok(by)
    } else {
        Ok(group_by_session(core(read_jsonl(path))?))
    }
}

/// Per-session logical states from a store, canonical JSONL, or a JSONL
/// of bare states.
fn load_states(
    path: &Path,
    cfg: &PipelineConfig,
) -> Result<BTreeMap<SessionId, Vec<LogicalState>>> {
    let rows = if path.is_dir() {
        load_rows(path)?
    } else {
        match read_jsonl::<CanonicalRow>(path) {
            Ok(rows) => group_by_session(rows),
            Err(_) => {
                let states: Vec<LogicalState> = core(read_jsonl(path))?;
                let mut by: BTreeMap<SessionId, Vec<LogicalState>> = BTreeMap::new();
                for s in states {
                    by.entry(s.session_id.clone()).or_default().push(s);
                }
                return Ok(by);
            }
        }
    };
    rows.into_iter()
        .map(|(s, r)| Ok((s, core(derive_states(&r, cfg))?)))
        .collect()
}

fn cmd_run(cfg: &PipelineConfig, out: &Path, args: RunArgs) -> Result<()> {
    let zone: Option<Polygon> = args.zone.as_deref().map(read_config_file).transpose()?;
    let open_store = || core(Store::open(out.join("store")));
    let mode = match args.motion {
        MotionArg::Flow => MotionMode::Flow,
        MotionArg::Provided => MotionMode::Provided,
        MotionArg::Off => MotionMode::Off,
    };
    let summaries = match (args.input, args.scenario) {
        (Some(input), None) => {
            let sessions = group_by_session(core(read_jsonl(&input))?);
            let mut jobs = Vec::new();
            for (session, rows) in sessions {
                let detector = ReplayDetector::from_rows(&rows);
                let runner = core(SessionRunner::new(
                    cfg,
                    session,
                    Box::new(detector),
                    zone.as_ref(),
                ))?;
                let ticks: Vec<_> = row_ticks(&rows)
                    .map(|mut t| {
                        if matches!(mode, MotionMode::Off) {
                            t.motion = None;
                        }
                        t
                    })
                    .collect();
                jobs.push(SessionJob {
                    runner,
                    ticks: Box::new(ticks.into_iter()),
                });
            }
            run_many(jobs, &open_store()?)
                .into_iter()
                .map(core)
                .collect::<Result<Vec<_>>>()?
        }
        (None, Some(spec_path)) => {
            let spec: ScenarioSpec = read_config_file(&spec_path)?;
            let scenario = Arc::new(core(generate(&spec))?);
            let zone = zone.or_else(|| spec.zone.clone());
            let runner = core(SessionRunner::new(
                cfg,
                spec.session_id.clone(),
                Box::new(SyntheticDetector::new(scenario.clone())),
                zone.as_ref(),
            ))?;
            let ticks = core(scenario_ticks(&scenario, mode))?;
            vec![core(run_to_store(runner, ticks, &open_store()?))?]
        }
        _ => bail!(invalid("run needs exactly one of --input or --scenario")),
    };
    let crossings: Vec<_> = summaries.iter().flat_map(|s| s.crossings.clone()).collect();
    write_crossings_csv(&crossings, core(create(&out.join("crossings.csv")))?)?;
    let report: Vec<_> = summaries
        .iter()
        .map(|s| {
            serde_json::json!({
                "session_id": s.session_id,
                "rows": s.rows,
                "first_ts": s.first_ts,
                "last_ts": s.last_ts,
                "crossings": s.crossings.len(),
                "persons_without_role_signal": s.flagged_persons,
            })
        })
        .collect();
    write_json(&out.join("run_summary.json"), &report)?;
    for s in &summaries {
        println!(
            "{}: {} rows, {} crossings",
            s.session_id,
            s.rows,
            s.crossings.len()
        );
    }
    Ok(())
}

fn cmd_simulate(out: &Path, spec_path: &Path) -> Result<()> {
    let spec: ScenarioSpec = read_config_file(spec_path)?;
    let sc = core(generate(&spec))?;
    let dir = out.join(spec.session_id.as_str());
    let rows: Vec<CanonicalRow> = sc
        .detections
        .iter()
        .zip(&sc.motion)
        .map(|(raws, m)| {
            let (rec, _) = attribute_detections(spec.session_id.clone(), m.ts, raws);
            let mut row = CanonicalRow::from_record(rec);
            row.motion = Some(m.magnitudes);
            row
        })
        .collect();
    write_jsonl(
        &rows,
        "ward-sentinel.canonical",
        core(create(&dir.join("canonical.jsonl")))?,
    )?;
    write_jsonl(
        &sc.truth,
        "ward-sentinel.truth",
        core(create(&dir.join("truth.jsonl")))?,
    )?;
    write_observation_logs(
        std::slice::from_ref(&sc.log),
        core(create(&dir.join("observation_log.csv")))?,
    )?;
    write_crossings_csv(
        &sc.crossings,
        core(create(&dir.join("crossings_truth.csv")))?,
    )?;
    println!(
        "{}: {} seconds written to {}",
        spec.session_id,
        sc.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_trends(cfg: &PipelineConfig, out: &Path, states: &Path, log: Option<&Path>) -> Result<()> {
    let sessions = load_states(states, cfg)?;
    let per: Vec<_> = par::map(&sessions.values().collect::<Vec<_>>(), |s| {
        aggregate_hourly(s)
    });
    let mut trends = Vec::new();
    for t in per {
        trends.extend(core(t)?);
    }
    write_trends_csv(&trends, core(create(&out.join("trends.csv")))?)?;
    write_cohort_csv(
        &cohort_average(&trends),
        core(create(&out.join("cohort.csv")))?,
    )?;
    if let Some(log) = log {
        let logs = core(read_observation_logs(log))?;
        let mut assisted = Vec::new();
        for l in &logs {
            let Some(st) = sessions.get(&l.session_id) else {
                eprintln!("warning: log session {} has no states", l.session_id);
                continue;
            };
            assisted.extend(core(assisted_trends(st, l))?);
        }
        write_trends_csv(&assisted, core(create(&out.join("assisted_trends.csv")))?)?;
    }
    println!(
        "{} hourly rows from {} sessions",
        trends.len(),
        sessions.len()
    );
    Ok(())
}

fn cmd_eval_frames(cfg: &PipelineConfig, out: &Path, labels: &Path, preds: &Path) -> Result<()> {
    let labels: Vec<FrameLabel> = core(read_jsonl(labels))?;
    let preds: Vec<CanonicalRow> = load_rows(preds)?.into_values().flatten().collect();
    let report = evaluate_frames(&labels, &preds, cfg);
    write_json(&out.join("eval_frames.json"), &report)?;
    println!(
        "macro F1 {:.4} over {} frames ({} excluded)",
        report.macro_f1, report.frames_evaluated, report.frames_excluded
    );
    Ok(())
}

fn cmd_eval_trends(cfg: &PipelineConfig, out: &Path, log: &Path, states: &Path) -> Result<()> {
    let logs = core(read_observation_logs(log))?;
    let mut sessions = load_states(states, cfg)?;
    let mut pairs = Vec::new();
    for l in logs {
        match sessions.remove(&l.session_id) {
            Some(st) => pairs.push((st, l)),
            None => eprintln!("warning: log session {} has no states", l.session_id),
        }
    }
    if pairs.is_empty() {
        bail!(invalid("no session has both states and an observation log"));
    }
    let report = core(trend_accuracy_report(&pairs, cfg))?;
    write_json(&out.join("eval_trends.json"), &report)?;
    write_trend_accuracy_csv(&report.rows, core(create(&out.join("trend_accuracy.csv")))?)?;
    for s in &report.summary {
        println!(
            "{}: {:.3} +/- {:.3} over {} patient-days",
            s.period.as_str(),
            s.mean,
            s.std,
            s.patient_days
        );
    }
    Ok(())
}

fn cmd_camera_meta(cfg: &PipelineConfig, out: &Path, labels: &Path, bins: usize) -> Result<()> {
    if bins == 0 {
        bail!(invalid("--bins must be positive"));
    }
    let labels: Vec<FrameLabel> = core(read_jsonl(labels))?;
    let stats = bed_stats_all(&labels, cfg.analysis_dims());
    write_stats_csv(
        &stats,
        core(create(&out.join("bed_stats.csv")))?,
        CSV_SCHEMA_HEADER,
    )?;
    let dist = placement_distribution(
        &stats,
        HistogramBins {
            centroid_x: bins,
            centroid_y: bins,
            ..HistogramBins::default()
        },
    );
    dist.write_csv(
        core(create(&out.join("bed_histogram.csv")))?,
        CSV_SCHEMA_HEADER,
    )?;
    println!("{} of {} labels have a bed", stats.len(), labels.len());
    Ok(())
}

fn cmd_ingest(
    cfg: &PipelineConfig,
    out: &Path,
    input: &Path,
    adapter: &str,
    min_days: Option<f64>,
) -> Result<()> {
    let parsed = core(Adapter::parse(adapter))?;
    let mut opts = IngestOptions::for_adapter(parsed, cfg.analysis_dims());
    if min_days.is_some() {
        opts.min_session_days = min_days;
    }
    let store = core(Store::open(out.join("store")))?;
    let report = core(ingest_external(input, adapter, &store, &opts))?;
    write_json(&out.join("ingest_report.json"), &report)?;
    for r in &report.rejected {
        eprintln!("{}:{}: rejected: {}", input.display(), r.line, r.reason);
    }
    for (s, why) in &report.dropped_sessions {
        eprintln!("session {s} dropped: {why}");
    }
    if report.already_ingested {
        println!("already ingested (sha256 {})", report.source_sha256);
    } else {
        println!(
            "{} rows ingested, {} rejected, {} sessions",
            report.rows_ingested,
            report.rejected.len(),
            report.sessions.len()
        );
    }
    Ok(())
}

fn cmd_bench_flow(cfg: &PipelineConfig, out: &Path, pairs: usize, seed: u64) -> Result<()> {
    let (w, h) = cfg.flow_dims();
    let mut wtr =
        ward_sentinel_core::io::files::csv_writer(core(create(&out.join("bench_flow.csv")))?)?;
    wtr.write_record([
        "pair",
        "width",
        "height",
        "parallel",
        "pyramid_ms",
        "poly_ms",
        "solve_ms",
        "total_ms",
        "fps",
    ])?;
    let mut total = 0.0f64;
    for i in 0..pairs {
        let shift = ((i % 11) as i32 - 5, ((i * 7) % 11) as i32 - 5);
        let (a, b) = textured_pair(seed.wrapping_add(i as u64), w, h, shift);
        let start = Instant::now();
        let (_, t) = core(farneback_flow_timed(&a, &b, &cfg.flow))?;
        let secs = start.elapsed().as_secs_f64();
        total += secs;
        let ms = |d: std::time::Duration| format!("{:.3}", d.as_secs_f64() * 1e3);
        wtr.write_record([
            i.to_string(),
            w.to_string(),
            h.to_string(),
            par::is_parallel().to_string(),
            ms(t.pyramid),
            ms(t.poly_expansion),
            ms(t.solve),
            format!("{:.3}", secs * 1e3),
            format!("{:.3}", 1.0 / secs),
        ])?;
    }
    wtr.flush()?;
    if pairs > 0 {
        println!(
            "{:.2} frames/s over {pairs} pairs at {w}x{h}",
            pairs as f64 / total
        );
    }
    Ok(())
}

fn cmd_export(out: &Path, root: &Path) -> Result<()> {
    if !root.join("manifest.json").exists() {
        bail!(invalid(format!("{} is not a store", root.display())));
    }
    let store = core(Store::open(root))?;
    core(store.verify())?;
    let rows: Vec<CanonicalRow> = load_rows(root)?.into_values().flatten().collect();
    export_rows_csv(&rows, core(create(&out.join("export.csv")))?)?;
    println!("{} rows exported", rows.len());
    Ok(())
}
