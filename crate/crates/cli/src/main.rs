//! `robomemory` command-line harness.
//!
//! Runs task suites through the full agent, the lifelong two-pass protocol,
//! ablations, the memory latency benchmark, transcript replays, and memory
//! snapshot inspection. Reports are written as canonical JSON; a table goes
//! to stdout.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use robomemory::eval::{
    bench_latency, compute_metrics, run_lifelong, EvalConfig, PassReport, SuiteReport, SuiteRun,
};
use robomemory::model::{from_canonical_json, to_canonical_json};
use robomemory::orchestrator::{Disabled, MemorySnapshot, ModuleDelays, Orchestrator, OrchestratorConfig};
use robomemory::reasoner::{Gateway, RemoteBackend, RemoteConfig, ReplayBackend};
use robomemory::sim::{kitchen_suite, load_suite, Profile, TaskSpec};
use robomemory::vector::HashEmbedder;

#[derive(Debug, Parser)]
#[command(name = "robomemory", version, about = "Lifelong embodied memory harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the suite with the lifelong two-pass protocol.
    Run(RunArgs),
    /// Compare the full system against configurations with components off.
    Ablate(AblateArgs),
    /// Time memory gather and dispatch under parallel and sequential modes.
    Bench(BenchArgs),
    /// Re-run the suite against a recorded reasoner transcript.
    Replay(ReplayArgs),
    /// Validate and summarize a memory snapshot file.
    Snapshot(SnapshotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Oracle,
    Remote,
}

#[derive(Debug, Clone, Args)]
struct SuiteArgs {
    /// Task suite JSON; the bundled kitchen suite when omitted.
    #[arg(long)]
    suite: Option<PathBuf>,
    /// Reasoner backend; overrides the config file.
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// TOML file with `backend` and a `[remote]` table.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "realworld")]
    profile: Profile,
    /// Executor failure probability; the profile default when omitted.
    #[arg(long)]
    failure_p: Option<f64>,
    #[arg(long, default_value_t = 2)]
    passes: u32,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    suite: SuiteArgs,
    /// Comma-separated components to turn off: critic, spatial, longterm.
    #[arg(long, default_value = "")]
    disable: String,
    /// Clear episodic and semantic memory between passes.
    #[arg(long)]
    wipe_between_passes: bool,
    /// Run tasks concurrently, each with its own memory.
    #[arg(long, requires = "wipe_between_passes")]
    parallel_tasks: bool,
    /// Record reasoner exchanges as JSON lines.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Directory for the report, trajectory and memory snapshots.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    suite: SuiteArgs,
    /// Ablations to compare, `;`-separated; each entry is a comma list.
    #[arg(long, default_value = "critic;spatial;longterm")]
    disable: String,
    /// Number of consecutive seeds starting at `--seed`.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Injected delay per memory module, in milliseconds.
    #[arg(long, default_value_t = 100)]
    delay_ms: u64,
    #[arg(long, default_value_t = 20)]
    repetitions: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[command(flatten)]
    suite: SuiteArgs,
    /// Transcript written by `run --transcript`.
    #[arg(long)]
    transcript: PathBuf,
    #[arg(long, default_value = "")]
    disable: String,
    #[arg(long)]
    wipe_between_passes: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SnapshotArgs {
    /// Memory snapshot JSON written by `run --out`.
    file: PathBuf,
    /// Print the spatial graph in GraphViz format.
    #[arg(long)]
    dot: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct FileConfig {
    backend: Option<String>,
    remote: RemoteConfig,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Replay(args) => cmd_replay(args),
        Command::Snapshot(args) => cmd_snapshot(args),
    }
}

fn read_suite(path: Option<&Path>) -> Result<Vec<TaskSpec>> {
    match path {
        None => Ok(kitchen_suite()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            load_suite(&text).with_context(|| format!("loading suite {}", p.display()))
        }
    }
}

fn read_file_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(p) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
}

/// Backend name and a gateway for it.
fn build_gateway(args: &SuiteArgs) -> Result<(String, Gateway)> {
    let file = read_file_config(args.config.as_deref())?;
    let kind = match (args.backend, file.backend.as_deref()) {
        (Some(k), _) => k,
        (None, None | Some("oracle")) => BackendKind::Oracle,
        (None, Some("remote")) => BackendKind::Remote,
        (None, Some(other)) => bail!("unknown backend `{other}` in config"),
    };
    Ok(match kind {
        BackendKind::Oracle => ("oracle".into(), Gateway::oracle()),
        BackendKind::Remote => (
            "remote".into(),
            Gateway::new(Arc::new(RemoteBackend::new(file.remote))),
        ),
    })
}

fn eval_config(args: &SuiteArgs, backend: String, disabled: Disabled, wipe: bool) -> Result<EvalConfig> {
    if args.passes == 0 {
        bail!("--passes must be at least 1");
    }
    let mut config = EvalConfig::new(args.profile, args.seed);
    if let Some(p) = args.failure_p {
        if !(0.0..=1.0).contains(&p) {
            bail!("--failure-p must lie in [0, 1]");
        }
        config.failure_p = p;
    }
    config.backend = backend;
    config.disabled = disabled;
    config.wipe_between_passes = wipe;
    config.passes = args.passes;
    Ok(config)
}

fn parse_disabled(list: &str) -> Result<Disabled> {
    Disabled::parse(list).map_err(anyhow::Error::msg)
}

fn run_suite(suite: &[TaskSpec], config: &EvalConfig, gateway: Gateway) -> Result<SuiteRun> {
    run_lifelong(suite, config, Arc::new(gateway), Arc::new(HashEmbedder::default()))
        .context("running suite")
}

/// Every task on its own thread with its own memory; passes are merged.
fn run_isolated(suite: &[TaskSpec], config: &EvalConfig, args: &SuiteArgs) -> Result<SuiteRun> {
    let runs: Vec<Result<SuiteRun>> = thread::scope(|s| {
        let handles: Vec<_> = suite
            .iter()
            .map(|task| {
                s.spawn(move || {
                    let (_, gateway) = build_gateway(args)?;
                    run_suite(std::slice::from_ref(task), config, gateway)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| bail!("task thread panicked")))
            .collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;

    let mut passes = Vec::new();
    for pass in 1..=config.passes {
        let results: Vec<_> = runs
            .iter()
            .flat_map(|r| r.report.passes[pass as usize - 1].results.clone())
            .collect();
        let (sr, gc) = compute_metrics(&results)?;
        passes.push(PassReport { pass, results, sr, gc });
    }
    let all: Vec<_> = passes.iter().flat_map(|p| p.results.clone()).collect();
    let (sr, gc) = compute_metrics(&all)?;
    let first = &runs[0].report;
    Ok(SuiteRun {
        report: SuiteReport {
            passes,
            sr,
            gc,
            latency: None,
            ..first.clone()
        },
        trajectory: runs.iter().flat_map(|r| r.trajectory.clone()).collect(),
        snapshots: Vec::new(),
    })
}

fn write_run(out: &Path, run: &SuiteRun) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let write = |name: &str, body: String| {
        let path = out.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
    };
    write("report.json", to_canonical_json(&run.report) + "\n")?;
    write("report.txt", run.report.render_table())?;
    let mut lines = String::new();
    for rec in &run.trajectory {
        lines.push_str(&to_canonical_json(rec));
        lines.push('\n');
    }
    write("trajectory.jsonl", lines)?;
    for (i, snap) in run.snapshots.iter().enumerate() {
        write(&format!("memory_pass{}.json", i + 1), to_canonical_json(snap) + "\n")?;
    }
    Ok(())
}

fn finish(run: &SuiteRun, out: Option<&Path>) -> Result<()> {
    print!("{}", run.report.render_table());
    if let Some(dir) = out {
        write_run(dir, run)?;
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let suite = read_suite(args.suite.suite.as_deref())?;
    let disabled = parse_disabled(&args.disable)?;
    let (backend, mut gateway) = build_gateway(&args.suite)?;
    let config = eval_config(&args.suite, backend, disabled, args.wipe_between_passes)?;
    let run = if args.parallel_tasks {
        if args.transcript.is_some() {
            bail!("--transcript cannot be combined with --parallel-tasks");
        }
        run_isolated(&suite, &config, &args.suite)?
    } else {
        if let Some(path) = &args.transcript {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            gateway = gateway.with_transcript(Box::new(BufWriter::new(file)));
        }
        run_suite(&suite, &config, gateway)?
    };
    finish(&run, args.out.as_deref())
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    if args.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let suite = read_suite(args.suite.suite.as_deref())?;
    let mut configs = vec![Disabled::none()];
    for entry in args.disable.split(';').filter(|e| !e.trim().is_empty()) {
        configs.push(parse_disabled(entry)?);
    }

    let mut reports = Vec::new();
    println!("{:<24} {:>8} {:>8} {:>8} {:>8}", "configuration", "sr", "gc", "pass1", "pass2");
    for disabled in configs {
        let (mut sr, mut gc, mut p1, mut p2) = (0.0, 0.0, 0.0, 0.0);
        for seed in args.suite.seed..args.suite.seed + args.seeds {
            let (backend, gateway) = build_gateway(&args.suite)?;
            let seeded = SuiteArgs { seed, ..args.suite.clone() };
            let config = eval_config(&seeded, backend, disabled, false)?;
            let report = run_suite(&suite, &config, gateway)?.report;
            sr += report.sr;
            gc += report.gc;
            p1 += report.pass_sr(1).unwrap_or(0.0);
            p2 += report.pass_sr(config.passes).unwrap_or(0.0);
            reports.push(report);
        }
        let n = args.seeds as f64;
        let names = disabled.names();
        let label = if names.is_empty() { "full".to_string() } else { format!("w/o {}", names.join("+")) };
        println!("{label:<24} {:>8.3} {:>8.3} {:>8.3} {:>8.3}", sr / n, gc / n, p1 / n, p2 / n);
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("ablation.json");
        fs::write(&path, to_canonical_json(&reports) + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    if args.repetitions == 0 {
        bail!("--repetitions must be at least 1");
    }
    let table = bench_latency(ModuleDelays::uniform(Duration::from_millis(args.delay_ms)), args.repetitions);
    print!("{}", table.render_table());
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("latency.json");
        fs::write(&path, to_canonical_json(&table) + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_replay(args: ReplayArgs) -> Result<()> {
    let suite = read_suite(args.suite.suite.as_deref())?;
    let text = fs::read_to_string(&args.transcript)
        .with_context(|| format!("reading {}", args.transcript.display()))?;
    let backend = ReplayBackend::from_transcript(&text).context("loading transcript")?;
    let gateway = Gateway::new(Arc::new(backend));
    let disabled = parse_disabled(&args.disable)?;
    let config = eval_config(&args.suite, "replay".into(), disabled, args.wipe_between_passes)?;
    let run = run_suite(&suite, &config, gateway)?;
    finish(&run, args.out.as_deref())
}

fn cmd_snapshot(args: SnapshotArgs) -> Result<()> {
    let text = fs::read_to_string(&args.file).with_context(|| format!("reading {}", args.file.display()))?;
    let snap: MemorySnapshot = from_canonical_json(&text).context("invalid memory snapshot")?;
    let memory = Orchestrator::new(OrchestratorConfig::default(), Arc::new(HashEmbedder::default()), None);
    memory.restore(snap.clone()).context("restoring memory snapshot")?;
    if args.dot {
        print!("{}", memory.with_spatial(|s| s.to_dot()));
        return Ok(());
    }
    println!("spatial nodes      {}", snap.spatial.graph.nodes.len());
    println!("spatial edges      {}", snap.spatial.graph.edges.len());
    println!("spatial pending    {}", snap.spatial.pending.len());
    println!("temporal entries   {}", memory.with_temporal(|t| t.len()));
    println!("episodic entities  {}", memory.episodic_len());
    println!("semantic entities  {}", memory.semantic_len());
    Ok(())
}
