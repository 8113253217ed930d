//! Suite runs, metrics, ablations and latency benchmarks.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Agent, AgentConfig, TrajectoryRecord};
use crate::model::{ActionCommand, Outcome, StepRecord, TaskResult, TerminatedBy, Verb};
use crate::orchestrator::{
    Disabled, DispatchMode, MemorySnapshot, ModuleDelays, Orchestrator, OrchestratorConfig, UpdateEvent,
};
use crate::reasoner::Gateway;
use crate::sim::{Profile, TaskSpec};
use crate::spatial::Triplet;
use crate::vector::{Embedder, HashEmbedder};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("no results to score")]
    EmptyResults,
    #[error("suite has no tasks")]
    EmptySuite,
}

/// Success rate and goal-condition rate.
pub fn compute_metrics(results: &[TaskResult]) -> Result<(f64, f64), EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let n = results.len() as f64;
    let sr = results.iter().filter(|r| r.scn == r.gcn).count() as f64 / n;
    let gc = results.iter().map(|r| r.scn as f64 / r.gcn as f64).sum::<f64>() / n;
    Ok((sr, gc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassReport {
    pub pass: u32,
    pub results: Vec<TaskResult>,
    pub sr: f64,
    pub gc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_gather_ms: f64,
    pub mean_dispatch_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub profile: Profile,
    pub seed: u64,
    pub backend: String,
    pub failure_p: f64,
    pub disabled: Vec<String>,
    pub wipe_between_passes: bool,
    pub passes: Vec<PassReport>,
    /// Over every episode of every pass.
    pub sr: f64,
    pub gc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency: Option<LatencyStats>,
}

impl SuiteReport {
    pub fn pass_sr(&self, pass: u32) -> Option<f64> {
        self.passes.iter().find(|p| p.pass == pass).map(|p| p.sr)
    }

    /// Human-readable summary table.
    pub fn render_table(&self) -> String {
        let mut out = format!(
            "profile {}  seed {}  backend {}  p={}  disabled [{}]{}\n",
            self.profile,
            self.seed,
            self.backend,
            self.failure_p,
            self.disabled.join(","),
            if self.wipe_between_passes { "  wiped between passes" } else { "" }
        );
        out.push_str("task  ");
        for p in &self.passes {
            out.push_str(&format!("| pass {:<2} scn/gcn steps end         ", p.pass));
        }
        out.push('\n');
        let n = self.passes.first().map_or(0, |p| p.results.len());
        for i in 0..n {
            out.push_str(&format!("{:<6}", self.passes[0].results[i].task_id));
            for p in &self.passes {
                let r = &p.results[i];
                out.push_str(&format!(
                    "| {:>7}   {}/{}   {:>5} {:<14}",
                    if r.succeeded() { "ok" } else { "fail" },
                    r.scn,
                    r.gcn,
                    r.steps_used,
                    format!("{:?}", r.terminated_by)
                ));
            }
            out.push('\n');
        }
        for p in &self.passes {
            out.push_str(&format!("pass {}: SR {:.3}  GC {:.3}\n", p.pass, p.sr, p.gc));
        }
        out.push_str(&format!("overall: SR {:.3}  GC {:.3}\n", self.sr, self.gc));
        if let Some(l) = &self.latency {
            out.push_str(&format!(
                "latency: gather {:.3} ms  dispatch {:.3} ms\n",
                l.mean_gather_ms, l.mean_dispatch_ms
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub profile: Profile,
    pub seed: u64,
    pub failure_p: f64,
    pub backend: String,
    pub disabled: Disabled,
    pub wipe_between_passes: bool,
    pub passes: u32,
    pub record_latency: bool,
    pub step_budget: Option<u32>,
}

impl EvalConfig {
    pub fn new(profile: Profile, seed: u64) -> Self {
        EvalConfig {
            profile,
            seed,
            failure_p: profile.default_failure_p(),
            backend: "oracle".into(),
            disabled: Disabled::default(),
            wipe_between_passes: false,
            passes: 2,
            record_latency: false,
            step_budget: None,
        }
    }
}

/// Everything a suite run produced.
#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub report: SuiteReport,
    pub trajectory: Vec<TrajectoryRecord>,
    /// Memory state after each pass.
    pub snapshots: Vec<MemorySnapshot>,
}

fn crashed(task: &TaskSpec) -> TaskResult {
    TaskResult {
        task_id: task.id.clone(),
        scn: 0,
        gcn: task.gcn(),
        steps_used: 0,
        terminated_by: TerminatedBy::Aborted,
    }
}

/// Run the suite `config.passes` times over one shared memory.
pub fn run_lifelong(
    suite: &[TaskSpec],
    config: &EvalConfig,
    gateway: Arc<Gateway>,
    embedder: Arc<dyn Embedder>,
) -> Result<SuiteRun, EvalError> {
    if suite.is_empty() {
        return Err(EvalError::EmptySuite);
    }
    let memory = Orchestrator::new(
        OrchestratorConfig {
            disabled: config.disabled,
            ..OrchestratorConfig::default()
        },
        embedder,
        Some(gateway.clone()),
    );
    let agent_config = AgentConfig {
        failure_p: config.failure_p,
        step_budget: config.step_budget,
        critic_enabled: !config.disabled.critic,
        record_latency: config.record_latency,
        ..AgentConfig::new(config.profile, config.seed)
    };
    let agent = Agent::new(gateway, &memory, agent_config);

    let mut passes = Vec::new();
    let mut trajectory = Vec::new();
    let mut snapshots = Vec::new();
    for pass in 1..=config.passes {
        if pass > 1 && config.wipe_between_passes {
            memory.wipe_longterm();
        }
        let mut results = Vec::new();
        for task in suite {
            match catch_unwind(AssertUnwindSafe(|| agent.run_episode(task, pass))) {
                Ok(ep) => {
                    results.push(ep.result);
                    trajectory.extend(ep.trajectory);
                }
                Err(_) => {
                    log::error!("episode {} crashed; recorded as a failure", task.id);
                    results.push(crashed(task));
                }
            }
        }
        let (sr, gc) = compute_metrics(&results)?;
        passes.push(PassReport { pass, results, sr, gc });
        snapshots.push(memory.snapshot());
    }
    let all: Vec<TaskResult> = passes.iter().flat_map(|p| p.results.clone()).collect();
    let (sr, gc) = compute_metrics(&all)?;
    let latency = config.record_latency.then(|| {
        let timed: Vec<_> = trajectory.iter().filter_map(|r| r.latency).collect();
        let n = timed.len().max(1) as f64;
        LatencyStats {
            mean_gather_ms: timed.iter().map(|l| l.gather_ms).sum::<f64>() / n,
            mean_dispatch_ms: timed.iter().map(|l| l.dispatch_ms).sum::<f64>() / n,
        }
    });
    Ok(SuiteRun {
        report: SuiteReport {
            schema_version: SCHEMA_VERSION,
            profile: config.profile,
            seed: config.seed,
            backend: config.backend.clone(),
            failure_p: config.failure_p,
            disabled: config.disabled.names().into_iter().map(String::from).collect(),
            wipe_between_passes: config.wipe_between_passes,
            passes,
            sr,
            gc,
            latency,
        },
        trajectory,
        snapshots,
    })
}

/// Lifelong run with some components replaced by inert stand-ins.
pub fn run_ablation(
    suite: &[TaskSpec],
    config: &EvalConfig,
    disabled: Disabled,
    gateway: Arc<Gateway>,
    embedder: Arc<dyn Embedder>,
) -> Result<SuiteRun, EvalError> {
    let config = EvalConfig {
        disabled,
        ..config.clone()
    };
    run_lifelong(suite, &config, gateway, embedder)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
}

impl TimingStats {
    pub fn from_samples(samples: &[Duration]) -> Self {
        let mut ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        ms.sort_by(f64::total_cmp);
        let pick = |q: f64| {
            if ms.is_empty() {
                0.0
            } else {
                ms[((ms.len() - 1) as f64 * q).round() as usize]
            }
        };
        TimingStats {
            mean_ms: ms.iter().sum::<f64>() / ms.len().max(1) as f64,
            p50_ms: pick(0.5),
            p95_ms: pick(0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub mode: DispatchMode,
    pub gather: TimingStats,
    pub dispatch: TimingStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyTable {
    pub delays_ms: [u64; 4],
    pub repetitions: usize,
    pub rows: Vec<LatencyRow>,
}

impl LatencyTable {
    pub fn row(&self, mode: DispatchMode) -> &LatencyRow {
        self.rows.iter().find(|r| r.mode == mode).expect("both modes measured")
    }

    pub fn render_table(&self) -> String {
        let d = self.delays_ms;
        let mut out = format!(
            "delays (ms): spatial {} temporal {} episodic {} semantic {}; {} repetitions\n",
            d[0], d[1], d[2], d[3], self.repetitions
        );
        out.push_str("mode        gather mean/p50/p95 (ms)      dispatch mean/p50/p95 (ms)\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<11} {:>7.1} {:>7.1} {:>7.1}        {:>7.1} {:>7.1} {:>7.1}\n",
                format!("{:?}", r.mode).to_lowercase(),
                r.gather.mean_ms,
                r.gather.p50_ms,
                r.gather.p95_ms,
                r.dispatch.mean_ms,
                r.dispatch.p50_ms,
                r.dispatch.p95_ms
            ));
        }
        out
    }
}

/// Time context assembly and action-level dispatch under both modes with
/// synthetic per-module delays.
pub fn bench_latency(delays: ModuleDelays, repetitions: usize) -> LatencyTable {
    let mut rows = Vec::new();
    for mode in [DispatchMode::Parallel, DispatchMode::Sequential] {
        let memory = Orchestrator::new(
            OrchestratorConfig {
                mode,
                delays,
                ..OrchestratorConfig::default()
            },
            Arc::new(HashEmbedder::default()),
            None,
        );
        let mut gathers = Vec::with_capacity(repetitions);
        let mut dispatches = Vec::with_capacity(repetitions);
        for i in 0..repetitions {
            let step = i as u32 + 1;
            let event = UpdateEvent::Action {
                step: Some(StepRecord {
                    step_index: step,
                    action: ActionCommand::on(Verb::NavigateTo, "sink"),
                    summary: "navigated to sink: success".into(),
                    outcome: Outcome::Success,
                    failure_reason: None,
                }),
                triplets: vec![Triplet::observed("agent", "at", "sink", step)],
            };
            let t = Instant::now();
            memory.dispatch_update(&event);
            dispatches.push(t.elapsed());
            gathers.push(memory.gather_context("where is the apple").assembly_latency);
        }
        rows.push(LatencyRow {
            mode,
            gather: TimingStats::from_samples(&gathers),
            dispatch: TimingStats::from_samples(&dispatches),
        });
    }
    let ms = |d: Duration| d.as_millis() as u64;
    LatencyTable {
        delays_ms: [ms(delays.spatial), ms(delays.temporal), ms(delays.episodic), ms(delays.semantic)],
        repetitions,
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(scn: u32, gcn: u32) -> TaskResult {
        TaskResult {
            task_id: "t".into(),
            scn,
            gcn,
            steps_used: 1,
            terminated_by: TerminatedBy::StepBudget,
        }
    }

    #[test]
    fn hand_values() {
        let (sr, gc) = compute_metrics(&[r(2, 4), r(3, 3)]).unwrap();
        assert!((sr - 0.5).abs() < 1e-12);
        assert!((gc - 0.75).abs() < 1e-12);
        assert_eq!(compute_metrics(&[]), Err(EvalError::EmptyResults));
    }

    #[test]
    fn percentiles() {
        let s: Vec<Duration> = (1..=100).map(Duration::from_millis).collect();
        let t = TimingStats::from_samples(&s);
        assert!((t.mean_ms - 50.5).abs() < 1e-9);
        assert!((t.p95_ms - 95.0).abs() < 1.0);
    }
}
