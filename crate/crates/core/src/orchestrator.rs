//! Unified fan-out over the four memory modules.
//!
//! Each module sits behind its own lock, so updates to one module are
//! serialized while different modules proceed concurrently. Action-level
//! events reach spatial, temporal and semantic buffering; task-level events
//! reach the two long-term stores. Retrieval fans out the same way and
//! assembles the planner context.
//!
//! A per-module synthetic delay can be injected into every branch, and a
//! sequential mode runs the branches one after another in a fixed order;
//! both exist to measure latency and to check that the final state does
//! not depend on the schedule.

use std::sync::{Arc, RwLock};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::lifelong::{
    extract_task_entities, MemoryKind, MemoryStore, RecallConfig, Recalled, SemanticMemory, SemanticSnapshot,
    StoreSnapshot, TaskTrace,
};
use crate::model::{ModelError, StepRecord, Validate};
use crate::reasoner::Gateway;
use crate::spatial::{SpatialConfig, SpatialMemory, SpatialSnapshot, Triplet};
use crate::temporal::{TemporalMemory, TemporalSnapshot, DEFAULT_CAPACITY};
use crate::vector::Embedder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Module {
    Spatial,
    Temporal,
    Episodic,
    Semantic,
}

impl Module {
    pub const ALL: [Module; 4] = [Module::Spatial, Module::Temporal, Module::Episodic, Module::Semantic];

    pub fn as_str(self) -> &'static str {
        match self {
            Module::Spatial => "spatial",
            Module::Temporal => "temporal",
            Module::Episodic => "episodic",
            Module::Semantic => "semantic",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispatchMode {
    #[default]
    Parallel,
    Sequential,
}

/// Synthetic latency added to every branch touching a module.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ModuleDelays {
    pub spatial: Duration,
    pub temporal: Duration,
    pub episodic: Duration,
    pub semantic: Duration,
}

impl ModuleDelays {
    pub fn uniform(d: Duration) -> Self {
        ModuleDelays {
            spatial: d,
            temporal: d,
            episodic: d,
            semantic: d,
        }
    }

    pub fn of(&self, m: Module) -> Duration {
        match m {
            Module::Spatial => self.spatial,
            Module::Temporal => self.temporal,
            Module::Episodic => self.episodic,
            Module::Semantic => self.semantic,
        }
    }
}

/// Components replaced by inert stand-ins.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Disabled {
    #[serde(default)]
    pub critic: bool,
    #[serde(default)]
    pub spatial: bool,
    #[serde(default)]
    pub longterm: bool,
}

impl Disabled {
    pub fn none() -> Self {
        Disabled::default()
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.critic {
            v.push("critic");
        }
        if self.spatial {
            v.push("spatial");
        }
        if self.longterm {
            v.push("longterm");
        }
        v
    }

    /// Parse a comma-separated list such as `critic,spatial`.
    pub fn parse(list: &str) -> Result<Self, String> {
        let mut d = Disabled::default();
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "critic" => d.critic = true,
                "spatial" => d.spatial = true,
                "longterm" => d.longterm = true,
                other => return Err(format!("unknown component `{other}`")),
            }
        }
        Ok(d)
    }
}

#[derive(Debug, Clone)]
pub struct OrchestratorConfig {
    pub spatial: SpatialConfig,
    pub temporal_capacity: usize,
    pub recall: RecallConfig,
    pub mode: DispatchMode,
    pub delays: ModuleDelays,
    pub disabled: Disabled,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        OrchestratorConfig {
            spatial: SpatialConfig::default(),
            temporal_capacity: DEFAULT_CAPACITY,
            recall: RecallConfig::default(),
            mode: DispatchMode::Parallel,
            delays: ModuleDelays::default(),
            disabled: Disabled::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum UpdateEvent {
    /// One executed step, or the initial observation when `step` is `None`.
    Action {
        step: Option<StepRecord>,
        triplets: Vec<Triplet>,
    },
    Task { trace: TaskTrace },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DispatchReport {
    /// Module failures; siblings still ran.
    pub errors: Vec<(Module, String)>,
    pub integrations: usize,
    pub latency: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryContext {
    pub spatial: String,
    pub temporal: String,
    pub episodic: Vec<Recalled>,
    pub semantic: Vec<Recalled>,
    pub assembly_latency: Duration,
}

impl MemoryContext {
    /// The context as it appears in planner and critic payloads.
    pub fn to_json(&self) -> Value {
        json!({
            "spatial": self.spatial,
            "temporal": self.temporal,
            "episodic": self.episodic.iter().map(Recalled::to_json).collect::<Vec<_>>(),
            "semantic": self.semantic.iter().map(Recalled::to_json).collect::<Vec<_>>(),
        })
    }

    pub fn is_empty(&self) -> bool {
        self.spatial.is_empty() && self.temporal.is_empty() && self.episodic.is_empty() && self.semantic.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorySnapshot {
    pub spatial: SpatialSnapshot,
    pub temporal: TemporalSnapshot,
    pub episodic: StoreSnapshot,
    pub semantic: SemanticSnapshot,
}

impl Validate for MemorySnapshot {
    fn validate(&self) -> Result<(), ModelError> {
        self.spatial.validate().map_err(|e| e.nested("spatial"))?;
        self.temporal.validate().map_err(|e| e.nested("temporal"))?;
        self.episodic.validate().map_err(|e| e.nested("episodic"))?;
        self.semantic.store.validate().map_err(|e| e.nested("semantic.store"))?;
        if self.episodic.kind != MemoryKind::Episodic || self.semantic.store.kind != MemoryKind::Semantic {
            return Err(ModelError::invariant("episodic", "store kinds are swapped"));
        }
        Ok(())
    }
}

type Branch<'a, T> = Box<dyn FnOnce() -> T + Send + 'a>;

/// Run branches under the given mode; results keep the branch order.
fn run_branches<'a, T: Send>(mode: DispatchMode, branches: Vec<Branch<'a, T>>) -> Vec<T> {
    match mode {
        DispatchMode::Sequential => branches.into_iter().map(|b| b()).collect(),
        DispatchMode::Parallel => thread::scope(|s| {
            let handles: Vec<_> = branches.into_iter().map(|b| s.spawn(b)).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("memory branch panicked"))
                .collect()
        }),
    }
}

fn pause(d: Duration) {
    if !d.is_zero() {
        thread::sleep(d);
    }
}

pub struct Orchestrator {
    config: OrchestratorConfig,
    spatial: RwLock<SpatialMemory>,
    temporal: RwLock<TemporalMemory>,
    episodic: RwLock<MemoryStore>,
    semantic: RwLock<SemanticMemory>,
    embedder: Arc<dyn Embedder>,
    gateway: Option<Arc<Gateway>>,
}

impl std::fmt::Debug for Orchestrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Orchestrator")
            .field("mode", &self.config.mode)
            .field("disabled", &self.config.disabled)
            .finish_non_exhaustive()
    }
}

impl Orchestrator {
    /// Memory wired to `gateway` for conflict detection, compaction,
    /// extraction and updating; `None` uses local fallbacks everywhere.
    pub fn new(config: OrchestratorConfig, embedder: Arc<dyn Embedder>, gateway: Option<Arc<Gateway>>) -> Self {
        let mut spatial = SpatialMemory::new(config.spatial.clone(), embedder.clone());
        let mut temporal = TemporalMemory::new(config.temporal_capacity);
        if let Some(gw) = &gateway {
            spatial = spatial.with_detector(gw.clone());
            temporal = temporal.with_summarizer(gw.clone());
        }
        let dim = embedder.dim();
        Orchestrator {
            spatial: RwLock::new(spatial),
            temporal: RwLock::new(temporal),
            episodic: RwLock::new(MemoryStore::new(MemoryKind::Episodic, dim)),
            semantic: RwLock::new(SemanticMemory::new(dim)),
            embedder,
            gateway,
            config,
        }
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.config
    }

    pub fn set_mode(&mut self, mode: DispatchMode) {
        self.config.mode = mode;
    }

    pub fn set_delays(&mut self, delays: ModuleDelays) {
        self.config.delays = delays;
    }

    pub fn disabled(&self) -> Disabled {
        self.config.disabled
    }

    /// Short-term memories start empty for every task.
    pub fn begin_task(&self) {
        self.spatial.write().expect("spatial lock").reset();
        self.temporal.write().expect("temporal lock").clear();
    }

    pub fn wipe_longterm(&self) {
        self.episodic.write().expect("episodic lock").clear();
        self.semantic.write().expect("semantic lock").clear();
    }

    pub fn episodic_len(&self) -> usize {
        self.episodic.read().expect("episodic lock").len()
    }

    pub fn semantic_len(&self) -> usize {
        self.semantic.read().expect("semantic lock").store.len()
    }

    pub fn with_spatial<T>(&self, f: impl FnOnce(&SpatialMemory) -> T) -> T {
        f(&self.spatial.read().expect("spatial lock"))
    }

    pub fn with_temporal<T>(&self, f: impl FnOnce(&TemporalMemory) -> T) -> T {
        f(&self.temporal.read().expect("temporal lock"))
    }

    pub fn with_episodic<T>(&self, f: impl FnOnce(&MemoryStore) -> T) -> T {
        f(&self.episodic.read().expect("episodic lock"))
    }

    pub fn with_semantic<T>(&self, f: impl FnOnce(&SemanticMemory) -> T) -> T {
        f(&self.semantic.read().expect("semantic lock"))
    }

    pub fn dispatch_update(&self, event: &UpdateEvent) -> DispatchReport {
        let start = Instant::now();
        let mode = self.config.mode;
        let delays = self.config.delays;
        let disabled = self.config.disabled;
        let mut report = DispatchReport::default();

        type Out = (Module, Result<usize, String>);
        let results: Vec<Out> = match event {
            UpdateEvent::Action { step, triplets } => {
                let mut branches: Vec<Branch<Out>> = Vec::new();
                if !disabled.spatial {
                    branches.push(Box::new(move || {
                        pause(delays.spatial);
                        let mut s = self.spatial.write().expect("spatial lock");
                        let r = s
                            .buffer_triplets(triplets.clone())
                            .map(|reports| reports.len())
                            .map_err(|e| e.to_string());
                        (Module::Spatial, r)
                    }));
                }
                if let Some(step) = step {
                    branches.push(Box::new(move || {
                        pause(delays.temporal);
                        self.temporal
                            .write()
                            .expect("temporal lock")
                            .append(step.step_index, &step.summary);
                        (Module::Temporal, Ok(0))
                    }));
                    if !disabled.longterm {
                        branches.push(Box::new(move || {
                            pause(delays.semantic);
                            self.semantic
                                .write()
                                .expect("semantic lock")
                                .record_action_experience(step);
                            (Module::Semantic, Ok(0))
                        }));
                    }
                }
                run_branches(mode, branches)
            }
            UpdateEvent::Task { trace } => {
                if disabled.longterm {
                    Vec::new()
                } else {
                    let (episodic, semantic) = extract_task_entities(trace, self.gateway.as_deref());
                    let task_id = trace.task_id.as_str();
                    let recall = &self.config.recall;
                    let embedder = self.embedder.as_ref();
                    let updater = self.gateway.as_deref();
                    let branches: Vec<Branch<Out>> = vec![
                        Box::new(move || {
                            pause(delays.episodic);
                            let r = self
                                .episodic
                                .write()
                                .expect("episodic lock")
                                .consolidate(&episodic, task_id, recall, embedder, updater)
                                .map(|_| 0)
                                .map_err(|e| e.to_string());
                            (Module::Episodic, r)
                        }),
                        Box::new(move || {
                            pause(delays.semantic);
                            let mut sem = self.semantic.write().expect("semantic lock");
                            let mut candidates = semantic;
                            candidates.extend(sem.take_pending());
                            let r = sem
                                .store
                                .consolidate(&candidates, task_id, recall, embedder, updater)
                                .map(|_| 0)
                                .map_err(|e| e.to_string());
                            (Module::Semantic, r)
                        }),
                    ];
                    run_branches(mode, branches)
                }
            }
        };
        for (module, r) in results {
            match r {
                Ok(n) => report.integrations += n,
                Err(e) => {
                    log::error!("{} update failed: {e}", module.as_str());
                    report.errors.push((module, e));
                }
            }
        }
        report.latency = start.elapsed();
        report
    }

    /// Retrieve from all four modules for query `q`.
    pub fn gather_context(&self, query: &str) -> MemoryContext {
        let start = Instant::now();
        let delays = self.config.delays;
        let disabled = self.config.disabled;
        let recall = &self.config.recall;
        let embedder = self.embedder.as_ref();
        let hops = self.config.spatial.hops;

        enum Section {
            Text(String),
            Items(Vec<Recalled>),
        }
        let branches: Vec<Branch<Section>> = vec![
            Box::new(move || {
                pause(delays.spatial);
                if disabled.spatial {
                    return Section::Text(String::new());
                }
                Section::Text(self.spatial.write().expect("spatial lock").query(query, hops))
            }),
            Box::new(move || {
                pause(delays.temporal);
                Section::Text(self.temporal.read().expect("temporal lock").render())
            }),
            Box::new(move || {
                pause(delays.episodic);
                if disabled.longterm {
                    return Section::Items(Vec::new());
                }
                let store = self.episodic.read().expect("episodic lock");
                Section::Items(
                    store
                        .retrieve(query, recall.recall_k, recall.recall_theta, embedder)
                        .unwrap_or_else(|e| {
                            log::error!("episodic retrieval failed: {e}");
                            Vec::new()
                        }),
                )
            }),
            Box::new(move || {
                pause(delays.semantic);
                if disabled.longterm {
                    return Section::Items(Vec::new());
                }
                let sem = self.semantic.read().expect("semantic lock");
                Section::Items(
                    sem.store
                        .retrieve(query, recall.recall_k, recall.recall_theta, embedder)
                        .unwrap_or_else(|e| {
                            log::error!("semantic retrieval failed: {e}");
                            Vec::new()
                        }),
                )
            }),
        ];
        let mut out = run_branches(self.config.mode, branches).into_iter();
        let mut text = || match out.next() {
            Some(Section::Text(t)) => t,
            _ => unreachable!("sections keep their order"),
        };
        let spatial = text();
        let temporal = text();
        let mut items = || match out.next() {
            Some(Section::Items(v)) => v,
            _ => unreachable!("sections keep their order"),
        };
        let episodic = items();
        let semantic = items();
        MemoryContext {
            spatial,
            temporal,
            episodic,
            semantic,
            assembly_latency: start.elapsed(),
        }
    }

    pub fn snapshot(&self) -> MemorySnapshot {
        MemorySnapshot {
            spatial: self.spatial.read().expect("spatial lock").snapshot(),
            temporal: self.temporal.read().expect("temporal lock").snapshot(),
            episodic: self.episodic.read().expect("episodic lock").snapshot(),
            semantic: self.semantic.read().expect("semantic lock").snapshot(),
        }
    }

    pub fn restore(&self, snap: MemorySnapshot) -> Result<(), ModelError> {
        snap.validate()?;
        let episodic = MemoryStore::from_snapshot(snap.episodic).map_err(|e| e.nested("episodic"))?;
        let semantic = SemanticMemory::from_snapshot(snap.semantic).map_err(|e| e.nested("semantic"))?;
        self.spatial
            .write()
            .expect("spatial lock")
            .restore(snap.spatial)
            .map_err(|e| e.nested("spatial"))?;
        self.temporal
            .write()
            .expect("temporal lock")
            .restore(snap.temporal)
            .map_err(|e| e.nested("temporal"))?;
        *self.episodic.write().expect("episodic lock") = episodic;
        *self.semantic.write().expect("semantic lock") = semantic;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ActionCommand, Outcome, Verb};
    use crate::vector::HashEmbedder;

    fn orch(mode: DispatchMode) -> Orchestrator {
        let config = OrchestratorConfig {
            mode,
            ..OrchestratorConfig::default()
        };
        Orchestrator::new(config, Arc::new(HashEmbedder::default()), Some(Arc::new(Gateway::oracle())))
    }

    fn step(i: u32) -> StepRecord {
        StepRecord {
            step_index: i,
            action: ActionCommand::on(Verb::NavigateTo, "sink"),
            summary: "navigated to sink: success".into(),
            outcome: Outcome::Success,
            failure_reason: None,
        }
    }

    #[test]
    fn empty_context() {
        let ctx = orch(DispatchMode::Parallel).gather_context("anything");
        assert!(ctx.is_empty());
    }

    #[test]
    fn action_event_touches_short_term_only() {
        let o = orch(DispatchMode::Parallel);
        let r = o.dispatch_update(&UpdateEvent::Action {
            step: Some(step(1)),
            triplets: vec![Triplet::observed("apple", "on", "kitchen_table", 1)],
        });
        assert!(r.errors.is_empty());
        assert_eq!(o.with_spatial(|s| s.pending().len()), 1);
        assert_eq!(o.with_temporal(|t| t.len()), 1);
        assert_eq!(o.episodic_len(), 0);
    }

    #[test]
    fn gather_is_repeatable() {
        let o = orch(DispatchMode::Parallel);
        for i in 1..=3 {
            o.dispatch_update(&UpdateEvent::Action {
                step: Some(step(i)),
                triplets: vec![Triplet::observed("agent", "at", "sink", i); 8],
            });
        }
        let a = o.gather_context("where is the agent");
        let b = o.gather_context("where is the agent");
        assert_eq!(a.to_json(), b.to_json());
        assert!(a.spatial.contains("agent at sink"));
    }

    #[test]
    fn parallel_gather_overlaps_delays() {
        let mut o = orch(DispatchMode::Parallel);
        o.set_delays(ModuleDelays::uniform(Duration::from_millis(40)));
        let ctx = o.gather_context("q");
        assert!(ctx.assembly_latency < Duration::from_millis(120), "{:?}", ctx.assembly_latency);
    }
}
