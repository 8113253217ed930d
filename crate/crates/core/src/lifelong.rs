//! Episodic and semantic long-term memory.
//!
//! Both stores share one pipeline: an extractor turns a finished task into
//! candidate entities, each candidate retrieves its most similar stored
//! entities of the same kind, and an updater decides whether to add it,
//! rewrite one of the old ones, or replace contradicted ones. Only the
//! retrieved neighbours can change.
//!
//! Semantic memory additionally collects action-level experience while a
//! task runs: failures become small entities that are consolidated with the
//! rest at task end; successes only bump per-verb tallies.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::model::{ModelError, Outcome, StepRecord, TaskResult, Validate};
use crate::reasoner::{Gateway, Role};
use crate::vector::{Embedder, IndexEntry, IndexError, VectorIndex};

#[derive(Debug, Error)]
pub enum LifelongError {
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("invalid update plan: {0}")]
    InvalidPlan(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryKind {
    Episodic,
    Semantic,
}

impl MemoryKind {
    fn prefix(self) -> &'static str {
        match self {
            MemoryKind::Episodic => "ep",
            MemoryKind::Semantic => "se",
        }
    }
}

/// One stored memory. Its embedding lives in the store's index under the
/// same id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEntity {
    pub id: String,
    pub kind: MemoryKind,
    pub text: String,
    pub tags: Vec<String>,
    pub created_task: String,
    pub updated_task: String,
    /// Consolidation ordinals; `updated_at >= created_at`.
    pub created_at: u64,
    pub updated_at: u64,
    pub occurrences: u64,
}

/// An entity proposed for storage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default = "one")]
    pub occurrences: u64,
}

fn one() -> u64 {
    1
}

impl Candidate {
    pub fn new(text: impl Into<String>, tags: &[&str]) -> Self {
        Candidate {
            text: text.into(),
            tags: tags.iter().map(|t| t.to_string()).collect(),
            occurrences: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityUpdate {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub occurrences: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdatePlan {
    #[serde(default)]
    pub adds: Vec<Candidate>,
    #[serde(default)]
    pub updates: Vec<EntityUpdate>,
    #[serde(default)]
    pub deletes: Vec<String>,
}

impl UpdatePlan {
    pub fn add_only(c: Candidate) -> Self {
        UpdatePlan {
            adds: vec![c],
            ..UpdatePlan::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recalled {
    pub entity: MemoryEntity,
    pub score: f64,
}

impl Recalled {
    pub fn to_json(&self) -> Value {
        json!({
            "id": self.entity.id,
            "text": self.entity.text,
            "tags": self.entity.tags,
            "score": self.score,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreSnapshot {
    pub kind: MemoryKind,
    pub counter: u64,
    pub clock: u64,
    pub entities: Vec<MemoryEntity>,
    pub index: VectorIndex,
}

impl Validate for StoreSnapshot {
    fn validate(&self) -> Result<(), ModelError> {
        self.index.validate().map_err(|e| e.nested("index"))?;
        for (i, e) in self.entities.iter().enumerate() {
            let path = format!("entities.{i}");
            if e.text.trim().is_empty() {
                return Err(ModelError::invariant(format!("{path}.text"), "text is empty"));
            }
            if e.kind != self.kind {
                return Err(ModelError::invariant(format!("{path}.kind"), "kind differs from store"));
            }
            if e.updated_at < e.created_at {
                return Err(ModelError::invariant(format!("{path}.updated_at"), "updated before created"));
            }
            if self.index.get(&e.id).is_none() {
                return Err(ModelError::invariant(format!("{path}.id"), "entity has no embedding"));
            }
        }
        if self.index.len() != self.entities.len() {
            return Err(ModelError::invariant("index", "index and entities differ in size"));
        }
        Ok(())
    }
}

/// Settings for consolidation and recall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallConfig {
    /// Neighbours retrieved per candidate during consolidation.
    pub consolidate_k: usize,
    /// Similarity a stored entity needs to count as a neighbour.
    pub theta: f64,
    pub recall_k: usize,
    /// Similarity a stored entity needs to be recalled for planning.
    pub recall_theta: f64,
}

impl Default for RecallConfig {
    fn default() -> Self {
        RecallConfig {
            consolidate_k: 5,
            theta: 0.8,
            recall_k: 3,
            recall_theta: 0.3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConsolidationReport {
    pub added: Vec<String>,
    pub updated: Vec<String>,
    pub deleted: Vec<String>,
    /// Candidates whose updater plan was rejected and stored add-only.
    pub fallbacks: usize,
}

/// One kind of long-term memory.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryStore {
    kind: MemoryKind,
    entities: BTreeMap<String, MemoryEntity>,
    index: VectorIndex,
    counter: u64,
    clock: u64,
}

impl MemoryStore {
    pub fn new(kind: MemoryKind, dim: usize) -> Self {
        MemoryStore {
            kind,
            entities: BTreeMap::new(),
            index: VectorIndex::new(dim),
            counter: 0,
            clock: 0,
        }
    }

    pub fn kind(&self) -> MemoryKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&MemoryEntity> {
        self.entities.get(id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &MemoryEntity> {
        self.entities.values()
    }

    pub fn clear(&mut self) {
        *self = MemoryStore::new(self.kind, self.index.dim());
    }

    /// Top-`k` entities with similarity at least `theta`.
    pub fn retrieve(
        &self,
        query: &str,
        k: usize,
        theta: f64,
        embedder: &dyn Embedder,
    ) -> Result<Vec<Recalled>, LifelongError> {
        if self.entities.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        let q = match embedder.embed(query) {
            Ok(q) => q,
            Err(IndexError::EmptyText) => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        Ok(self
            .index
            .search(&q, k, theta)?
            .into_iter()
            .map(|hit| Recalled {
                entity: self.entities[&hit.entry.id].clone(),
                score: hit.score,
            })
            .collect())
    }

    fn check_plan(&self, plan: &UpdatePlan, allowed: &BTreeSet<String>) -> Result<(), LifelongError> {
        let mut seen = BTreeSet::new();
        for id in plan.updates.iter().map(|u| &u.id).chain(&plan.deletes) {
            if !self.entities.contains_key(id) {
                return Err(LifelongError::InvalidPlan(format!("unknown id `{id}`")));
            }
            if !allowed.contains(id) {
                return Err(LifelongError::InvalidPlan(format!(
                    "`{id}` was not among the retrieved neighbours"
                )));
            }
            if !seen.insert(id) {
                return Err(LifelongError::InvalidPlan(format!("`{id}` appears twice")));
            }
        }
        if plan.adds.iter().any(|a| a.text.trim().is_empty())
            || plan.updates.iter().any(|u| u.text.trim().is_empty())
        {
            return Err(LifelongError::InvalidPlan("empty text".into()));
        }
        Ok(())
    }

    /// Apply a checked plan. Embeddings are computed up front so a failure
    /// leaves the store untouched.
    fn apply(
        &mut self,
        plan: &UpdatePlan,
        task_id: &str,
        embedder: &dyn Embedder,
        report: &mut ConsolidationReport,
    ) -> Result<(), LifelongError> {
        let add_emb = plan
            .adds
            .iter()
            .map(|a| embedder.embed(&a.text))
            .collect::<Result<Vec<_>, _>>()?;
        let upd_emb = plan
            .updates
            .iter()
            .map(|u| embedder.embed(&u.text))
            .collect::<Result<Vec<_>, _>>()?;
        self.clock += 1;
        let now = self.clock;
        for id in &plan.deletes {
            self.entities.remove(id);
            self.index.remove(id)?;
            report.deleted.push(id.clone());
        }
        for (u, emb) in plan.updates.iter().zip(upd_emb) {
            let e = self.entities.get_mut(&u.id).expect("checked id");
            e.text = u.text.clone();
            e.updated_task = task_id.to_string();
            e.updated_at = now;
            if let Some(n) = u.occurrences {
                e.occurrences = n;
            }
            self.index.upsert(IndexEntry {
                id: u.id.clone(),
                text: u.text.clone(),
                embedding: emb,
                payload: Value::Null,
            })?;
            report.updated.push(u.id.clone());
        }
        for (a, emb) in plan.adds.iter().zip(add_emb) {
            self.counter += 1;
            let id = format!("{}-{:05}", self.kind.prefix(), self.counter);
            self.entities.insert(
                id.clone(),
                MemoryEntity {
                    id: id.clone(),
                    kind: self.kind,
                    text: a.text.clone(),
                    tags: a.tags.clone(),
                    created_task: task_id.to_string(),
                    updated_task: task_id.to_string(),
                    created_at: now,
                    updated_at: now,
                    occurrences: a.occurrences.max(1),
                },
            );
            self.index.upsert(IndexEntry {
                id: id.clone(),
                text: a.text.clone(),
                embedding: emb,
                payload: Value::Null,
            })?;
            report.added.push(id);
        }
        Ok(())
    }

    /// Merge candidates one at a time: retrieve neighbours, ask the updater
    /// for a plan, apply it.
    pub fn consolidate(
        &mut self,
        candidates: &[Candidate],
        task_id: &str,
        config: &RecallConfig,
        embedder: &dyn Embedder,
        updater: Option<&Gateway>,
    ) -> Result<ConsolidationReport, LifelongError> {
        let mut report = ConsolidationReport::default();
        for c in candidates {
            let similar = self.retrieve(&c.text, config.consolidate_k, config.theta, embedder)?;
            let allowed: BTreeSet<String> = similar.iter().map(|r| r.entity.id.clone()).collect();
            let plan = match updater {
                Some(gw) => {
                    let payload = json!({
                        "new": c,
                        "similar": similar.iter().map(|r| json!({
                            "id": r.entity.id,
                            "text": r.entity.text,
                            "tags": r.entity.tags,
                            "occurrences": r.entity.occurrences,
                            "score": r.score,
                        })).collect::<Vec<_>>(),
                    });
                    gw.invoke(Role::MemoryUpdater, &payload)
                        .map_err(|e| LifelongError::InvalidPlan(e.to_string()))
                        .and_then(|v| {
                            serde_json::from_value::<UpdatePlan>(v)
                                .map_err(|e| LifelongError::InvalidPlan(e.to_string()))
                        })
                        .and_then(|p| self.check_plan(&p, &allowed).map(|_| p))
                }
                None => Ok(UpdatePlan::add_only(c.clone())),
            };
            let plan = plan.unwrap_or_else(|e| {
                log::warn!("memory updater plan rejected ({e}); storing add-only");
                report.fallbacks += 1;
                UpdatePlan::add_only(c.clone())
            });
            self.apply(&plan, task_id, embedder, &mut report)?;
        }
        Ok(report)
    }

    pub fn snapshot(&self) -> StoreSnapshot {
        StoreSnapshot {
            kind: self.kind,
            counter: self.counter,
            clock: self.clock,
            entities: self.entities.values().cloned().collect(),
            index: self.index.clone(),
        }
    }

    pub fn from_snapshot(snap: StoreSnapshot) -> Result<Self, ModelError> {
        snap.validate()?;
        Ok(MemoryStore {
            kind: snap.kind,
            entities: snap.entities.into_iter().map(|e| (e.id.clone(), e)).collect(),
            index: snap.index,
            counter: snap.counter,
            clock: snap.clock,
        })
    }
}

/// Semantic store plus action-level experience gathered during a task.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMemory {
    pub store: MemoryStore,
    pending: Vec<Candidate>,
    tallies: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticSnapshot {
    pub store: StoreSnapshot,
    pub pending: Vec<Candidate>,
    pub tallies: BTreeMap<String, u64>,
}

/// Lesson text for a failed action.
pub fn experience_text(verb: &str, reason: &str) -> String {
    match (verb, reason) {
        ("pick_up", "hands full") => "pick_up fails when already holding an object".into(),
        (_, "not holding anything") => format!("{verb} fails when the hand is empty"),
        (_, "executor_failure") => format!("{verb} can fail during execution; retry it"),
        _ => format!("{verb} fails when {reason}"),
    }
}

impl SemanticMemory {
    pub fn new(dim: usize) -> Self {
        SemanticMemory {
            store: MemoryStore::new(MemoryKind::Semantic, dim),
            pending: Vec::new(),
            tallies: BTreeMap::new(),
        }
    }

    pub fn pending(&self) -> &[Candidate] {
        &self.pending
    }

    pub fn tallies(&self) -> &BTreeMap<String, u64> {
        &self.tallies
    }

    /// Buffer a micro-entity for a failed step; count successes.
    pub fn record_action_experience(&mut self, step: &StepRecord) -> Option<Candidate> {
        let verb = step.action.verb.as_str();
        if step.outcome == Outcome::Success {
            *self.tallies.entry(verb.to_string()).or_default() += 1;
            return None;
        }
        let reason = step.failure_reason.as_deref().unwrap_or("unknown");
        let text = experience_text(verb, reason);
        if let Some(p) = self.pending.iter_mut().find(|p| p.text == text) {
            p.occurrences += 1;
            return Some(p.clone());
        }
        let c = Candidate {
            text,
            tags: vec![
                "experience".into(),
                format!("action:{verb}"),
                format!("reason:{reason}"),
            ],
            occurrences: 1,
        };
        self.pending.push(c.clone());
        Some(c)
    }

    pub fn take_pending(&mut self) -> Vec<Candidate> {
        std::mem::take(&mut self.pending)
    }

    pub fn clear(&mut self) {
        self.store.clear();
        self.pending.clear();
        self.tallies.clear();
    }

    pub fn snapshot(&self) -> SemanticSnapshot {
        SemanticSnapshot {
            store: self.store.snapshot(),
            pending: self.pending.clone(),
            tallies: self.tallies.clone(),
        }
    }

    pub fn from_snapshot(snap: SemanticSnapshot) -> Result<Self, ModelError> {
        Ok(SemanticMemory {
            store: MemoryStore::from_snapshot(snap.store).map_err(|e| e.nested("store"))?,
            pending: snap.pending,
            tallies: snap.tallies,
        })
    }
}

/// First sighting of an object during a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sighting {
    pub object: String,
    pub placement: String,
    pub location: String,
    pub step: u32,
}

/// Everything the extractor sees about a finished task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskTrace {
    pub task_id: String,
    pub instruction: String,
    pub result: TaskResult,
    pub steps: Vec<StepRecord>,
    pub sightings: Vec<Sighting>,
    /// Navigation points searched, in first-visit order.
    pub explored: Vec<String>,
}

/// Template entities used when the extractor role is unavailable.
pub fn fallback_entities(trace: &TaskTrace) -> (Vec<Candidate>, Vec<Candidate>) {
    let status = if trace.result.succeeded() { "success" } else { "failure" };
    let task_tag = format!("task:{}", trace.task_id);
    let text = format!(
        "task {} \"{}\": {status} after {} steps",
        trace.task_id,
        trace.instruction,
        trace.steps.len()
    );
    let outcome = format!("outcome:{status}");
    (
        vec![Candidate::new(text, &[&task_tag, &outcome, "episode"])],
        Vec::new(),
    )
}

fn parse_candidates(v: &Value) -> Result<Vec<Candidate>, serde_json::Error> {
    serde_json::from_value(v.clone())
}

/// Run the extractor role over a trace: `(episodic, semantic)` candidates.
pub fn extract_task_entities(trace: &TaskTrace, extractor: Option<&Gateway>) -> (Vec<Candidate>, Vec<Candidate>) {
    let Some(gw) = extractor else {
        return fallback_entities(trace);
    };
    let out = gw
        .invoke(Role::MemoryExtractor, &json!(trace))
        .map_err(|e| e.to_string())
        .and_then(|v| {
            let ep = parse_candidates(&v["episodic"]).map_err(|e| e.to_string())?;
            let se = parse_candidates(&v["semantic"]).map_err(|e| e.to_string())?;
            Ok((ep, se))
        });
    match out {
        Ok((ep, se)) if !ep.is_empty() => (ep, se),
        Ok(_) => {
            log::warn!("extractor returned no episodic entity; using templates");
            fallback_entities(trace)
        }
        Err(e) => {
            log::warn!("extractor failed ({e}); using templates");
            fallback_entities(trace)
        }
    }
}

/// Shared handles for the consolidation pipeline.
#[derive(Clone)]
pub struct LongTermContext {
    pub embedder: Arc<dyn Embedder>,
    pub gateway: Option<Arc<Gateway>>,
    pub config: RecallConfig,
}
