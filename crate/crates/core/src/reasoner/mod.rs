//! One gateway for every language-model-backed role.
//!
//! Callers build a JSON payload for a [`Role`], the [`Gateway`] checks it
//! against the role's request schema, forwards it to a [`Backend`], and
//! checks the reply against the role's response schema before handing it
//! back. The [`OracleBackend`] answers every role with deterministic rules;
//! [`RemoteBackend`] talks to a chat-completions endpoint.

mod oracle;
mod policy;
mod remote;
pub mod schema;

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use oracle::{compaction_summary, memory_query, step_summary, OracleBackend};
pub use policy::{Belief, OraclePolicy};
pub use remote::{RemoteBackend, RemoteConfig};

use crate::model::canonical_value;

pub const DEFAULT_CALL_BUDGET: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    StepSummarizer,
    QueryGenerator,
    KgConflictDetector,
    MemoryExtractor,
    MemoryUpdater,
    Planner,
    Critic,
}

impl Role {
    pub const ALL: [Role; 7] = [
        Role::StepSummarizer,
        Role::QueryGenerator,
        Role::KgConflictDetector,
        Role::MemoryExtractor,
        Role::MemoryUpdater,
        Role::Planner,
        Role::Critic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::StepSummarizer => "step_summarizer",
            Role::QueryGenerator => "query_generator",
            Role::KgConflictDetector => "kg_conflict_detector",
            Role::MemoryExtractor => "memory_extractor",
            Role::MemoryUpdater => "memory_updater",
            Role::Planner => "planner",
            Role::Critic => "critic",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReasonerError {
    #[error("invalid {role} request: {detail}")]
    InvalidRequest { role: Role, detail: String },
    #[error("{role} response failed schema validation: {detail}")]
    SchemaViolation { role: Role, detail: String },
    #[error("backend unreachable: {0}")]
    BackendUnreachable(String),
    #[error("per-episode call budget of {cap} exhausted")]
    BudgetExceeded { cap: usize },
}

pub trait Backend: Send + Sync {
    fn call(&self, role: Role, payload: &Value) -> Result<Value, ReasonerError>;
}

/// Wraps a backend and sleeps before every call. Used for latency tests and
/// benchmarks.
pub struct DelayedBackend<B> {
    inner: B,
    delay: Duration,
}

impl<B: Backend> DelayedBackend<B> {
    pub fn new(inner: B, delay: Duration) -> Self {
        DelayedBackend { inner, delay }
    }
}

impl<B: Backend> Backend for DelayedBackend<B> {
    fn call(&self, role: Role, payload: &Value) -> Result<Value, ReasonerError> {
        thread::sleep(self.delay);
        self.inner.call(role, payload)
    }
}

/// Serves responses recorded in a JSON-lines transcript, keyed by role and
/// canonical payload.
pub struct ReplayBackend {
    responses: HashMap<(Role, String), Value>,
}

impl ReplayBackend {
    pub fn from_transcript(jsonl: &str) -> Result<Self, ReasonerError> {
        let mut responses = HashMap::new();
        for (i, line) in jsonl.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rec: TranscriptRecord = serde_json::from_str(line).map_err(|e| {
                ReasonerError::BackendUnreachable(format!("transcript line {}: {e}", i + 1))
            })?;
            responses.insert((rec.role, canonical_value(&rec.request)), rec.response);
        }
        Ok(ReplayBackend { responses })
    }
}

impl Backend for ReplayBackend {
    fn call(&self, role: Role, payload: &Value) -> Result<Value, ReasonerError> {
        self.responses
            .get(&(role, canonical_value(payload)))
            .cloned()
            .ok_or_else(|| {
                ReasonerError::BackendUnreachable(format!("no recorded {role} response"))
            })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub role: Role,
    pub request: Value,
    pub response: Value,
}

pub struct Gateway {
    backend: Arc<dyn Backend>,
    budget: Option<usize>,
    used: AtomicUsize,
    transcript: Option<Mutex<Box<dyn Write + Send>>>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Gateway {
            backend,
            budget: Some(DEFAULT_CALL_BUDGET),
            used: AtomicUsize::new(0),
            transcript: None,
        }
    }

    pub fn oracle() -> Self {
        Gateway::new(Arc::new(OracleBackend::default()))
    }

    /// Per-episode call cap; `None` disables it.
    pub fn with_budget(mut self, budget: Option<usize>) -> Self {
        self.budget = budget;
        self
    }

    /// Append every successful exchange to `sink` as JSON lines.
    pub fn with_transcript(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.transcript = Some(Mutex::new(sink));
        self
    }

    pub fn calls_used(&self) -> usize {
        self.used.load(Ordering::SeqCst)
    }

    /// Start a new episode's call budget.
    pub fn reset_budget(&self) {
        self.used.store(0, Ordering::SeqCst);
    }

    pub fn invoke(&self, role: Role, payload: &Value) -> Result<Value, ReasonerError> {
        schema::check_request(role, payload)?;
        let used = self.used.fetch_add(1, Ordering::SeqCst) + 1;
        if let Some(cap) = self.budget {
            if used > cap {
                return Err(ReasonerError::BudgetExceeded { cap });
            }
        }
        let response = self.backend.call(role, payload)?;
        schema::check_response(role, &response)?;
        if let Some(sink) = &self.transcript {
            let rec = json!({"role": role, "request": payload, "response": response});
            let mut sink = sink.lock().expect("transcript lock");
            if let Err(e) = writeln!(sink, "{}", canonical_value(&rec)) {
                log::warn!("transcript write failed: {e}");
            }
        }
        Ok(response)
    }

    /// Run requests concurrently; results keep the request order and each
    /// entry fails independently.
    pub fn invoke_parallel(&self, requests: &[(Role, Value)]) -> Vec<Result<Value, ReasonerError>> {
        if requests.len() <= 1 {
            return requests.iter().map(|(r, p)| self.invoke(*r, p)).collect();
        }
        thread::scope(|scope| {
            let handles: Vec<_> = requests
                .iter()
                .map(|(role, payload)| scope.spawn(move || self.invoke(*role, payload)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("reasoner worker panicked"))
                .collect()
        })
    }
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("budget", &self.budget)
            .field("used", &self.calls_used())
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Instant;

    fn summarize(target: &str) -> Value {
        json!({"action": {"verb": "pick_up", "target": target}, "outcome": "success"})
    }

    #[test]
    fn oracle_summary_template() {
        let gw = Gateway::oracle();
        let out = gw.invoke(Role::StepSummarizer, &summarize("apple")).unwrap();
        assert_eq!(out, json!({"summary": "picked up apple: success"}));
    }

    #[test]
    fn oracle_is_pure() {
        let gw = Gateway::oracle();
        let a = canonical_value(&gw.invoke(Role::StepSummarizer, &summarize("apple")).unwrap());
        let b = canonical_value(&gw.invoke(Role::StepSummarizer, &summarize("apple")).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_request_rejected_before_backend() {
        let gw = Gateway::oracle();
        let err = gw.invoke(Role::StepSummarizer, &json!({"foo": 1})).unwrap_err();
        assert!(matches!(err, ReasonerError::InvalidRequest { .. }));
        assert_eq!(gw.calls_used(), 0);
    }

    #[test]
    fn parallel_matches_sequential_and_isolates_errors() {
        let gw = Gateway::oracle();
        let reqs = vec![
            (Role::StepSummarizer, summarize("apple")),
            (Role::StepSummarizer, json!({"bogus": true})),
            (Role::StepSummarizer, summarize("cup")),
        ];
        let out = gw.invoke_parallel(&reqs);
        assert_eq!(out[0], gw.invoke(reqs[0].0, &reqs[0].1));
        assert!(out[1].is_err());
        assert_eq!(out[2], gw.invoke(reqs[2].0, &reqs[2].1));
    }

    #[test]
    fn budget_caps_calls() {
        let gw = Gateway::oracle().with_budget(Some(2));
        assert!(gw.invoke(Role::StepSummarizer, &summarize("a")).is_ok());
        assert!(gw.invoke(Role::StepSummarizer, &summarize("b")).is_ok());
        assert_eq!(
            gw.invoke(Role::StepSummarizer, &summarize("c")).unwrap_err(),
            ReasonerError::BudgetExceeded { cap: 2 }
        );
        gw.reset_budget();
        assert!(gw.invoke(Role::StepSummarizer, &summarize("c")).is_ok());
    }

    #[test]
    fn parallel_latency_is_max_not_sum() {
        for n in [2usize, 4, 8] {
            let backend = DelayedBackend::new(OracleBackend::default(), Duration::from_millis(100));
            let gw = Gateway::new(Arc::new(backend));
            let reqs: Vec<_> = (0..n)
                .map(|i| (Role::StepSummarizer, summarize(&format!("obj{i}"))))
                .collect();
            let start = Instant::now();
            let out = gw.invoke_parallel(&reqs);
            let elapsed = start.elapsed();
            assert!(out.iter().all(Result::is_ok));
            assert!(elapsed < Duration::from_millis(250), "n={n}: {elapsed:?}");
        }
    }

    #[test]
    fn transcript_replays() {
        #[derive(Clone, Default)]
        struct Shared(Arc<Mutex<Vec<u8>>>);
        impl Write for Shared {
            fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
                self.0.lock().unwrap().extend_from_slice(buf);
                Ok(buf.len())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let sink = Shared::default();
        let gw = Gateway::oracle().with_transcript(Box::new(sink.clone()));
        let live = gw.invoke(Role::StepSummarizer, &summarize("apple")).unwrap();
        let text = String::from_utf8(sink.0.lock().unwrap().clone()).unwrap();
        let replay = Gateway::new(Arc::new(ReplayBackend::from_transcript(&text).unwrap()));
        assert_eq!(replay.invoke(Role::StepSummarizer, &summarize("apple")).unwrap(), live);
        assert!(replay.invoke(Role::StepSummarizer, &summarize("cup")).is_err());
    }
}
