//! Rule-based stand-in for every reasoner role.
//!
//! Each role is a pure function of its payload: templates for summaries and
//! queries, the relation table for conflicts, fixed extraction templates for
//! long-term memories, tag rules for the memory updater, and the
//! [`OraclePolicy`](super::OraclePolicy) for planning and critique.

use serde::Deserialize;
use serde_json::{json, Value};

use super::policy::OraclePolicy;
use super::{Backend, ReasonerError, Role};
use crate::grammar::TaskGoal;
use crate::model::{ActionCommand, Outcome, StepRecord, TaskResult, TerminatedBy};
use crate::spatial::{ConflictRules, Triplet};

#[derive(Debug, Clone, Default)]
pub struct OracleBackend {
    policy: OraclePolicy,
}

impl OracleBackend {
    pub fn new(policy: OraclePolicy) -> Self {
        OracleBackend { policy }
    }
}

fn malformed(role: Role, e: impl std::fmt::Display) -> ReasonerError {
    ReasonerError::InvalidRequest {
        role,
        detail: e.to_string(),
    }
}

impl Backend for OracleBackend {
    fn call(&self, role: Role, payload: &Value) -> Result<Value, ReasonerError> {
        match role {
            Role::StepSummarizer => summarize(payload).map_err(|e| malformed(role, e)),
            Role::QueryGenerator => Ok(generate_query(payload)),
            Role::KgConflictDetector => detect_conflicts(payload).map_err(|e| malformed(role, e)),
            Role::MemoryExtractor => extract(payload).map_err(|e| malformed(role, e)),
            Role::MemoryUpdater => update(payload).map_err(|e| malformed(role, e)),
            Role::Planner => Ok(self.policy.plan(payload)),
            Role::Critic => Ok(self.policy.critique(payload)),
        }
    }
}

/// `"<verb phrase> <target>: <outcome>"`, with the failure reason appended.
pub fn step_summary(action: &ActionCommand, outcome: Outcome, reason: Option<&str>) -> String {
    let mut s = action.verb.past_tense().to_string();
    if let Some(t) = &action.target {
        s.push(' ');
        s.push_str(t);
    }
    s.push_str(": ");
    s.push_str(outcome.as_str());
    if let (Outcome::Failure, Some(r)) = (outcome, reason) {
        s.push_str(&format!(" ({r})"));
    }
    s
}

/// Condensed text for a run of temporal entries: only the count and the
/// most recent entry survive.
pub fn compaction_summary(entries: &[String], covers: (u64, u64)) -> String {
    let last = entries.last().map(String::as_str).unwrap_or("");
    let last = last.rsplit("last: ").next().unwrap_or(last);
    let n = covers.1.saturating_sub(covers.0) + 1;
    format!("{n} earlier actions; last: {last}")
}

fn summarize(payload: &Value) -> Result<Value, serde_json::Error> {
    if let Some(entries) = payload.get("entries") {
        let entries: Vec<String> = serde_json::from_value(entries.clone())?;
        let covers: (u64, u64) = serde_json::from_value(payload["covers"].clone())?;
        return Ok(json!({"summary": compaction_summary(&entries, covers)}));
    }
    let action: ActionCommand = serde_json::from_value(payload["action"].clone())?;
    let outcome: Outcome = serde_json::from_value(payload["outcome"].clone())?;
    let reason = payload.get("failure_reason").and_then(Value::as_str);
    Ok(json!({"summary": step_summary(&action, outcome, reason)}))
}

/// Long-term memory probe: instruction, last verb, visible entity names.
pub fn memory_query(instruction: &str, last_verb: Option<&str>, visible: &[String]) -> String {
    let mut q = instruction.trim().to_string();
    if let Some(v) = last_verb {
        q.push_str(&format!("; last action: {v}"));
    }
    if !visible.is_empty() {
        q.push_str(&format!("; visible: {}", visible.join(", ")));
    }
    q
}

fn generate_query(payload: &Value) -> Value {
    let instruction = payload["instruction"].as_str().unwrap_or_default();
    let last_verb = payload
        .get("last_action")
        .and_then(|a| a.get("verb"))
        .and_then(Value::as_str);
    let visible: Vec<String> = payload["visible"]
        .as_array()
        .map(|v| v.iter().filter_map(|s| s.as_str().map(String::from)).collect())
        .unwrap_or_default();
    let mut query = memory_query(instruction, last_verb, &visible);
    if query.is_empty() {
        query = "current task".into();
    }
    json!({"query": query})
}

fn detect_conflicts(payload: &Value) -> Result<Value, serde_json::Error> {
    let triplets: Vec<Triplet> = serde_json::from_value(payload["triplets"].clone())?;
    let rules: ConflictRules = match payload.get("rules") {
        Some(r) if !r.is_null() => serde_json::from_value(r.clone())?,
        _ => ConflictRules::default(),
    };
    let pairs: Vec<[usize; 2]> = rules
        .conflicting_pairs(&triplets)
        .into_iter()
        .map(|(i, j)| [i, j])
        .collect();
    Ok(json!({"conflicts": pairs}))
}

#[derive(Debug, Deserialize)]
struct Sighting {
    object: String,
    placement: String,
    location: String,
}

#[derive(Debug, Deserialize)]
struct ExtractRequest {
    task_id: String,
    instruction: String,
    result: TaskResult,
    steps: Vec<StepRecord>,
    sightings: Vec<Sighting>,
    explored: Vec<String>,
}

fn outcome_tag(result: &TaskResult) -> &'static str {
    if result.succeeded() {
        "outcome:success"
    } else {
        "outcome:failure"
    }
}

fn extract(payload: &Value) -> Result<Value, serde_json::Error> {
    let req: ExtractRequest = serde_json::from_value(payload.clone())?;
    let task_tag = format!("task:{}", req.task_id);
    let outcome = outcome_tag(&req.result);
    if req.steps.is_empty() {
        let text = format!(
            "task {} \"{}\": aborted before any action",
            req.task_id, req.instruction
        );
        return Ok(json!({
            "episodic": [{"text": text, "tags": [task_tag, outcome, "episode"]}],
            "semantic": [],
        }));
    }

    let goal = TaskGoal::parse(&req.instruction);
    let wanted: Vec<String> = match &goal {
        Some(g) => g.objects().into_iter().map(String::from).collect(),
        None => req.sightings.iter().map(|s| s.object.clone()).collect(),
    };
    let found: Vec<&Sighting> = wanted
        .iter()
        .filter_map(|w| req.sightings.iter().find(|s| &s.object == w))
        .collect();

    let status = if req.result.succeeded() { "success" } else { "failure" };
    let mut text = format!(
        "task {} \"{}\": {status} after {} steps ({}/{} conditions).",
        req.task_id,
        req.instruction,
        req.steps.len(),
        req.result.scn,
        req.result.gcn
    );
    if !found.is_empty() {
        let parts: Vec<String> = found
            .iter()
            .map(|s| format!("{} {} {}", s.object, s.placement, s.location))
            .collect();
        text.push_str(&format!(" found: {}.", parts.join(", ")));
    }
    if !req.explored.is_empty() {
        text.push_str(&format!(" explored: {}.", req.explored.join(", ")));
    }
    let mut tags = vec![task_tag.clone(), outcome.to_string(), "episode".to_string()];
    tags.extend(found.iter().map(|s| format!("object:{}", s.object)));
    let episodic = vec![json!({"text": text, "tags": tags})];

    let mut semantic = Vec::new();
    if req.result.succeeded() {
        let recipe: Vec<String> = req
            .steps
            .iter()
            .filter(|s| s.outcome == Outcome::Success)
            .map(|s| s.action.to_string())
            .collect();
        semantic.push(json!({
            "text": format!("recipe for \"{}\": {}", req.instruction, recipe.join(", ")),
            "tags": [task_tag, outcome, "recipe"],
        }));
    } else {
        let missing: Vec<&String> = wanted
            .iter()
            .filter(|w| !req.sightings.iter().any(|s| &s.object == *w))
            .collect();
        if let Some(obj) = missing.first().filter(|_| !req.explored.is_empty()) {
            semantic.push(json!({
                "text": format!(
                    "lesson for \"{}\": the {obj} was not found at {}; do not search those locations again",
                    req.instruction,
                    req.explored.join(", ")
                ),
                "tags": [task_tag, outcome, "lesson", format!("object:{obj}")],
            }));
        } else {
            let cause = match req.result.terminated_by {
                TerminatedBy::SelfTerminated => {
                    "task_complete was declared before every goal condition held"
                }
                _ => "the step budget ran out; go straight to known object locations",
            };
            semantic.push(json!({
                "text": format!("lesson for \"{}\": {cause}", req.instruction),
                "tags": [task_tag, outcome, "lesson"],
            }));
        }
    }
    Ok(json!({"episodic": episodic, "semantic": semantic}))
}

#[derive(Debug, Deserialize)]
struct NewEntity {
    text: String,
    tags: Vec<String>,
    #[serde(default = "one")]
    occurrences: u64,
}

#[derive(Debug, Deserialize)]
struct SimilarEntity {
    id: String,
    text: String,
    #[serde(default)]
    tags: Vec<String>,
    #[serde(default = "one")]
    occurrences: u64,
}

fn one() -> u64 {
    1
}

fn tag_with<'a>(tags: &'a [String], prefix: &str) -> Option<&'a str> {
    tags.iter().find(|t| t.starts_with(prefix)).map(String::as_str)
}

const CATEGORIES: [&str; 4] = ["episode", "recipe", "lesson", "experience"];

fn category(tags: &[String]) -> Option<&str> {
    tags.iter()
        .map(String::as_str)
        .find(|t| CATEGORIES.contains(t))
}

/// Subject key: the task an entity is about, or the action and failure
/// reason for action-level experience.
fn subject_key(tags: &[String]) -> Option<String> {
    if let Some(t) = tag_with(tags, "task:") {
        return Some(t.to_string());
    }
    match (tag_with(tags, "action:"), tag_with(tags, "reason:")) {
        (Some(a), Some(r)) => Some(format!("{a}|{r}")),
        (Some(a), None) => Some(a.to_string()),
        _ => None,
    }
}

fn update(payload: &Value) -> Result<Value, serde_json::Error> {
    let new: NewEntity = serde_json::from_value(payload["new"].clone())?;
    let similar: Vec<SimilarEntity> = serde_json::from_value(payload["similar"].clone())?;

    if let Some(dup) = similar.iter().find(|s| s.text == new.text) {
        return Ok(json!({
            "adds": [],
            "updates": [{"id": dup.id, "text": dup.text, "occurrences": dup.occurrences + new.occurrences}],
            "deletes": [],
        }));
    }

    let key = subject_key(&new.tags);
    let outcome = tag_with(&new.tags, "outcome:");
    let same_subject: Vec<&SimilarEntity> = similar
        .iter()
        .filter(|s| key.is_some() && subject_key(&s.tags) == key)
        .filter(|s| category(&s.tags).is_some() == category(&new.tags).is_some())
        .collect();

    let contradicted: Vec<&str> = same_subject
        .iter()
        .filter(|s| outcome.is_some() && tag_with(&s.tags, "outcome:").is_some())
        .filter(|s| tag_with(&s.tags, "outcome:") != outcome)
        .map(|s| s.id.as_str())
        .collect();
    let add = json!({"text": new.text, "tags": new.tags, "occurrences": new.occurrences});
    if !contradicted.is_empty() {
        return Ok(json!({"adds": [add], "updates": [], "deletes": contradicted}));
    }

    if let Some(prev) = same_subject
        .iter()
        .find(|s| category(&s.tags) == category(&new.tags))
    {
        return Ok(json!({
            "adds": [],
            "updates": [{"id": prev.id, "text": new.text, "occurrences": prev.occurrences + new.occurrences}],
            "deletes": [],
        }));
    }
    Ok(json!({"adds": [add], "updates": [], "deletes": []}))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Verb;

    #[test]
    fn summaries() {
        let a = ActionCommand::on(Verb::NavigateTo, "kitchen_counter");
        assert_eq!(
            step_summary(&a, Outcome::Success, None),
            "navigated to kitchen_counter: success"
        );
        let p = ActionCommand::on(Verb::PickUp, "apple");
        assert_eq!(
            step_summary(&p, Outcome::Failure, Some("hands full")),
            "picked up apple: failure (hands full)"
        );
        assert_eq!(
            step_summary(&ActionCommand::bare(Verb::TaskComplete), Outcome::Success, None),
            "declared the task complete: success"
        );
    }

    #[test]
    fn compaction_keeps_only_the_tail() {
        let entries = vec![
            "navigated to sink: success".to_string(),
            "navigated to fridge: success".to_string(),
            "opened fridge: success".to_string(),
        ];
        assert_eq!(
            compaction_summary(&entries, (1, 3)),
            "3 earlier actions; last: opened fridge: success"
        );
        let nested = vec!["3 earlier actions; last: opened fridge: success".to_string(), "x".into()];
        assert_eq!(compaction_summary(&nested, (1, 4)), "4 earlier actions; last: x");
    }

    #[test]
    fn updater_rules() {
        let dup = update(&json!({
            "new": {"text": "a", "tags": ["task:t1", "outcome:success", "episode"]},
            "similar": [{"id": "e1", "text": "a", "tags": [], "occurrences": 2}],
        }))
        .unwrap();
        assert_eq!(dup["updates"][0]["occurrences"], 3);

        let contra = update(&json!({
            "new": {"text": "b", "tags": ["task:t1", "outcome:success", "episode"]},
            "similar": [{"id": "e1", "text": "a", "tags": ["task:t1", "outcome:failure", "episode"]}],
        }))
        .unwrap();
        assert_eq!(contra["deletes"], json!(["e1"]));
        assert_eq!(contra["adds"].as_array().unwrap().len(), 1);

        let fresh = update(&json!({
            "new": {"text": "b", "tags": ["task:t2", "outcome:success", "episode"]},
            "similar": [{"id": "e1", "text": "a", "tags": ["task:t1", "outcome:failure", "episode"]}],
        }))
        .unwrap();
        assert_eq!(fresh["deletes"], json!([]));
        assert_eq!(fresh["updates"], json!([]));
    }
}
