//! Shared domain types and canonical JSON encoding.
//!
//! Every document the system writes (snapshots, reports, trajectory logs)
//! goes through [`to_canonical_json`], which emits objects with
//! lexicographically sorted keys so that two equal values always produce the
//! same bytes. Reading goes through [`from_canonical_json`], which checks
//! type invariants after decoding and reports the offending field path.

use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("invariant violation at `{path}`: {message}")]
    InvariantViolation { path: String, message: String },
}

impl ModelError {
    pub fn invariant(path: impl Into<String>, message: impl Into<String>) -> Self {
        ModelError::InvariantViolation {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Prefix the field path of an invariant violation with `parent.`.
    pub fn nested(self, parent: &str) -> Self {
        match self {
            ModelError::InvariantViolation { path, message } => ModelError::InvariantViolation {
                path: format!("{parent}.{path}"),
                message,
            },
            other => other,
        }
    }
}

/// Types that carry invariants beyond what their serde shape enforces.
pub trait Validate {
    fn validate(&self) -> Result<(), ModelError>;
}

/// Canonical spelling of an object or navigation-point name: trimmed,
/// lower-cased, inner whitespace runs collapsed to `_`.
pub fn canonical_name(raw: &str) -> String {
    raw.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join("_")
}

pub fn is_canonical_name(name: &str) -> bool {
    !name.is_empty() && canonical_name(name) == name
}

/// Serialize with sorted object keys and no insignificant whitespace.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("domain types serialize to JSON");
    let mut out = String::new();
    write_canonical(&value, &mut out);
    out
}

/// Canonical encoding of an already-built JSON value.
pub fn canonical_value(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).expect("string keys encode"));
                out.push(':');
                write_canonical(&map[key], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&serde_json::to_string(scalar).expect("scalars encode")),
    }
}

/// Decode a document and check the type's invariants.
pub fn from_canonical_json<T: DeserializeOwned + Validate>(doc: &str) -> Result<T, ModelError> {
    let value: T = serde_json::from_str(doc).map_err(|e| ModelError::Malformed(e.to_string()))?;
    value.validate()?;
    Ok(value)
}

/// Same as [`from_canonical_json`] starting from a parsed value.
pub fn from_value<T: DeserializeOwned + Validate>(value: Value) -> Result<T, ModelError> {
    let value: T =
        serde_json::from_value(value).map_err(|e| ModelError::Malformed(e.to_string()))?;
    value.validate()?;
    Ok(value)
}

/// High-level robot action verbs across the supported environment profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    NavigateTo,
    Find,
    PickUp,
    PutDownTo,
    Drop,
    Open,
    Close,
    TurnOn,
    TurnOff,
    Slice,
    TaskComplete,
}

impl Verb {
    pub const ALL: [Verb; 11] = [
        Verb::NavigateTo,
        Verb::Find,
        Verb::PickUp,
        Verb::PutDownTo,
        Verb::Drop,
        Verb::Open,
        Verb::Close,
        Verb::TurnOn,
        Verb::TurnOff,
        Verb::Slice,
        Verb::TaskComplete,
    ];

    pub fn requires_target(self) -> bool {
        !matches!(self, Verb::TaskComplete | Verb::Drop)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verb::NavigateTo => "navigate_to",
            Verb::Find => "find",
            Verb::PickUp => "pick_up",
            Verb::PutDownTo => "put_down_to",
            Verb::Drop => "drop",
            Verb::Open => "open",
            Verb::Close => "close",
            Verb::TurnOn => "turn_on",
            Verb::TurnOff => "turn_off",
            Verb::Slice => "slice",
            Verb::TaskComplete => "task_complete",
        }
    }

    pub fn parse(s: &str) -> Option<Verb> {
        Verb::ALL.into_iter().find(|v| v.as_str() == s.trim())
    }

    /// Past-tense phrase used in step summaries.
    pub fn past_tense(self) -> &'static str {
        match self {
            Verb::NavigateTo => "navigated to",
            Verb::Find => "found",
            Verb::PickUp => "picked up",
            Verb::PutDownTo => "put down to",
            Verb::Drop => "dropped",
            Verb::Open => "opened",
            Verb::Close => "closed",
            Verb::TurnOn => "turned on",
            Verb::TurnOff => "turned off",
            Verb::Slice => "sliced",
            Verb::TaskComplete => "declared the task complete",
        }
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActionCommand {
    pub verb: Verb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

impl ActionCommand {
    /// Build a command, canonicalizing the target name.
    pub fn new(verb: Verb, target: Option<&str>) -> Result<Self, ModelError> {
        let cmd = ActionCommand {
            verb,
            target: target.map(canonical_name).filter(|t| !t.is_empty()),
        };
        cmd.validate()?;
        Ok(cmd)
    }

    /// Shorthand for a command whose target is a literal known to be valid.
    pub fn on(verb: Verb, target: &str) -> Self {
        ActionCommand::new(verb, Some(target)).expect("valid literal action")
    }

    pub fn bare(verb: Verb) -> Self {
        ActionCommand { verb, target: None }
    }

    pub fn target_str(&self) -> &str {
        self.target.as_deref().unwrap_or("")
    }
}

impl Validate for ActionCommand {
    fn validate(&self) -> Result<(), ModelError> {
        match &self.target {
            None if self.verb.requires_target() => Err(ModelError::invariant(
                "target",
                format!("verb `{}` requires a target", self.verb),
            )),
            Some(t) if !is_canonical_name(t) => Err(ModelError::invariant(
                "target",
                format!("`{t}` is not a canonical name"),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ActionCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.verb, self.target_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub task_id: String,
    pub step_index: u32,
    pub text: String,
    #[serde(default)]
    pub image_refs: Vec<String>,
}

impl Validate for Observation {
    fn validate(&self) -> Result<(), ModelError> {
        if self.text.trim().is_empty() {
            return Err(ModelError::invariant("text", "observation text is empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Failure => "failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step_index: u32,
    pub action: ActionCommand,
    pub summary: String,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
}

impl Validate for StepRecord {
    fn validate(&self) -> Result<(), ModelError> {
        self.action.validate().map_err(|e| e.nested("action"))?;
        if self.summary.trim().is_empty() {
            return Err(ModelError::invariant("summary", "summary is empty"));
        }
        match (self.outcome, &self.failure_reason) {
            (Outcome::Failure, None) => Err(ModelError::invariant(
                "failure_reason",
                "failed steps must carry a reason",
            )),
            (Outcome::Success, Some(_)) => Err(ModelError::invariant(
                "failure_reason",
                "successful steps carry no failure reason",
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminatedBy {
    Success,
    StepBudget,
    SelfTerminated,
    /// The episode could not continue (planner produced nothing usable or
    /// the run crashed); scored like any other unfinished task.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub scn: u32,
    pub gcn: u32,
    pub steps_used: u32,
    pub terminated_by: TerminatedBy,
}

impl TaskResult {
    pub fn succeeded(&self) -> bool {
        self.scn == self.gcn
    }
}

impl Validate for TaskResult {
    fn validate(&self) -> Result<(), ModelError> {
        if self.gcn == 0 {
            return Err(ModelError::invariant("gcn", "gcn must be at least 1"));
        }
        if self.scn > self.gcn {
            return Err(ModelError::invariant(
                "scn",
                format!("scn {} exceeds gcn {}", self.scn, self.gcn),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn action_round_trip() {
        let cmd = ActionCommand::on(Verb::PickUp, "apple");
        let doc = to_canonical_json(&cmd);
        assert_eq!(doc, r#"{"target":"apple","verb":"pick_up"}"#);
        let back: ActionCommand = from_canonical_json(&doc).unwrap();
        assert_eq!(back, cmd);
    }

    #[test]
    fn task_result_serialization_is_deterministic() {
        let r = TaskResult {
            task_id: "t01".into(),
            scn: 2,
            gcn: 4,
            steps_used: 9,
            terminated_by: TerminatedBy::StepBudget,
        };
        assert_eq!(to_canonical_json(&r), to_canonical_json(&r.clone()));
        assert!(to_canonical_json(&r).starts_with(r#"{"gcn":4,"scn":2"#));
    }

    #[test]
    fn missing_target_names_the_field() {
        let err = from_canonical_json::<ActionCommand>(r#"{"verb":"pick_up"}"#).unwrap_err();
        match err {
            ModelError::InvariantViolation { path, .. } => assert_eq!(path, "target"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scn_above_gcn_rejected() {
        let doc = r#"{"gcn":3,"scn":5,"steps_used":1,"task_id":"x","terminated_by":"success"}"#;
        let err = from_canonical_json::<TaskResult>(doc).unwrap_err();
        assert!(matches!(err, ModelError::InvariantViolation { ref path, .. } if path == "scn"));
    }

    #[test]
    fn malformed_document() {
        let err = from_canonical_json::<TaskResult>("{not json").unwrap_err();
        assert!(matches!(err, ModelError::Malformed(_)));
    }

    #[test]
    fn bare_verbs_accept_no_target() {
        let doc = r#"{"verb":"task_complete"}"#;
        let cmd: ActionCommand = from_canonical_json(doc).unwrap();
        assert_eq!(cmd, ActionCommand::bare(Verb::TaskComplete));
        assert_eq!(to_canonical_json(&cmd), doc);
    }

    #[test]
    fn step_record_reason_iff_failure() {
        let mut rec = StepRecord {
            step_index: 1,
            action: ActionCommand::on(Verb::Open, "fridge"),
            summary: "opened fridge: success".into(),
            outcome: Outcome::Success,
            failure_reason: Some("nope".into()),
        };
        assert!(rec.validate().is_err());
        rec.failure_reason = None;
        assert!(rec.validate().is_ok());
        rec.outcome = Outcome::Failure;
        assert!(rec.validate().is_err());
    }

    #[test]
    fn names_are_canonicalized() {
        assert_eq!(canonical_name("  Kitchen   Counter "), "kitchen_counter");
        let cmd = ActionCommand::new(Verb::NavigateTo, Some(" Kitchen Counter")).unwrap();
        assert_eq!(cmd.target.as_deref(), Some("kitchen_counter"));
        let err = from_canonical_json::<ActionCommand>(r#"{"verb":"open","target":"Fridge"}"#);
        assert!(err.is_err());
    }

    fn arb_name() -> impl Strategy<Value = String> {
        "[a-z][a-z_]{0,10}[a-z]".prop_map(|s| s)
    }

    fn arb_step() -> impl Strategy<Value = StepRecord> {
        (
            0u32..1000,
            prop::sample::select(Verb::ALL.to_vec()),
            arb_name(),
            "[ -~]{1,40}",
            prop::bool::ANY,
            "[a-z ]{1,20}",
        )
            .prop_filter_map("non-blank summary", |(i, verb, target, summary, ok, reason)| {
                if summary.trim().is_empty() {
                    return None;
                }
                let action = if verb.requires_target() {
                    ActionCommand::on(verb, &target)
                } else {
                    ActionCommand::bare(verb)
                };
                Some(StepRecord {
                    step_index: i,
                    action,
                    summary,
                    outcome: if ok { Outcome::Success } else { Outcome::Failure },
                    failure_reason: (!ok).then_some(reason),
                })
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn step_records_round_trip(rec in arb_step()) {
            let doc = to_canonical_json(&rec);
            let back: StepRecord = from_canonical_json(&doc).unwrap();
            prop_assert_eq!(&back, &rec);
            prop_assert_eq!(to_canonical_json(&back), doc);
        }

        #[test]
        fn distinct_steps_have_distinct_documents(a in arb_step(), b in arb_step()) {
            prop_assume!(a != b);
            prop_assert_ne!(to_canonical_json(&a), to_canonical_json(&b));
        }
    }
}
