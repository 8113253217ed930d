//! Observation front-end: step summary, memory query and triplets.
//!
//! The summary and the query come from two reasoner roles invoked
//! concurrently; either falls back to a template when its role fails.
//! Triplets are read straight off the observation grammar:
//!
//! | line                    | triplets                               |
//! |-------------------------|----------------------------------------|
//! | `you are at L`          | `agent at L`, `agent visited L`        |
//! | `you see X on Y`        | `X on Y`, `agent near X`               |
//! | `T is S`                | `T is S`                               |
//! | `holding: X`            | `agent holds X` (`nothing` when empty) |

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::grammar::SceneView;
use crate::model::{ActionCommand, Observation, Outcome};
use crate::reasoner::step_summary;
use crate::reasoner::{Gateway, Role};
use crate::spatial::{Triplet, SELF_ENTITY};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PreprocessError {
    #[error("observation text is empty")]
    EmptyText,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessOutput {
    pub summary: String,
    pub query: String,
    pub triplets: Vec<Triplet>,
}

/// Facts stated by an observation, tagged with its step index.
pub fn extract_triplets(text: &str, step_index: u32) -> Vec<Triplet> {
    let view = SceneView::parse(text);
    let mut out = Vec::new();
    if let Some(loc) = &view.location {
        out.push(Triplet::observed(SELF_ENTITY, "at", loc, step_index));
        out.push(Triplet::observed(SELF_ENTITY, "visited", loc, step_index));
    }
    for (obj, placement, sup) in &view.seen {
        out.push(Triplet::observed(obj, placement.as_str(), sup, step_index));
        out.push(Triplet::observed(SELF_ENTITY, "near", obj, step_index));
    }
    for (thing, state) in &view.states {
        out.push(Triplet::observed(thing, "is", state, step_index));
    }
    if let Some(h) = &view.holding {
        let held = h.as_deref().unwrap_or("nothing");
        out.push(Triplet::observed(SELF_ENTITY, "holds", held, step_index));
    }
    out
}

/// Names of the interactive things an observation shows.
pub fn visible_entities(view: &SceneView) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    let mut push = |n: &str| {
        if !names.iter().any(|x| x == n) {
            names.push(n.to_string());
        }
    };
    if let Some(loc) = &view.location {
        push(loc);
    }
    for (obj, _, sup) in &view.seen {
        push(obj);
        push(sup);
    }
    if let Some(Some(h)) = &view.holding {
        push(h);
    }
    names
}

#[derive(Debug, Clone, Default)]
pub struct Preprocessor {
    gateway: Option<std::sync::Arc<Gateway>>,
}

impl Preprocessor {
    pub fn new(gateway: std::sync::Arc<Gateway>) -> Self {
        Preprocessor { gateway: Some(gateway) }
    }

    /// Templates only; no reasoner calls.
    pub fn offline() -> Self {
        Preprocessor { gateway: None }
    }

    pub fn preprocess(
        &self,
        obs: &Observation,
        instruction: &str,
        last_action: Option<&ActionCommand>,
        outcome: Outcome,
        failure_reason: Option<&str>,
    ) -> Result<PreprocessOutput, PreprocessError> {
        if obs.text.trim().is_empty() {
            return Err(PreprocessError::EmptyText);
        }
        let view = SceneView::parse(&obs.text);
        let fallback_summary = match last_action {
            Some(a) => step_summary(a, outcome, failure_reason),
            None => "observed the starting scene".to_string(),
        };
        let fallback_query = instruction.to_string();

        let (summary, query) = match &self.gateway {
            None => (fallback_summary, fallback_query),
            Some(gw) => {
                let mut requests = Vec::new();
                if let Some(a) = last_action {
                    let mut p = json!({"action": a, "outcome": outcome});
                    if let Some(r) = failure_reason {
                        p["failure_reason"] = json!(r);
                    }
                    requests.push((Role::StepSummarizer, p));
                }
                requests.push((
                    Role::QueryGenerator,
                    json!({
                        "instruction": instruction,
                        "last_action": last_action,
                        "visible": visible_entities(&view),
                    }),
                ));
                let mut results = gw.invoke_parallel(&requests).into_iter();
                let field = |r: Option<Result<Value, _>>, key: &str, fallback: String| match r {
                    Some(Ok(v)) => v[key].as_str().map(String::from).unwrap_or(fallback),
                    Some(Err(e)) => {
                        log::warn!("preprocessing fell back to a template for {key}: {e}");
                        fallback
                    }
                    None => fallback,
                };
                let summary = if last_action.is_some() {
                    field(results.next(), "summary", fallback_summary)
                } else {
                    fallback_summary
                };
                let query = field(results.next(), "query", fallback_query);
                (summary, query)
            }
        };
        let query = if query.trim().is_empty() {
            "current task".to_string()
        } else {
            query
        };
        Ok(PreprocessOutput {
            summary,
            query,
            triplets: extract_triplets(&obs.text, obs.step_index),
        })
    }
}
