//! Request and response shapes for each reasoner role.

use serde_json::{Map, Value};

use super::{ReasonerError, Role};

type Obj = Map<String, Value>;

fn as_object<'a>(v: &'a Value, what: &str) -> Result<&'a Obj, String> {
    v.as_object().ok_or_else(|| format!("{what} must be an object"))
}

fn string<'a>(o: &'a Obj, field: &str) -> Result<&'a str, String> {
    o.get(field)
        .and_then(Value::as_str)
        .ok_or_else(|| format!("`{field}` must be a string"))
}

fn non_empty_string<'a>(o: &'a Obj, field: &str) -> Result<&'a str, String> {
    let s = string(o, field)?;
    if s.trim().is_empty() {
        return Err(format!("`{field}` must not be empty"));
    }
    Ok(s)
}

fn array<'a>(o: &'a Obj, field: &str) -> Result<&'a Vec<Value>, String> {
    o.get(field)
        .and_then(Value::as_array)
        .ok_or_else(|| format!("`{field}` must be an array"))
}

fn string_array(o: &Obj, field: &str) -> Result<(), String> {
    if array(o, field)?.iter().all(Value::is_string) {
        Ok(())
    } else {
        Err(format!("`{field}` must contain only strings"))
    }
}

fn object_field<'a>(o: &'a Obj, field: &str) -> Result<&'a Obj, String> {
    o.get(field)
        .and_then(Value::as_object)
        .ok_or_else(|| format!("`{field}` must be an object"))
}

fn action(v: &Value, what: &str) -> Result<(), String> {
    let o = as_object(v, what)?;
    string(o, "verb").map_err(|e| format!("{what}: {e}"))?;
    match o.get("target") {
        None | Some(Value::Null) | Some(Value::String(_)) => Ok(()),
        Some(_) => Err(format!("{what}: `target` must be a string")),
    }
}

fn memory_items(o: &Obj, field: &str) -> Result<(), String> {
    for (i, item) in array(o, field)?.iter().enumerate() {
        let item = as_object(item, &format!("{field}[{i}]"))?;
        non_empty_string(item, "text").map_err(|e| format!("{field}[{i}]: {e}"))?;
        string_array(item, "tags").map_err(|e| format!("{field}[{i}]: {e}"))?;
    }
    Ok(())
}

fn request(role: Role, payload: &Value) -> Result<(), String> {
    let o = as_object(payload, "payload")?;
    match role {
        Role::StepSummarizer => {
            if o.contains_key("entries") {
                string_array(o, "entries")?;
                if array(o, "entries")?.is_empty() {
                    return Err("`entries` must not be empty".into());
                }
                let covers = array(o, "covers")?;
                if covers.len() != 2 || !covers.iter().all(Value::is_u64) {
                    return Err("`covers` must be two step indices".into());
                }
                Ok(())
            } else {
                action(o.get("action").unwrap_or(&Value::Null), "action")?;
                match string(o, "outcome")? {
                    "success" | "failure" => Ok(()),
                    other => Err(format!("unknown outcome `{other}`")),
                }
            }
        }
        Role::QueryGenerator => {
            string(o, "instruction")?;
            string_array(o, "visible")?;
            match o.get("last_action") {
                None | Some(Value::Null) => Ok(()),
                Some(v) => action(v, "last_action"),
            }
        }
        Role::KgConflictDetector => {
            for (i, t) in array(o, "triplets")?.iter().enumerate() {
                let t = as_object(t, &format!("triplets[{i}]"))?;
                for f in ["subject", "relation", "object"] {
                    string(t, f).map_err(|e| format!("triplets[{i}]: {e}"))?;
                }
            }
            Ok(())
        }
        Role::MemoryExtractor => {
            string(o, "task_id")?;
            string(o, "instruction")?;
            object_field(o, "result")?;
            array(o, "steps")?;
            array(o, "sightings")?;
            string_array(o, "explored")
        }
        Role::MemoryUpdater => {
            let new = object_field(o, "new")?;
            non_empty_string(new, "text")?;
            string_array(new, "tags")?;
            for (i, s) in array(o, "similar")?.iter().enumerate() {
                let s = as_object(s, &format!("similar[{i}]"))?;
                string(s, "id")?;
                string(s, "text")?;
            }
            Ok(())
        }
        Role::Planner => {
            string(o, "instruction")?;
            string(o, "observation")?;
            string_array(o, "verbs")?;
            string_array(o, "nav_points")?;
            object_field(o, "context").map(|_| ())
        }
        Role::Critic => {
            string(o, "instruction")?;
            string(o, "observation")?;
            action(o.get("proposed").unwrap_or(&Value::Null), "proposed")?;
            for (i, a) in array(o, "remaining")?.iter().enumerate() {
                action(a, &format!("remaining[{i}]"))?;
            }
            object_field(o, "context").map(|_| ())
        }
    }
}

fn response(role: Role, payload: &Value) -> Result<(), String> {
    let o = as_object(payload, "response")?;
    match role {
        Role::StepSummarizer => non_empty_string(o, "summary").map(|_| ()),
        Role::QueryGenerator => non_empty_string(o, "query").map(|_| ()),
        Role::KgConflictDetector => {
            for (i, pair) in array(o, "conflicts")?.iter().enumerate() {
                let ok = pair
                    .as_array()
                    .is_some_and(|p| p.len() == 2 && p.iter().all(Value::is_u64));
                if !ok {
                    return Err(format!("conflicts[{i}] must be a pair of indices"));
                }
            }
            Ok(())
        }
        Role::MemoryExtractor => {
            memory_items(o, "episodic")?;
            memory_items(o, "semantic")
        }
        Role::MemoryUpdater => {
            memory_items(o, "adds")?;
            for (i, u) in array(o, "updates")?.iter().enumerate() {
                let u = as_object(u, &format!("updates[{i}]"))?;
                string(u, "id")?;
                non_empty_string(u, "text")?;
            }
            string_array(o, "deletes")
        }
        Role::Planner => {
            for (i, step) in array(o, "steps")?.iter().enumerate() {
                action(step, &format!("steps[{i}]"))?;
            }
            string(o, "rationale").map(|_| ())
        }
        Role::Critic => {
            let reason = string(o, "reason")?;
            match string(o, "decision")? {
                "approve" => Ok(()),
                "reject" if !reason.trim().is_empty() => Ok(()),
                "reject" => Err("a rejection needs a reason".into()),
                other => Err(format!("unknown decision `{other}`")),
            }
        }
    }
}

pub fn check_request(role: Role, payload: &Value) -> Result<(), ReasonerError> {
    request(role, payload).map_err(|detail| ReasonerError::InvalidRequest { role, detail })
}

pub fn check_response(role: Role, payload: &Value) -> Result<(), ReasonerError> {
    response(role, payload).map_err(|detail| ReasonerError::SchemaViolation { role, detail })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn critic_reject_needs_reason() {
        assert!(check_response(Role::Critic, &json!({"decision": "reject", "reason": ""})).is_err());
        assert!(check_response(Role::Critic, &json!({"decision": "approve", "reason": ""})).is_ok());
        assert!(check_response(Role::Critic, &json!({"decision": "maybe", "reason": "x"})).is_err());
    }

    #[test]
    fn planner_steps_shape() {
        let ok = json!({"steps": [{"verb": "fly"}, {"verb": "open", "target": "fridge"}], "rationale": ""});
        assert!(check_response(Role::Planner, &ok).is_ok());
        let bad = json!({"steps": [{"target": "fridge"}], "rationale": ""});
        assert!(check_response(Role::Planner, &bad).is_err());
    }

    #[test]
    fn conflict_pairs_shape() {
        assert!(check_response(Role::KgConflictDetector, &json!({"conflicts": [[0, 1]]})).is_ok());
        assert!(check_response(Role::KgConflictDetector, &json!({"conflicts": [[0]]})).is_err());
    }

    #[test]
    fn compaction_request_shape() {
        let ok = json!({"entries": ["a", "b"], "covers": [1, 2]});
        assert!(check_request(Role::StepSummarizer, &ok).is_ok());
        let bad = json!({"entries": [], "covers": [1, 2]});
        assert!(check_request(Role::StepSummarizer, &bad).is_err());
    }
}
