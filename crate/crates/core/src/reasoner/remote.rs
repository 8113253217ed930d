//! Chat-completions adapter.
//!
//! Each role call becomes one request whose system message describes the
//! role's reply shape and whose user message is the canonical payload. The
//! reply's message content must parse as JSON and pass the role's response
//! schema; anything else is retried.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use ureq::Agent;

use super::{schema, Backend, ReasonerError, Role};
use crate::model::canonical_value;

pub const API_KEY_ENV: &str = "ROBOMEMORY_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_ms: u64,
    pub max_retries: u32,
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "qwen2.5-vl-72b-instruct".into(),
            temperature: 0.0,
            timeout_ms: 60_000,
            max_retries: 3,
            api_key: std::env::var(API_KEY_ENV).ok(),
        }
    }
}

fn instructions(role: Role) -> &'static str {
    match role {
        Role::StepSummarizer => {
            "Summarize the executed robot action in one short sentence. \
             If the payload has `entries`, condense them into one summary. \
             Reply with JSON {\"summary\": string}."
        }
        Role::QueryGenerator => {
            "Write a short retrieval query for long-term memory from the task \
             instruction, the last action and the visible objects. \
             Reply with JSON {\"query\": string}."
        }
        Role::KgConflictDetector => {
            "Find pairs of triplets that cannot both be true. Use the rules as \
             guidance. Reply with JSON {\"conflicts\": [[i, j], ...]} using \
             zero-based indices."
        }
        Role::MemoryExtractor => {
            "Summarize the finished task into memory entities. Episodic entries \
             record what happened and where objects were; semantic entries \
             record reusable lessons. Reply with JSON {\"episodic\": \
             [{\"text\", \"tags\"}], \"semantic\": [{\"text\", \"tags\"}]}."
        }
        Role::MemoryUpdater => {
            "Merge the new memory entity with the similar old ones. Reply with \
             JSON {\"adds\": [{\"text\", \"tags\"}], \"updates\": [{\"id\", \
             \"text\"}], \"deletes\": [id]}."
        }
        Role::Planner => {
            "Plan the robot's next actions using only the allowed verbs. Reply \
             with JSON {\"steps\": [{\"verb\", \"target\"}], \"rationale\": string}."
        }
        Role::Critic => {
            "Decide whether the proposed action is still appropriate given the \
             observation and memory. Reply with JSON {\"decision\": \
             \"approve\"|\"reject\", \"reason\": string}."
        }
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: Agent,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("base_url", &self.config.base_url)
            .field("model", &self.config.model)
            .finish_non_exhaustive()
    }
}

enum Attempt {
    Transport(String),
    Invalid(String),
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteBackend { config, agent }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, role: Role, payload: &Value) -> Result<Value, Attempt> {
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "response_format": {"type": "json_object"},
            "messages": [
                {"role": "system", "content": instructions(role)},
                {"role": "user", "content": canonical_value(payload)},
            ],
        });
        let mut req = self.agent.post(&self.endpoint()).content_type("application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send(canonical_value(&body))
            .map_err(|e| Attempt::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Transport(e.to_string()))?;
        if status >= 500 || status == 429 {
            return Err(Attempt::Transport(format!("HTTP {status}")));
        }
        if status >= 400 {
            return Err(Attempt::Invalid(format!("HTTP {status}: {text}")));
        }
        let envelope: Value =
            serde_json::from_str(&text).map_err(|e| Attempt::Invalid(format!("envelope: {e}")))?;
        let content = envelope["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| Attempt::Invalid("reply has no message content".into()))?;
        let value: Value = serde_json::from_str(strip_fences(content))
            .map_err(|e| Attempt::Invalid(format!("content is not JSON: {e}")))?;
        schema::check_response(role, &value).map_err(|e| Attempt::Invalid(e.to_string()))?;
        Ok(value)
    }
}

fn strip_fences(s: &str) -> &str {
    let s = s.trim();
    let s = s.strip_prefix("```json").or_else(|| s.strip_prefix("```")).unwrap_or(s);
    s.strip_suffix("```").unwrap_or(s).trim()
}

impl Backend for RemoteBackend {
    fn call(&self, role: Role, payload: &Value) -> Result<Value, ReasonerError> {
        let mut last = Attempt::Transport("no attempt made".into());
        for attempt in 0..=self.config.max_retries {
            match self.attempt(role, payload) {
                Ok(v) => return Ok(v),
                Err(e) => {
                    let msg = match &e {
                        Attempt::Transport(m) | Attempt::Invalid(m) => m.clone(),
                    };
                    log::warn!("{role} attempt {} failed: {msg}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(match last {
            Attempt::Transport(m) => ReasonerError::BackendUnreachable(m),
            Attempt::Invalid(detail) => ReasonerError::SchemaViolation { role, detail },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;
    use std::thread;

    /// Serve `content` as the message content of every reply.
    fn stub(content: &'static str) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                counter.fetch_add(1, Ordering::SeqCst);
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                }
                let mut body = vec![0u8; len];
                let _ = reader.read_exact(&mut body);
                let reply = json!({"choices": [{"message": {"content": content}}]}).to_string();
                let _ = write!(
                    stream,
                    "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                    reply.len(),
                    reply
                );
            }
        });
        (format!("http://{addr}/v1"), hits)
    }

    fn backend(base_url: String) -> RemoteBackend {
        RemoteBackend::new(RemoteConfig {
            base_url,
            max_retries: 2,
            timeout_ms: 5_000,
            api_key: None,
            ..RemoteConfig::default()
        })
    }

    #[test]
    fn malformed_replies_surface_schema_violation_after_retries() {
        let (url, hits) = stub("this is not json");
        let err = backend(url)
            .call(Role::StepSummarizer, &json!({"action": {"verb": "open", "target": "fridge"}, "outcome": "success"}))
            .unwrap_err();
        assert!(matches!(err, ReasonerError::SchemaViolation { .. }), "{err:?}");
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn valid_reply_passes_through() {
        let (url, _) = stub("```json\n{\"summary\": \"opened fridge: success\"}\n```");
        let out = backend(url)
            .call(Role::StepSummarizer, &json!({"action": {"verb": "open", "target": "fridge"}, "outcome": "success"}))
            .unwrap();
        assert_eq!(out, json!({"summary": "opened fridge: success"}));
    }

    #[test]
    fn unreachable_endpoint() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let err = backend(format!("http://{addr}/v1"))
            .call(Role::QueryGenerator, &json!({"instruction": "x", "visible": []}))
            .unwrap_err();
        assert!(matches!(err, ReasonerError::BackendUnreachable(_)));
    }
}
