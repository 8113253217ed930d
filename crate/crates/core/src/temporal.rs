//! Short-term FIFO of step summaries.
//!
//! The buffer holds at most `N` entries. Appending to a full buffer clears
//! it: the `N` entries are condensed into one summary that becomes the new
//! first entry, and the appended item goes right after it.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::model::{ModelError, Validate};
use crate::reasoner::{Gateway, Role};

pub const DEFAULT_CAPACITY: usize = 3;

/// Longest fallback summary, in characters.
const FALLBACK_LIMIT: usize = 240;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemporalEntry {
    Step { step_index: u32, text: String },
    Compacted { covers: (u32, u32), text: String },
}

impl TemporalEntry {
    pub fn text(&self) -> &str {
        match self {
            TemporalEntry::Step { text, .. } | TemporalEntry::Compacted { text, .. } => text,
        }
    }

    /// Inclusive step range the entry stands for.
    pub fn span(&self) -> (u32, u32) {
        match self {
            TemporalEntry::Step { step_index, .. } => (*step_index, *step_index),
            TemporalEntry::Compacted { covers, .. } => *covers,
        }
    }

    pub fn render(&self) -> String {
        match self {
            TemporalEntry::Step { step_index, text } => format!("step {step_index}: {text}"),
            TemporalEntry::Compacted { covers: (a, b), text } => {
                format!("steps {a}\u{2013}{b} (summary): {text}")
            }
        }
    }
}

/// Deterministic stand-in used when the summarizer is unavailable: the
/// entries joined and cut to a fixed length.
pub fn fallback_summary(entries: &[TemporalEntry]) -> String {
    let joined = entries.iter().map(TemporalEntry::text).collect::<Vec<_>>().join("; ");
    if joined.chars().count() <= FALLBACK_LIMIT {
        return joined;
    }
    let mut cut: String = joined.chars().take(FALLBACK_LIMIT - 3).collect();
    cut.push_str("...");
    cut
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalSnapshot {
    pub capacity: usize,
    pub entries: Vec<TemporalEntry>,
}

impl Validate for TemporalSnapshot {
    fn validate(&self) -> Result<(), ModelError> {
        if self.capacity == 0 {
            return Err(ModelError::invariant("capacity", "capacity must be positive"));
        }
        if self.entries.len() > self.capacity.max(2) {
            return Err(ModelError::invariant("entries", "buffer exceeds its capacity"));
        }
        for (i, pair) in self.entries.windows(2).enumerate() {
            if pair[1].span().0 != pair[0].span().1 + 1 {
                return Err(ModelError::invariant(
                    format!("entries.{}", i + 1),
                    "step ranges must be contiguous",
                ));
            }
        }
        for (i, e) in self.entries.iter().enumerate() {
            if let TemporalEntry::Compacted { covers: (a, b), .. } = e {
                if a > b {
                    return Err(ModelError::invariant(format!("entries.{i}.covers"), "empty range"));
                }
                if i > 0 {
                    return Err(ModelError::invariant(
                        format!("entries.{i}"),
                        "only the first entry may be a summary",
                    ));
                }
            }
        }
        Ok(())
    }
}

pub struct TemporalMemory {
    capacity: usize,
    entries: Vec<TemporalEntry>,
    summarizer: Option<Arc<Gateway>>,
}

impl std::fmt::Debug for TemporalMemory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TemporalMemory")
            .field("capacity", &self.capacity)
            .field("entries", &self.entries)
            .finish_non_exhaustive()
    }
}

impl Default for TemporalMemory {
    fn default() -> Self {
        TemporalMemory::new(DEFAULT_CAPACITY)
    }
}

impl TemporalMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "temporal capacity must be positive");
        TemporalMemory {
            capacity,
            entries: Vec::new(),
            summarizer: None,
        }
    }

    pub fn with_summarizer(mut self, gateway: Arc<Gateway>) -> Self {
        self.summarizer = Some(gateway);
        self
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[TemporalEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn compact(&self, entries: &[TemporalEntry]) -> String {
        let covers = (entries[0].span().0, entries[entries.len() - 1].span().1);
        let Some(gw) = &self.summarizer else {
            return fallback_summary(entries);
        };
        let payload = json!({
            "entries": entries.iter().map(TemporalEntry::text).collect::<Vec<_>>(),
            "covers": [covers.0, covers.1],
        });
        match gw.invoke(Role::StepSummarizer, &payload) {
            Ok(v) => v["summary"].as_str().unwrap_or_default().to_string(),
            Err(e) => {
                log::warn!("temporal compaction fell back to truncation: {e}");
                fallback_summary(entries)
            }
        }
    }

    pub fn append(&mut self, step_index: u32, summary: &str) {
        let item = TemporalEntry::Step {
            step_index,
            text: summary.to_string(),
        };
        if self.entries.len() >= self.capacity {
            let old = std::mem::take(&mut self.entries);
            let covers = (old[0].span().0, old[old.len() - 1].span().1);
            let text = self.compact(&old);
            self.entries.push(TemporalEntry::Compacted { covers, text });
        }
        self.entries.push(item);
    }

    /// Oldest first, one line per entry.
    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(TemporalEntry::render)
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn snapshot(&self) -> TemporalSnapshot {
        TemporalSnapshot {
            capacity: self.capacity,
            entries: self.entries.clone(),
        }
    }

    pub fn restore(&mut self, snap: TemporalSnapshot) -> Result<(), ModelError> {
        snap.validate()?;
        self.capacity = snap.capacity;
        self.entries = snap.entries;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled(n: usize, k: u32) -> TemporalMemory {
        let mut t = TemporalMemory::new(n).with_summarizer(Arc::new(Gateway::oracle()));
        for i in 1..=k {
            t.append(i, &format!("s{i}"));
        }
        t
    }

    #[test]
    fn compaction_on_full_append() {
        let t = filled(3, 3);
        assert_eq!(t.render(), "step 1: s1\nstep 2: s2\nstep 3: s3");
        let t = filled(3, 4);
        assert_eq!(t.len(), 2);
        assert_eq!(t.entries()[0].span(), (1, 3));
        assert!(t.render().starts_with("steps 1\u{2013}3 (summary): "));
        assert_eq!(t.entries()[1].render(), "step 4: s4");
    }

    #[test]
    fn capacity_one_holds_two_after_compaction() {
        let t = filled(1, 2);
        assert_eq!(t.len(), 2);
        assert_eq!(t.entries()[0].span(), (1, 1));
    }

    #[test]
    fn clear_and_empty_render() {
        let mut t = TemporalMemory::default();
        assert_eq!(t.render(), "");
        t.clear();
        assert!(t.is_empty());
        t.append(1, "x");
        t.clear();
        assert_eq!(t.render(), "");
    }

    #[test]
    fn fallback_truncates() {
        let entries: Vec<_> = (1..=50)
            .map(|i| TemporalEntry::Step {
                step_index: i,
                text: "navigated to kitchen_counter: success".into(),
            })
            .collect();
        let s = fallback_summary(&entries);
        assert_eq!(s.chars().count(), FALLBACK_LIMIT);
        assert!(s.ends_with("..."));
    }

    #[test]
    fn snapshot_round_trip() {
        let t = filled(3, 7);
        let doc = crate::model::to_canonical_json(&t.snapshot());
        let snap: TemporalSnapshot = crate::model::from_canonical_json(&doc).unwrap();
        assert_eq!(snap, t.snapshot());
    }
}
