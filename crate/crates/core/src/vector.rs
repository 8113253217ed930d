//! Text embeddings and an exact in-memory cosine index.
//!
//! The built-in embedder hashes character trigrams into a fixed number of
//! signed buckets and L2-normalizes the result. It is deterministic and
//! good enough to tell `kitchen_counter` from `trash_bin`; it is not a
//! semantic model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{ModelError, Validate};

pub const DEFAULT_DIM: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("dimension mismatch: index has {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("no entry with id `{0}`")]
    NotFound(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub vector: Vec<f64>,
    pub norm: f64,
}

impl Embedding {
    pub fn from_vector(vector: Vec<f64>) -> Self {
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        Embedding { vector, norm }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Cosine similarity, clamped to `[-1, 1]`. Zero vectors score 0.
pub fn cosine(a: &Embedding, b: &Embedding) -> f64 {
    if a.norm == 0.0 || b.norm == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).sum();
    (dot / (a.norm * b.norm)).clamp(-1.0, 1.0)
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Embedding, IndexError>;
}

/// Lower-case, fold every non-alphanumeric run to a single space.
pub fn normalize_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
    {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashEmbedder { dim }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(DEFAULT_DIM)
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding, IndexError> {
        let norm_text = normalize_text(text);
        if norm_text.is_empty() {
            return Err(IndexError::EmptyText);
        }
        let padded: Vec<char> = format!(" {norm_text} ").chars().collect();
        let mut signed = vec![0.0; self.dim];
        let mut unsigned = vec![0.0; self.dim];
        let mut buf = [0u8; 16];
        for window in padded.windows(3) {
            let mut len = 0;
            for c in window {
                len += c.encode_utf8(&mut buf[len..]).len();
            }
            let h = fnv1a(&buf[..len]);
            let bucket = (h % self.dim as u64) as usize;
            signed[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
            unsigned[bucket] += 1.0;
        }
        // Signed buckets can cancel out exactly on tiny inputs.
        let raw = if signed.iter().any(|x| *x != 0.0) {
            signed
        } else {
            unsigned
        };
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(Embedding::from_vector(raw.into_iter().map(|x| x / norm).collect()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub text: String,
    pub embedding: Embedding,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit<'a> {
    pub entry: &'a IndexEntry,
    pub score: f64,
}

/// Exact brute-force cosine index keyed by entry id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorIndex {
    dim: usize,
    entries: BTreeMap<String, IndexEntry>,
}

impl VectorIndex {
    pub fn new(dim: usize) -> Self {
        VectorIndex {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&IndexEntry> {
        self.entries.get(id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &IndexEntry> {
        self.entries.values()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Insert or replace by id; the last write wins.
    pub fn upsert(&mut self, entry: IndexEntry) -> Result<(), IndexError> {
        self.check_dim(&entry.embedding)?;
        self.entries.insert(entry.id.clone(), entry);
        Ok(())
    }

    pub fn remove(&mut self, id: &str) -> Result<IndexEntry, IndexError> {
        self.entries
            .remove(id)
            .ok_or_else(|| IndexError::NotFound(id.to_string()))
    }

    /// Top-`k` entries with cosine `>= theta`, best first, ties by id.
    pub fn search(
        &self,
        query: &Embedding,
        k: usize,
        theta: f64,
    ) -> Result<Vec<SearchHit<'_>>, IndexError> {
        self.check_dim(query)?;
        let mut hits: Vec<SearchHit<'_>> = self
            .entries
            .values()
            .map(|entry| SearchHit {
                entry,
                score: cosine(query, &entry.embedding),
            })
            .filter(|hit| hit.score >= theta)
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.entry.id.cmp(&b.entry.id))
        });
        hits.truncate(k);
        Ok(hits)
    }

    fn check_dim(&self, e: &Embedding) -> Result<(), IndexError> {
        if e.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                actual: e.dim(),
            });
        }
        Ok(())
    }
}

impl Validate for VectorIndex {
    fn validate(&self) -> Result<(), ModelError> {
        for (key, entry) in &self.entries {
            if key != &entry.id {
                return Err(ModelError::invariant(
                    format!("entries.{key}.id"),
                    "entry id differs from its key",
                ));
            }
            if entry.embedding.dim() != self.dim {
                return Err(ModelError::invariant(
                    format!("entries.{key}.embedding"),
                    "embedding dimension differs from index dimension",
                ));
            }
        }
        Ok(())
    }
}
