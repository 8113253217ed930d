//! Spatial memory: a knowledge graph of scene facts with a two-phase update.
//!
//! New facts land in a small pending buffer. When the buffer fills up, or a
//! buffered fact clashes with something already known, the buffer is merged
//! into the graph by [`SpatialMemory::integrate`]: retrieve the K-hop region
//! around the affected entities, merge, detect and resolve conflicts inside
//! that region only, and write the region back. Nodes outside the region are
//! never touched.

mod graph;
mod rules;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

pub use graph::{khop_bound, normalized_khop_bound, EdgeMeta, GraphSnapshot, KnowledgeGraph, Subgraph};
pub use rules::{priority_cmp, resolve, ConflictRules, ExclusiveValues};

use crate::model::{canonical_name, is_canonical_name, ModelError, Validate};
use crate::reasoner::{Gateway, Role};
use crate::vector::{normalize_text, Embedder, HashEmbedder, IndexError};

/// Name the agent uses for itself in the graph.
pub const SELF_ENTITY: &str = "agent";

pub type EdgeKey = (String, String, String);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletSource {
    #[default]
    Observation,
    Resolver,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub subject: String,
    pub relation: String,
    pub object: String,
    #[serde(default)]
    pub step_index: u32,
    #[serde(default)]
    pub source: TripletSource,
}

impl Triplet {
    pub fn new(
        subject: &str,
        relation: &str,
        object: &str,
        step_index: u32,
        source: TripletSource,
    ) -> Result<Self, ModelError> {
        let t = Triplet {
            subject: canonical_name(subject),
            relation: canonical_name(relation),
            object: canonical_name(object),
            step_index,
            source,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn observed(subject: &str, relation: &str, object: &str, step_index: u32) -> Self {
        Triplet::new(subject, relation, object, step_index, TripletSource::Observation)
            .expect("valid literal triplet")
    }

    pub fn key(&self) -> EdgeKey {
        (self.subject.clone(), self.relation.clone(), self.object.clone())
    }

    pub fn from_parts(key: &EdgeKey, meta: EdgeMeta) -> Self {
        Triplet {
            subject: key.0.clone(),
            relation: key.1.clone(),
            object: key.2.clone(),
            step_index: meta.step_index,
            source: meta.source,
        }
    }

    fn meta(&self) -> EdgeMeta {
        EdgeMeta {
            step_index: self.step_index,
            source: self.source,
        }
    }

    pub fn render(&self) -> String {
        format!("{} {} {}", self.subject, self.relation, self.object)
    }
}

impl Validate for Triplet {
    fn validate(&self) -> Result<(), ModelError> {
        for (field, value) in [
            ("subject", &self.subject),
            ("relation", &self.relation),
            ("object", &self.object),
        ] {
            if !is_canonical_name(value) {
                return Err(ModelError::invariant(
                    field,
                    format!("`{value}` is empty or not canonical"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SpatialError {
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialConfig {
    /// Hop limit K for retrieval and integration.
    pub hops: usize,
    /// Pending buffer capacity B.
    pub buffer_capacity: usize,
    pub max_out_degree: usize,
    pub max_in_degree: usize,
    /// Similarity threshold for entity matching and de-duplication.
    pub theta: f64,
    pub rules: ConflictRules,
    /// Entities always seeded by [`SpatialMemory::query`].
    pub anchors: Vec<String>,
}

impl Default for SpatialConfig {
    fn default() -> Self {
        SpatialConfig {
            hops: 2,
            buffer_capacity: 8,
            max_out_degree: 16,
            max_in_degree: 16,
            theta: 0.8,
            rules: ConflictRules::default(),
            anchors: vec![SELF_ENTITY.to_string()],
        }
    }
}

/// What one integration did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntegrationReport {
    pub seeds: BTreeSet<String>,
    pub retrieved_nodes: BTreeSet<String>,
    pub added: Vec<Triplet>,
    pub removed: Vec<Triplet>,
    pub conflicts: usize,
    /// Edges dropped to respect the degree caps.
    pub evicted: Vec<Triplet>,
    /// Entity renames applied during de-duplication.
    pub aliases: BTreeMap<String, String>,
    /// Conflict detection fell back to the local rule table.
    pub used_fallback: bool,
}

impl IntegrationReport {
    /// Nodes whose incident edges changed.
    pub fn modified_nodes(&self) -> BTreeSet<String> {
        self.added
            .iter()
            .chain(&self.removed)
            .chain(&self.evicted)
            .flat_map(|t| [t.subject.clone(), t.object.clone()])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialSnapshot {
    pub graph: GraphSnapshot,
    pub pending: Vec<Triplet>,
    pub recent_seeds: Vec<String>,
}

impl Validate for SpatialSnapshot {
    fn validate(&self) -> Result<(), ModelError> {
        self.graph.validate().map_err(|e| e.nested("graph"))?;
        for (i, t) in self.pending.iter().enumerate() {
            t.validate().map_err(|e| e.nested(&format!("pending.{i}")))?;
        }
        Ok(())
    }
}

pub struct SpatialMemory {
    config: SpatialConfig,
    graph: KnowledgeGraph,
    pending: Vec<Triplet>,
    recent_seeds: BTreeSet<String>,
    embedder: Arc<dyn Embedder>,
    detector: Option<Arc<Gateway>>,
}

impl std::fmt::Debug for SpatialMemory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpatialMemory")
            .field("nodes", &self.graph.node_count())
            .field("edges", &self.graph.edge_count())
            .field("pending", &self.pending.len())
            .finish_non_exhaustive()
    }
}

impl Default for SpatialMemory {
    fn default() -> Self {
        SpatialMemory::new(SpatialConfig::default(), Arc::new(HashEmbedder::default()))
    }
}

impl SpatialMemory {
    pub fn new(config: SpatialConfig, embedder: Arc<dyn Embedder>) -> Self {
        assert!(config.buffer_capacity >= 1, "buffer capacity must be positive");
        assert!(config.hops >= 1, "integration needs at least one hop");
        let graph = KnowledgeGraph::new(embedder.dim());
        SpatialMemory {
            config,
            graph,
            pending: Vec::new(),
            recent_seeds: BTreeSet::new(),
            embedder,
            detector: None,
        }
    }

    /// Start from an existing graph.
    pub fn with_graph(mut self, graph: KnowledgeGraph) -> Self {
        self.graph = graph;
        self
    }

    /// Route conflict detection through the reasoner; without one, the
    /// local rule table is used directly.
    pub fn with_detector(mut self, gateway: Arc<Gateway>) -> Self {
        self.detector = Some(gateway);
        self
    }

    pub fn config(&self) -> &SpatialConfig {
        &self.config
    }

    pub fn graph(&self) -> &KnowledgeGraph {
        &self.graph
    }

    pub fn pending(&self) -> &[Triplet] {
        &self.pending
    }

    pub fn recent_seeds(&self) -> &BTreeSet<String> {
        &self.recent_seeds
    }

    pub fn set_recent_seeds(&mut self, seeds: BTreeSet<String>) {
        self.recent_seeds = seeds;
    }

    /// Task boundary: forget the scene.
    pub fn reset(&mut self) {
        self.graph = KnowledgeGraph::new(self.embedder.dim());
        self.pending.clear();
        self.recent_seeds.clear();
    }

    fn fast_conflict(&self, t: &Triplet) -> bool {
        let rules = &self.config.rules;
        self.pending.iter().any(|p| rules.conflicts(p, t))
            || self.graph.out_edges(&t.subject).any(|e| rules.conflicts(&e, t))
            || self.graph.in_edges(&t.object).any(|e| rules.conflicts(&e, t))
    }

    /// Rapid-response phase. Returns the reports of any integrations the
    /// batch triggered.
    pub fn buffer_triplets(&mut self, t_new: Vec<Triplet>) -> Result<Vec<IntegrationReport>, SpatialError> {
        let mut reports = Vec::new();
        let mut conflict = false;
        for t in t_new {
            t.validate()?;
            conflict |= self.fast_conflict(&t);
            self.pending.push(t);
            if self.pending.len() >= self.config.buffer_capacity {
                reports.push(self.integrate()?);
            }
        }
        if conflict && !self.pending.is_empty() {
            reports.push(self.integrate()?);
        }
        Ok(reports)
    }

    fn match_entity(&self, name: &str) -> Option<String> {
        if self.graph.contains_node(name) {
            return Some(name.to_string());
        }
        let emb = self.embedder.embed(name).ok()?;
        let hits = self
            .graph
            .embeddings()
            .search(&emb, 1, self.config.theta)
            .ok()?;
        hits.first().map(|h| h.entry.id.clone())
    }

    /// Map each entity in `names` to the name it is stored under: an
    /// existing similar node keeps its name, otherwise similar new names
    /// collapse onto the lexicographically smallest one.
    fn dedup(&self, names: &BTreeSet<String>) -> Result<BTreeMap<String, String>, SpatialError> {
        let mut alias = BTreeMap::new();
        let mut fresh: Vec<(String, crate::vector::Embedding)> = Vec::new();
        for name in names {
            if let Some(existing) = self.match_entity(name) {
                alias.insert(name.clone(), existing);
                continue;
            }
            let emb = self.embedder.embed(name)?;
            let target = fresh
                .iter()
                .find(|(_, e)| crate::vector::cosine(e, &emb) >= self.config.theta)
                .map(|(n, _)| n.clone());
            match target {
                Some(t) => {
                    alias.insert(name.clone(), t);
                }
                None => {
                    alias.insert(name.clone(), name.clone());
                    fresh.push((name.clone(), emb));
                }
            }
        }
        Ok(alias)
    }

    fn detect(&self, triplets: &[Triplet]) -> (Vec<(usize, usize)>, bool) {
        let local = || self.config.rules.conflicting_pairs(triplets);
        let Some(gw) = &self.detector else {
            return (local(), false);
        };
        let payload = json!({"triplets": triplets, "rules": self.config.rules});
        let parsed = gw.invoke(Role::KgConflictDetector, &payload).map(|v| {
            v["conflicts"]
                .as_array()
                .map(|pairs| {
                    pairs
                        .iter()
                        .filter_map(|p| Some((p[0].as_u64()? as usize, p[1].as_u64()? as usize)))
                        .collect::<Vec<_>>()
                })
                .unwrap_or_default()
        });
        match parsed {
            Ok(pairs) if pairs.iter().all(|&(i, j)| i < triplets.len() && j < triplets.len()) => {
                (pairs, false)
            }
            Ok(_) => {
                log::warn!("conflict detector returned out-of-range indices, using rule table");
                (local(), true)
            }
            Err(e) => {
                log::warn!("conflict detector failed ({e}), using rule table");
                (local(), true)
            }
        }
    }

    /// Local-integration phase: merge the pending buffer into the graph.
    pub fn integrate(&mut self) -> Result<IntegrationReport, SpatialError> {
        let mut report = IntegrationReport::default();
        if self.pending.is_empty() {
            return Ok(report);
        }
        let t_new = std::mem::take(&mut self.pending);

        let names: BTreeSet<String> = t_new
            .iter()
            .flat_map(|t| [t.subject.clone(), t.object.clone()])
            .collect();
        let alias = self.dedup(&names)?;
        report.aliases = alias
            .iter()
            .filter(|(k, v)| k != v)
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let t_new: Vec<Triplet> = t_new
            .into_iter()
            .map(|t| Triplet {
                subject: alias[&t.subject].clone(),
                object: alias[&t.object].clone(),
                ..t
            })
            .collect();

        // Other holders of an inverse-functional object only reach it through
        // an incoming edge, so they join the seeds explicitly.
        let rival_holders: Vec<String> = t_new
            .iter()
            .filter(|t| self.config.rules.inverse_functional.contains(&t.relation))
            .flat_map(|t| {
                self.graph
                    .in_edges(&t.object)
                    .filter(|e| e.relation == t.relation)
                    .map(|e| e.subject)
                    .collect::<Vec<_>>()
            })
            .collect();
        let seeds: BTreeSet<String> = t_new
            .iter()
            .flat_map(|t| [&t.subject, &t.object])
            .chain(&self.recent_seeds)
            .chain(&rival_holders)
            .filter(|n| self.graph.contains_node(n))
            .cloned()
            .collect();
        let retrieved = self
            .graph
            .retrieve_subgraph(&seeds, self.config.hops, self.config.max_out_degree);

        let mut local: BTreeMap<EdgeKey, EdgeMeta> = BTreeMap::new();
        for t in retrieved.edges.iter().chain(&t_new) {
            let meta = t.meta();
            local
                .entry(t.key())
                .and_modify(|m| {
                    if (meta.step_index, meta.source) > (m.step_index, m.source) {
                        *m = meta;
                    }
                })
                .or_insert(meta);
        }
        let candidates: Vec<Triplet> = local.iter().map(|(k, m)| Triplet::from_parts(k, *m)).collect();

        let (pairs, used_fallback) = self.detect(&candidates);
        report.used_fallback = used_fallback;
        report.conflicts = pairs.len();
        let mut keep = resolve(&candidates, &pairs);
        report.evicted = self.enforce_degree_caps(&candidates, &mut keep, &retrieved);

        let kept: BTreeMap<EdgeKey, EdgeMeta> = candidates
            .iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(t, _)| (t.key(), t.meta()))
            .collect();
        for old in &retrieved.edges {
            match kept.get(&old.key()) {
                Some(m) if *m == old.meta() => {}
                _ => {
                    self.graph.remove_edge(&old.key());
                    report.removed.push(old.clone());
                }
            }
        }
        for (key, meta) in &kept {
            if self.graph.edge(key).map(|e| e.meta()) != Some(*meta) {
                let t = Triplet::from_parts(key, *meta);
                self.graph.insert_edge(&t, self.embedder.as_ref())?;
                report.added.push(t);
            }
        }
        for n in &names {
            self.graph.add_node(&alias[n], self.embedder.as_ref())?;
        }
        report.seeds = seeds;
        report.retrieved_nodes = retrieved.nodes;
        Ok(report)
    }

    /// Evict lowest-step local edges of any node that would exceed the
    /// degree caps. Edges outside the retrieved region are never evicted.
    fn enforce_degree_caps(
        &self,
        candidates: &[Triplet],
        keep: &mut [bool],
        retrieved: &Subgraph,
    ) -> Vec<Triplet> {
        let region: BTreeSet<EdgeKey> = retrieved.edges.iter().map(Triplet::key).collect();
        let mut evicted = Vec::new();
        let outside_out = |n: &str| {
            self.graph
                .out_edges(n)
                .filter(|e| !region.contains(&e.key()))
                .count()
        };
        let outside_in = |n: &str| {
            self.graph
                .in_edges(n)
                .filter(|e| !region.contains(&e.key()))
                .count()
        };
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| {
            candidates[a]
                .step_index
                .cmp(&candidates[b].step_index)
                .then_with(|| priority_cmp(&candidates[b], &candidates[a]))
        });
        for outgoing in [true, false] {
            let cap = if outgoing {
                self.config.max_out_degree
            } else {
                self.config.max_in_degree
            };
            let end = |t: &Triplet| {
                if outgoing {
                    t.subject.clone()
                } else {
                    t.object.clone()
                }
            };
            let mut degree: BTreeMap<String, usize> = BTreeMap::new();
            for (t, _) in candidates.iter().zip(keep.iter()).filter(|(_, k)| **k) {
                *degree.entry(end(t)).or_default() += 1;
            }
            for (node, d) in degree.iter_mut() {
                *d += if outgoing {
                    outside_out(node)
                } else {
                    outside_in(node)
                };
            }
            for &i in &order {
                if !keep[i] {
                    continue;
                }
                let node = end(&candidates[i]);
                let d = degree.get_mut(&node).expect("kept edge is counted");
                if *d > cap {
                    keep[i] = false;
                    *d -= 1;
                    log::info!(
                        "degree cap {cap} reached at `{node}`, evicting {}",
                        candidates[i].render()
                    );
                    evicted.push(candidates[i].clone());
                }
            }
        }
        evicted
    }

    /// Entities mentioned in free text: word windows of one to three words,
    /// matched exactly or by embedding similarity.
    pub fn extract_seeds(&self, text: &str) -> BTreeSet<String> {
        let norm = normalize_text(text);
        let words: Vec<&str> = norm.split(' ').filter(|w| !w.is_empty()).collect();
        let mut seeds = BTreeSet::new();
        for width in 1..=3 {
            for w in words.windows(width) {
                if let Some(n) = self.match_entity(&w.join("_")) {
                    seeds.insert(n);
                }
            }
        }
        seeds
    }

    /// Render the K-hop region around the entities named in `text` (plus
    /// the anchors) as sorted `subject relation object` lines.
    pub fn query(&mut self, text: &str, hops: usize) -> String {
        if self.graph.is_empty() {
            self.recent_seeds.clear();
            return String::new();
        }
        let mut seeds = self.extract_seeds(text);
        seeds.extend(
            self.config
                .anchors
                .iter()
                .filter(|a| self.graph.contains_node(a))
                .cloned(),
        );
        let sub = self
            .graph
            .retrieve_subgraph(&seeds, hops, self.config.max_out_degree);
        self.recent_seeds = seeds;
        let mut lines: Vec<String> = sub.edges.iter().map(Triplet::render).collect();
        lines.sort();
        lines.join("\n")
    }

    pub fn snapshot(&self) -> SpatialSnapshot {
        SpatialSnapshot {
            graph: self.graph.snapshot(),
            pending: self.pending.clone(),
            recent_seeds: self.recent_seeds.iter().cloned().collect(),
        }
    }

    pub fn restore(&mut self, snap: SpatialSnapshot) -> Result<(), ModelError> {
        snap.validate()?;
        self.graph = KnowledgeGraph::from_snapshot(snap.graph)?;
        self.pending = snap.pending;
        self.recent_seeds = snap.recent_seeds.into_iter().collect();
        Ok(())
    }

    pub fn to_dot(&self) -> String {
        self.graph.to_dot()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str, r: &str, o: &str, step: u32) -> Triplet {
        Triplet::observed(s, r, o, step)
    }

    fn memory(b: usize) -> SpatialMemory {
        SpatialMemory::new(
            SpatialConfig {
                buffer_capacity: b,
                ..SpatialConfig::default()
            },
            Arc::new(HashEmbedder::default()),
        )
    }

    #[test]
    fn buffered_until_saturation() {
        let mut m = memory(4);
        m.buffer_triplets(vec![t("apple", "on", "table", 1)]).unwrap();
        assert_eq!(m.pending().len(), 1);
        assert_eq!(m.graph().edge_count(), 0);

        let mut m = memory(1);
        m.buffer_triplets(vec![t("apple", "on", "table", 1)]).unwrap();
        assert!(m.pending().is_empty());
        assert!(m.graph().contains("apple", "on", "table"));
        assert_eq!(m.graph().node_count(), 2);
    }

    #[test]
    fn near_becomes_holds() {
        let mut m = memory(1);
        m.buffer_triplets(vec![t("agent", "near", "apple", 3)]).unwrap();
        m.buffer_triplets(vec![t("table", "near", "sink", 1)]).unwrap();
        let before = m.graph().out_edges("table").collect::<Vec<_>>();

        let mut m4 = memory(4);
        m4.graph = m.graph.clone();
        m4.buffer_triplets(vec![t("agent", "holds", "apple", 4)]).unwrap();
        assert!(m4.graph().contains("agent", "holds", "apple"));
        assert!(!m4.graph().contains("agent", "near", "apple"));
        assert_eq!(m4.graph().out_edges("table").collect::<Vec<_>>(), before);
        assert!(m4.query("where is the apple", 1).contains("agent holds apple"));
    }

    #[test]
    fn query_renders_sorted_lines() {
        let mut m = memory(1);
        assert_eq!(m.query("anything", 2), "");
        m.buffer_triplets(vec![t("apple", "on", "table", 1)]).unwrap();
        assert_eq!(m.query("where is the apple", 1), "apple on table");
        assert!(m.recent_seeds().contains("apple"));
    }

    #[test]
    fn integration_is_idempotent() {
        let mut m = memory(8);
        let batch = vec![
            t("agent", "at", "sink", 2),
            t("apple", "on", "sink", 2),
            t("apple", "in", "basket", 2),
        ];
        m.buffer_triplets(batch.clone()).unwrap();
        m.integrate().unwrap();
        let first = m.snapshot();
        m.buffer_triplets(batch).unwrap();
        m.integrate().unwrap();
        assert_eq!(m.snapshot().graph, first.graph);
    }

    #[test]
    fn similar_new_names_merge_onto_existing_node() {
        let mut m = memory(1);
        m.buffer_triplets(vec![t("apple", "on", "kitchen_counter", 1)]).unwrap();
        let report = m
            .buffer_triplets(vec![t("banana", "on", "kitchen counter", 2)])
            .unwrap();
        assert!(report.is_empty() || report[0].aliases.is_empty());
        assert!(m.graph().contains("banana", "on", "kitchen_counter"));
    }

    #[test]
    fn degree_cap_evicts_oldest_local_edge() {
        let mut m = SpatialMemory::new(
            SpatialConfig {
                buffer_capacity: 1,
                max_out_degree: 2,
                ..SpatialConfig::default()
            },
            Arc::new(HashEmbedder::default()),
        );
        for (i, o) in ["sink", "oven", "fridge"].iter().enumerate() {
            m.buffer_triplets(vec![t("agent", "visited", o, i as u32)]).unwrap();
        }
        assert_eq!(m.graph().out_degree("agent"), 2);
        assert!(!m.graph().contains("agent", "visited", "sink"));
    }

    #[test]
    fn detector_failure_falls_back_to_rules() {
        let gw = Arc::new(Gateway::oracle().with_budget(Some(0)));
        let mut m = memory(1).with_detector(gw);
        m.buffer_triplets(vec![t("fridge", "is", "open", 1)]).unwrap();
        let reports = m.buffer_triplets(vec![t("fridge", "is", "closed", 2)]).unwrap();
        assert!(reports.iter().any(|r| r.used_fallback));
        assert!(m.graph().contains("fridge", "is", "closed"));
        assert!(!m.graph().contains("fridge", "is", "open"));
    }
}
