//! Directed labeled multigraph with entity embeddings and bounded K-hop
//! retrieval.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{EdgeKey, Triplet, TripletSource};
use crate::model::{ModelError, Validate};
use crate::vector::{Embedder, IndexEntry, IndexError, VectorIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeMeta {
    pub step_index: u32,
    pub source: TripletSource,
}

/// Node budget for a K-hop extraction from `seeds` sources in a graph whose
/// out-degree is at most `degree`: `M·(D^{K+1}−1)/(D−1)` for `D > 1`,
/// `M·(K+1)` otherwise. Saturates instead of overflowing.
pub fn khop_bound(seeds: usize, degree: usize, hops: usize) -> u128 {
    let m = seeds as u128;
    if degree <= 1 {
        return m.saturating_mul(hops as u128 + 1);
    }
    let d = degree as u128;
    let mut per_seed: u128 = 0;
    let mut term: u128 = 1;
    for _ in 0..=hops {
        per_seed = per_seed.saturating_add(term);
        term = term.saturating_mul(d);
    }
    m.saturating_mul(per_seed)
}

/// Same budget capped by the graph size, for graphs normalized to a
/// configured out-degree ceiling.
pub fn normalized_khop_bound(nodes: usize, seeds: usize, max_out_degree: usize, hops: usize) -> u128 {
    khop_bound(seeds, max_out_degree, hops).min(nodes as u128)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Subgraph {
    pub nodes: BTreeSet<String>,
    /// Edges with both endpoints in `nodes`.
    pub edges: Vec<Triplet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    nodes: BTreeSet<String>,
    edges: BTreeMap<EdgeKey, EdgeMeta>,
    incoming: BTreeSet<(String, String, String)>,
    embeddings: VectorIndex,
}

/// Serialized form of a [`KnowledgeGraph`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub nodes: Vec<String>,
    pub edges: Vec<Triplet>,
    pub embeddings: VectorIndex,
}

impl KnowledgeGraph {
    pub fn new(dim: usize) -> Self {
        KnowledgeGraph {
            nodes: BTreeSet::new(),
            edges: BTreeMap::new(),
            incoming: BTreeSet::new(),
            embeddings: VectorIndex::new(dim),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &BTreeSet<String> {
        &self.nodes
    }

    pub fn contains_node(&self, name: &str) -> bool {
        self.nodes.contains(name)
    }

    pub fn embeddings(&self) -> &VectorIndex {
        &self.embeddings
    }

    pub fn edge(&self, key: &EdgeKey) -> Option<Triplet> {
        self.edges.get(key).map(|m| Triplet::from_parts(key, *m))
    }

    pub fn contains(&self, subject: &str, relation: &str, object: &str) -> bool {
        self.edges
            .contains_key(&(subject.to_string(), relation.to_string(), object.to_string()))
    }

    pub fn triplets(&self) -> impl Iterator<Item = Triplet> + '_ {
        self.edges.iter().map(|(k, m)| Triplet::from_parts(k, *m))
    }

    pub fn out_edges<'a>(&'a self, node: &'a str) -> impl Iterator<Item = Triplet> + 'a {
        self.edges
            .range((node.to_string(), String::new(), String::new())..)
            .take_while(move |(k, _)| k.0 == node)
            .map(|(k, m)| Triplet::from_parts(k, *m))
    }

    pub fn in_edges<'a>(&'a self, node: &'a str) -> impl Iterator<Item = Triplet> + 'a {
        self.incoming
            .range((node.to_string(), String::new(), String::new())..)
            .take_while(move |k| k.0 == node)
            .map(move |(o, r, s)| {
                let key = (s.clone(), r.clone(), o.clone());
                let meta = self.edges[&key];
                Triplet::from_parts(&key, meta)
            })
    }

    pub fn out_degree(&self, node: &str) -> usize {
        self.out_edges(node).count()
    }

    pub fn in_degree(&self, node: &str) -> usize {
        self.in_edges(node).count()
    }

    pub fn max_out_degree(&self) -> usize {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for k in self.edges.keys() {
            *counts.entry(&k.0).or_default() += 1;
        }
        counts.values().copied().max().unwrap_or(0)
    }

    pub fn max_in_degree(&self) -> usize {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for k in &self.incoming {
            *counts.entry(&k.0).or_default() += 1;
        }
        counts.values().copied().max().unwrap_or(0)
    }

    /// Add a node and its embedding; no-op if present.
    pub fn add_node(&mut self, name: &str, embedder: &dyn Embedder) -> Result<(), IndexError> {
        if self.nodes.contains(name) {
            return Ok(());
        }
        let embedding = embedder.embed(name)?;
        self.embeddings.upsert(IndexEntry {
            id: name.to_string(),
            text: name.to_string(),
            embedding,
            payload: serde_json::Value::Null,
        })?;
        self.nodes.insert(name.to_string());
        Ok(())
    }

    /// Insert an edge, adding endpoints as needed. Identical keys keep the
    /// larger step index.
    pub fn insert_edge(&mut self, t: &Triplet, embedder: &dyn Embedder) -> Result<(), IndexError> {
        self.add_node(&t.subject, embedder)?;
        self.add_node(&t.object, embedder)?;
        let key = t.key();
        let meta = EdgeMeta {
            step_index: t.step_index,
            source: t.source,
        };
        match self.edges.get_mut(&key) {
            Some(existing) if existing.step_index >= meta.step_index => {}
            Some(existing) => *existing = meta,
            None => {
                self.incoming
                    .insert((key.2.clone(), key.1.clone(), key.0.clone()));
                self.edges.insert(key, meta);
            }
        }
        Ok(())
    }

    pub fn remove_edge(&mut self, key: &EdgeKey) -> Option<EdgeMeta> {
        let meta = self.edges.remove(key)?;
        self.incoming
            .remove(&(key.2.clone(), key.1.clone(), key.0.clone()));
        Some(meta)
    }

    /// Every node reachable from `seeds` over at most `hops` outgoing edges.
    /// Seeds absent from the graph are ignored.
    pub fn khop_nodes(&self, seeds: &BTreeSet<String>, hops: usize) -> BTreeSet<String> {
        let mut seen: BTreeSet<String> = BTreeSet::new();
        let mut queue: VecDeque<(String, usize)> = VecDeque::new();
        for s in seeds.iter().filter(|s| self.nodes.contains(*s)) {
            if seen.insert(s.clone()) {
                queue.push_back((s.clone(), 0));
            }
        }
        while let Some((node, depth)) = queue.pop_front() {
            if depth == hops {
                continue;
            }
            for e in self.out_edges(&node) {
                if seen.insert(e.object.clone()) {
                    queue.push_back((e.object, depth + 1));
                }
            }
        }
        seen
    }

    /// K-hop extraction plus the edges induced on the extracted nodes.
    ///
    /// Panics if the node count exceeds the degree-based bound or the
    /// normalized bound derived from `max_out_degree_cap`; either would mean
    /// the traversal or the degree caps are broken.
    pub fn retrieve_subgraph(
        &self,
        seeds: &BTreeSet<String>,
        hops: usize,
        max_out_degree_cap: usize,
    ) -> Subgraph {
        let nodes = self.khop_nodes(seeds, hops);
        let m = seeds.iter().filter(|s| self.nodes.contains(*s)).count();
        let bound = khop_bound(m, self.max_out_degree(), hops);
        let normalized = normalized_khop_bound(self.nodes.len(), m, max_out_degree_cap, hops);
        assert!(
            (nodes.len() as u128) <= bound && (nodes.len() as u128) <= normalized,
            "k-hop extraction returned {} nodes, bounds {bound} / {normalized}",
            nodes.len()
        );
        let edges = nodes
            .iter()
            .flat_map(|n| self.out_edges(n))
            .filter(|e| nodes.contains(&e.object))
            .collect();
        Subgraph { nodes, edges }
    }

    pub fn snapshot(&self) -> GraphSnapshot {
        GraphSnapshot {
            nodes: self.nodes.iter().cloned().collect(),
            edges: self.triplets().collect(),
            embeddings: self.embeddings.clone(),
        }
    }

    pub fn from_snapshot(snap: GraphSnapshot) -> Result<Self, ModelError> {
        snap.validate()?;
        let mut g = KnowledgeGraph::new(snap.embeddings.dim());
        g.nodes = snap.nodes.into_iter().collect();
        for t in snap.edges {
            g.incoming
                .insert((t.object.clone(), t.relation.clone(), t.subject.clone()));
            g.edges.insert(
                t.key(),
                EdgeMeta {
                    step_index: t.step_index,
                    source: t.source,
                },
            );
        }
        g.embeddings = snap.embeddings;
        Ok(g)
    }

    /// GraphViz rendering for inspection.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph spatial_memory {\n");
        for n in &self.nodes {
            out.push_str(&format!("  \"{n}\";\n"));
        }
        for t in self.triplets() {
            out.push_str(&format!(
                "  \"{}\" -> \"{}\" [label=\"{} @{}\"];\n",
                t.subject, t.object, t.relation, t.step_index
            ));
        }
        out.push_str("}\n");
        out
    }
}

impl Validate for GraphSnapshot {
    fn validate(&self) -> Result<(), ModelError> {
        self.embeddings.validate().map_err(|e| e.nested("embeddings"))?;
        let nodes: BTreeSet<&String> = self.nodes.iter().collect();
        for (i, t) in self.edges.iter().enumerate() {
            t.validate().map_err(|e| e.nested(&format!("edges.{i}")))?;
            if !nodes.contains(&t.subject) || !nodes.contains(&t.object) {
                return Err(ModelError::invariant(
                    format!("edges.{i}"),
                    "edge endpoint is not a node",
                ));
            }
        }
        for n in &self.nodes {
            if self.embeddings.get(n).is_none() {
                return Err(ModelError::invariant(
                    format!("nodes.{n}"),
                    "node has no embedding",
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::HashEmbedder;

    fn graph(edges: &[(&str, &str, &str)]) -> KnowledgeGraph {
        let e = HashEmbedder::default();
        let mut g = KnowledgeGraph::new(e.dim());
        for (i, (s, r, o)) in edges.iter().enumerate() {
            let t = Triplet::new(s, r, o, i as u32, TripletSource::Observation).unwrap();
            g.insert_edge(&t, &e).unwrap();
        }
        g
    }

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn zero_hops_returns_seeds_only() {
        let g = graph(&[("a", "r", "b"), ("b", "r", "c")]);
        let sub = g.retrieve_subgraph(&set(&["a"]), 0, 16);
        assert_eq!(sub.nodes, set(&["a"]));
        assert!(sub.edges.is_empty());
    }

    #[test]
    fn star_meets_bound_with_equality() {
        let g = graph(&[("c", "r", "x"), ("c", "r", "y"), ("c", "r", "z")]);
        let sub = g.retrieve_subgraph(&set(&["c"]), 1, 16);
        assert_eq!(sub.nodes.len(), 4);
        assert_eq!(khop_bound(1, 3, 1), 4);
        assert_eq!(sub.edges.len(), 3);
    }

    #[test]
    fn bound_formula() {
        assert_eq!(khop_bound(2, 1, 3), 8);
        assert_eq!(khop_bound(1, 2, 2), 7);
        assert_eq!(khop_bound(3, 4, 3), 3 * 85);
        assert_eq!(khop_bound(1, 0, 5), 6);
        assert_eq!(normalized_khop_bound(5, 3, 4, 3), 5);
        assert_eq!(khop_bound(1, usize::MAX, 40), u128::MAX);
    }

    #[test]
    fn unknown_seed_contributes_nothing() {
        let g = graph(&[("a", "r", "b")]);
        let sub = g.retrieve_subgraph(&set(&["zzz"]), 2, 16);
        assert!(sub.nodes.is_empty());
    }

    #[test]
    fn directed_only() {
        let g = graph(&[("a", "r", "b"), ("c", "r", "a")]);
        let sub = g.retrieve_subgraph(&set(&["a"]), 3, 16);
        assert_eq!(sub.nodes, set(&["a", "b"]));
    }

    #[test]
    fn degrees_and_removal() {
        let mut g = graph(&[("a", "r", "b"), ("a", "s", "b"), ("c", "r", "b")]);
        assert_eq!(g.out_degree("a"), 2);
        assert_eq!(g.in_degree("b"), 3);
        assert_eq!(g.max_out_degree(), 2);
        assert_eq!(g.max_in_degree(), 3);
        g.remove_edge(&("a".into(), "s".into(), "b".into()));
        assert_eq!(g.in_degree("b"), 2);
    }

    #[test]
    fn snapshot_round_trip() {
        let g = graph(&[("apple", "on", "table"), ("agent", "holds", "cup")]);
        let doc = crate::model::to_canonical_json(&g.snapshot());
        let snap: GraphSnapshot = crate::model::from_canonical_json(&doc).unwrap();
        assert_eq!(KnowledgeGraph::from_snapshot(snap).unwrap(), g);
        assert!(g.to_dot().contains("\"apple\" -> \"table\" [label=\"on @0\"]"));
    }
}
