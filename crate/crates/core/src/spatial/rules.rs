//! Relation exclusivity table and the newest-wins resolution policy.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::Triplet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusiveValues {
    pub relation: String,
    pub values: Vec<String>,
}

/// Which pairs of facts cannot hold at the same time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictRules {
    /// Relation pairs that cannot both link the same (subject, object).
    pub exclusive_relations: Vec<(String, String)>,
    /// For a relation, object values that exclude each other per subject
    /// (`fridge is open` vs `fridge is closed`).
    pub exclusive_values: Vec<ExclusiveValues>,
    /// Relation groups that are single-valued per subject: a subject keeps
    /// at most one edge drawn from each group.
    pub functional_groups: Vec<Vec<String>>,
    /// Relations that admit at most one subject per object (`held_by`
    /// uniqueness for `holds`).
    pub inverse_functional: Vec<String>,
}

impl Default for ConflictRules {
    fn default() -> Self {
        let s = |x: &str| x.to_string();
        ConflictRules {
            exclusive_relations: vec![(s("near"), s("holds")), (s("on"), s("in"))],
            exclusive_values: vec![
                ExclusiveValues {
                    relation: s("is"),
                    values: vec![s("open"), s("closed")],
                },
                ExclusiveValues {
                    relation: s("is"),
                    values: vec![s("on"), s("off")],
                },
            ],
            functional_groups: vec![vec![s("on"), s("in")], vec![s("at")], vec![s("holds")]],
            inverse_functional: vec![s("holds")],
        }
    }
}

impl ConflictRules {
    /// Rules that only contain the relation-pair table.
    pub fn pairs_only(pairs: &[(&str, &str)]) -> Self {
        ConflictRules {
            exclusive_relations: pairs
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            exclusive_values: Vec::new(),
            functional_groups: Vec::new(),
            inverse_functional: Vec::new(),
        }
    }

    pub fn exclusive_pair(&self, r1: &str, r2: &str) -> bool {
        self.exclusive_relations
            .iter()
            .any(|(a, b)| (a == r1 && b == r2) || (a == r2 && b == r1))
    }

    pub fn conflicts(&self, a: &Triplet, b: &Triplet) -> bool {
        if a.key() == b.key() {
            return false;
        }
        if a.subject == b.subject && a.object == b.object && self.exclusive_pair(&a.relation, &b.relation) {
            return true;
        }
        if a.subject == b.subject && a.relation == b.relation {
            let values_clash = self.exclusive_values.iter().any(|ev| {
                ev.relation == a.relation
                    && ev.values.contains(&a.object)
                    && ev.values.contains(&b.object)
            });
            if values_clash {
                return true;
            }
        }
        if a.subject == b.subject
            && self
                .functional_groups
                .iter()
                .any(|g| g.contains(&a.relation) && g.contains(&b.relation))
        {
            return true;
        }
        a.relation == b.relation
            && a.object == b.object
            && a.subject != b.subject
            && self.inverse_functional.contains(&a.relation)
    }

    /// Every conflicting index pair `(i, j)` with `i < j`.
    pub fn conflicting_pairs(&self, triplets: &[Triplet]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..triplets.len() {
            for j in i + 1..triplets.len() {
                if self.conflicts(&triplets[i], &triplets[j]) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Resolution order: newer step first, then resolver-sourced, then the
/// lexicographically smaller relation, object and subject.
pub fn priority_cmp(a: &Triplet, b: &Triplet) -> Ordering {
    b.step_index
        .cmp(&a.step_index)
        .then_with(|| b.source.cmp(&a.source))
        .then_with(|| a.relation.cmp(&b.relation))
        .then_with(|| a.object.cmp(&b.object))
        .then_with(|| a.subject.cmp(&b.subject))
}

/// Greedy newest-wins resolution: walk triplets from highest to lowest
/// priority and keep each one that does not clash with an already kept one.
/// Returns a keep-mask aligned with `triplets`.
pub fn resolve(triplets: &[Triplet], pairs: &[(usize, usize)]) -> Vec<bool> {
    let n = triplets.len();
    let mut adjacency = vec![Vec::new(); n];
    for &(i, j) in pairs {
        if i < n && j < n && i != j {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| priority_cmp(&triplets[i], &triplets[j]));
    let mut keep = vec![false; n];
    for i in order {
        if !adjacency[i].iter().any(|&j| keep[j]) {
            keep[i] = true;
        }
    }
    keep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::TripletSource;

    fn t(s: &str, r: &str, o: &str, step: u32) -> Triplet {
        Triplet::new(s, r, o, step, TripletSource::Observation).unwrap()
    }

    #[test]
    fn default_table() {
        let rules = ConflictRules::default();
        assert!(rules.conflicts(&t("agent", "near", "apple", 1), &t("agent", "holds", "apple", 2)));
        assert!(rules.conflicts(&t("apple", "on", "table", 1), &t("apple", "in", "basket", 2)));
        assert!(rules.conflicts(&t("fridge", "is", "open", 1), &t("fridge", "is", "closed", 2)));
        assert!(!rules.conflicts(&t("fridge", "is", "open", 1), &t("fridge", "is", "on", 2)));
        assert!(rules.conflicts(&t("agent", "at", "sink", 1), &t("agent", "at", "oven", 2)));
        assert!(rules.conflicts(&t("agent", "holds", "cup", 1), &t("robot", "holds", "cup", 2)));
        assert!(!rules.conflicts(&t("agent", "visited", "sink", 1), &t("agent", "visited", "oven", 2)));
        assert!(!rules.conflicts(&t("agent", "near", "apple", 1), &t("agent", "near", "banana", 2)));
    }

    #[test]
    fn newest_wins_then_tie_breaks() {
        let ts = vec![t("agent", "near", "apple", 1), t("agent", "holds", "apple", 3)];
        let keep = resolve(&ts, &[(0, 1)]);
        assert_eq!(keep, vec![false, true]);

        let mut resolver = t("apple", "on", "sink", 2);
        resolver.source = TripletSource::Resolver;
        let ts = vec![t("apple", "on", "table", 2), resolver];
        assert_eq!(resolve(&ts, &[(0, 1)]), vec![false, true]);

        let ts = vec![t("apple", "on", "table", 2), t("apple", "in", "basket", 2)];
        assert_eq!(resolve(&ts, &[(0, 1)]), vec![false, true]);
    }
}
