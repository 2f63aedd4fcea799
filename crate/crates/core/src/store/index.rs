use std::collections::BTreeMap;

use crate::embed::cosine_similarity;
use crate::policy::{PolicyId, PolicyKind, TargetField};

/// One embedded natural-language query of a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub query: String,
    pub target: TargetField,
    /// The owning trigger's own similarity threshold.
    pub threshold: f64,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexHit {
    pub policy_id: PolicyId,
    /// Position of the entry within the policy's entries.
    pub entry: usize,
    pub score: f64,
}

/// Port for similarity indexes over policy query embeddings.
///
/// `scan` reports a score for candidate entries of the requested kind. An
/// exact index scores every entry; an approximate one may skip entries it
/// deems far away.
pub trait VectorIndex: Send + Sync {
    fn insert(&mut self, id: PolicyId, kind: PolicyKind, entries: Vec<IndexEntry>);

    fn remove(&mut self, id: &PolicyId);

    fn entries(&self, id: &PolicyId) -> Option<&[IndexEntry]>;

    fn scan(&self, query: &[f64], kind: PolicyKind) -> Vec<IndexHit>;
}

/// Brute-force cosine scan.
#[derive(Debug, Default)]
pub struct ExactIndex {
    by_kind: BTreeMap<PolicyKind, BTreeMap<PolicyId, Vec<IndexEntry>>>,
}

impl VectorIndex for ExactIndex {
    fn insert(&mut self, id: PolicyId, kind: PolicyKind, entries: Vec<IndexEntry>) {
        self.remove(&id);
        self.by_kind.entry(kind).or_default().insert(id, entries);
    }

    fn remove(&mut self, id: &PolicyId) {
        for policies in self.by_kind.values_mut() {
            policies.remove(id);
        }
    }

    fn entries(&self, id: &PolicyId) -> Option<&[IndexEntry]> {
        self.by_kind.values().find_map(|m| m.get(id)).map(Vec::as_slice)
    }

    fn scan(&self, query: &[f64], kind: PolicyKind) -> Vec<IndexHit> {
        let Some(policies) = self.by_kind.get(&kind) else {
            return Vec::new();
        };
        let mut hits = Vec::new();
        for (id, entries) in policies {
            for (i, entry) in entries.iter().enumerate() {
                if let Ok(score) = cosine_similarity(query, &entry.vector) {
                    hits.push(IndexHit { policy_id: id.clone(), entry: i, score });
                }
            }
        }
        hits
    }
}
