//! Policy registry with semantic retrieval over natural-language triggers.
//!
//! On disk a store is a directory holding one `<id>.md` policy file per
//! policy plus a derived `embeddings.cache`. The markdown files are the
//! source of truth; the cache is rebuilt whenever it is missing, corrupt, or
//! was written by a different embedding provider.

mod index;
mod persist;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, SystemClock};
use crate::embed::EmbeddingProvider;
use crate::policy::{
    parse_policy_file, serialize_policy, validate_policy, ParseError, Policy, PolicyId,
    PolicyKind, TargetField, Violation,
};

pub use index::{ExactIndex, IndexEntry, IndexHit, VectorIndex};
pub use persist::{CacheStatus, LoadReport, CACHE_FILE};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("policy failed validation: {}", format_violations(.0))]
    ValidationFailed(Vec<Violation>),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("{path}: {source}")]
    PolicyFile { path: PathBuf, source: ParseError },
    #[error("{path}: file name does not match policy id `{id}`")]
    FileNameMismatch { path: PathBuf, id: PolicyId },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedQuery {
    pub query: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StoredPolicy {
    pub policy: Policy,
    /// The policy file text, exactly as accepted.
    pub source: String,
    pub embedded_queries: Vec<EmbeddedQuery>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub policy_id: PolicyId,
    pub score: f64,
    pub matched_query: String,
}

/// Orders hits by score descending, then policy id ascending.
pub fn hit_order(a: &SearchHit, b: &SearchHit) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.policy_id.cmp(&b.policy_id))
}

/// Orders policies by priority descending, then id ascending.
pub fn precedence(a: &Policy, b: &Policy) -> Ordering {
    b.priority.cmp(&a.priority).then_with(|| a.id.cmp(&b.id))
}

pub struct PolicyStore {
    embedder: Arc<dyn EmbeddingProvider>,
    clock: Arc<dyn Clock>,
    index: Box<dyn VectorIndex>,
    policies: BTreeMap<PolicyId, StoredPolicy>,
}

impl std::fmt::Debug for PolicyStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PolicyStore")
            .field("embedder", &self.embedder.signature())
            .field("policies", &self.policies.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl PolicyStore {
    pub fn new(embedder: Arc<dyn EmbeddingProvider>) -> Self {
        Self {
            embedder,
            clock: Arc::new(SystemClock),
            index: Box::<ExactIndex>::default(),
            policies: BTreeMap::new(),
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    /// Replaces the vector index. Only valid on an empty store.
    pub fn with_index(mut self, index: Box<dyn VectorIndex>) -> Self {
        assert!(self.policies.is_empty(), "index must be set before policies are added");
        self.index = index;
        self
    }

    pub fn embedder(&self) -> &dyn EmbeddingProvider {
        self.embedder.as_ref()
    }

    pub fn embedder_arc(&self) -> Arc<dyn EmbeddingProvider> {
        Arc::clone(&self.embedder)
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn get(&self, id: &PolicyId) -> Option<&StoredPolicy> {
        self.policies.get(id)
    }

    pub fn policy(&self, id: &PolicyId) -> Option<&Policy> {
        self.policies.get(id).map(|s| &s.policy)
    }

    /// All policies, ordered by id.
    pub fn policies(&self) -> impl Iterator<Item = &Policy> {
        self.policies.values().map(|s| &s.policy)
    }

    fn embed_queries(&self, p: &Policy) -> Vec<EmbeddedQuery> {
        p.nl_triggers()
            .flat_map(|t| t.queries.iter())
            .map(|q| EmbeddedQuery { query: q.clone(), vector: self.embedder.embed(q) })
            .collect()
    }

    fn index_entries(p: &Policy, embedded: &[EmbeddedQuery]) -> Vec<IndexEntry> {
        let mut vectors = embedded.iter();
        let mut entries = Vec::with_capacity(embedded.len());
        for t in p.nl_triggers() {
            for q in &t.queries {
                // one embedding per query, in declaration order
                let e = vectors.next().expect("embedding per query");
                debug_assert_eq!(&e.query, q);
                entries.push(IndexEntry {
                    query: q.clone(),
                    target: t.target,
                    threshold: t.threshold,
                    vector: e.vector.clone(),
                });
            }
        }
        entries
    }

    fn insert(&mut self, policy: Policy, source: String, embedded: Vec<EmbeddedQuery>) -> &StoredPolicy {
        let now = self.clock.now();
        let created_at = self.policies.get(&policy.id).map_or(now, |old| old.created_at);
        self.index
            .insert(policy.id.clone(), policy.kind(), Self::index_entries(&policy, &embedded));
        let id = policy.id.clone();
        self.policies.insert(
            id.clone(),
            StoredPolicy { policy, source, embedded_queries: embedded, created_at, updated_at: now },
        );
        &self.policies[&id]
    }

    /// Inserts or replaces a policy. Embeddings are recomputed every time.
    pub fn upsert(&mut self, policy: Policy) -> Result<&StoredPolicy, StoreError> {
        let violations = validate_policy(&policy);
        if !violations.is_empty() {
            return Err(StoreError::ValidationFailed(violations));
        }
        let source = serialize_policy(&policy);
        let embedded = self.embed_queries(&policy);
        Ok(self.insert(policy, source, embedded))
    }

    /// Parses a policy file and upserts it, keeping the text verbatim.
    pub fn upsert_source(&mut self, text: &str) -> Result<&StoredPolicy, StoreError> {
        let policy = parse_policy_file(text)?;
        let embedded = self.embed_queries(&policy);
        Ok(self.insert(policy, text.to_owned(), embedded))
    }

    pub fn delete(&mut self, id: &PolicyId) -> bool {
        self.index.remove(id);
        self.policies.remove(id).is_some()
    }

    /// Enables or disables a policy. Returns false if the id is unknown.
    pub fn set_enabled(&mut self, id: &PolicyId, enabled: bool) -> bool {
        let Some(stored) = self.policies.get_mut(id) else {
            return false;
        };
        if stored.policy.enabled != enabled {
            stored.policy.enabled = enabled;
            stored.source = serialize_policy(&stored.policy);
            stored.updated_at = self.clock.now();
        }
        true
    }

    /// Every policy of a kind, enabled or not, by (priority desc, id asc).
    pub fn list_by_kind(&self, kind: PolicyKind) -> Vec<&Policy> {
        let mut out: Vec<&Policy> = self.policies().filter(|p| p.kind() == kind).collect();
        out.sort_by(|a, b| precedence(a, b));
        out
    }

    /// Enabled policies of a kind, by (priority desc, id asc).
    pub fn enabled_by_kind(&self, kind: PolicyKind) -> Vec<&Policy> {
        let mut out = self.list_by_kind(kind);
        out.retain(|p| p.enabled);
        out
    }

    /// Finds enabled policies of `kind` whose natural-language queries are
    /// similar to `text`.
    ///
    /// A query qualifies when its score reaches both `threshold` and its
    /// trigger's own threshold. Each policy is scored by its best qualifying
    /// query (the first declared one on ties).
    pub fn semantic_search(
        &self,
        text: &str,
        kind: PolicyKind,
        top_k: usize,
        threshold: f64,
    ) -> Vec<SearchHit> {
        self.search_filtered(text, kind, None, top_k, threshold)
    }

    /// Like [`semantic_search`](Self::semantic_search), restricted to triggers
    /// that read `target`.
    pub fn semantic_search_target(
        &self,
        text: &str,
        kind: PolicyKind,
        target: TargetField,
        top_k: usize,
        threshold: f64,
    ) -> Vec<SearchHit> {
        self.search_filtered(text, kind, Some(target), top_k, threshold)
    }

    fn search_filtered(
        &self,
        text: &str,
        kind: PolicyKind,
        target: Option<TargetField>,
        top_k: usize,
        threshold: f64,
    ) -> Vec<SearchHit> {
        if top_k == 0 {
            return Vec::new();
        }
        let query = self.embedder.embed(text);
        let mut best: BTreeMap<PolicyId, (f64, usize)> = BTreeMap::new();
        for hit in self.index.scan(&query, kind) {
            let Some(stored) = self.policies.get(&hit.policy_id) else { continue };
            if !stored.policy.enabled {
                continue;
            }
            let Some(entry) = self.index.entries(&hit.policy_id).and_then(|e| e.get(hit.entry))
            else {
                continue;
            };
            if target.is_some_and(|t| t != entry.target) {
                continue;
            }
            if hit.score < threshold.max(entry.threshold) {
                continue;
            }
            let slot = best.entry(hit.policy_id).or_insert((hit.score, hit.entry));
            if hit.score > slot.0 || (hit.score == slot.0 && hit.entry < slot.1) {
                *slot = (hit.score, hit.entry);
            }
        }
        let mut hits: Vec<SearchHit> = best
            .into_iter()
            .map(|(policy_id, (score, entry))| {
                let matched_query = self.index.entries(&policy_id).expect("indexed")[entry]
                    .query
                    .clone();
                SearchHit { policy_id, score, matched_query }
            })
            .collect();
        hits.sort_by(hit_order);
        hits.truncate(top_k);
        hits
    }
}
