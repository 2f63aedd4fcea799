//! Runtime matching and conflict resolution.
//!
//! Guards, playbooks and output formatters are selected with the same
//! two-phase procedure. First every deterministic trigger (keyword, state,
//! application, tool) of the enabled policies is evaluated; if any policy
//! matches, the one with the highest priority wins and no model is consulted.
//! Only when nothing matched deterministically are natural-language
//! candidates gathered through the store's semantic search. A single
//! candidate is taken as is; several are handed to a [`Resolver`].
//!
//! Tool guides are cumulative and never select. Tool approvals match on the
//! tools scanned from generated code rather than on triggers.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::fnv1a64;
use crate::policy::{PolicyId, PolicyKind, TargetField};
use crate::store::{hit_order, PolicyStore, SearchHit};
use crate::trigger::{evaluate, evaluate_deterministic, MatchContext, TriggerOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Checkpoint {
    IntentAnalysis,
    ToolPreparation,
    PostCodeGeneration,
    FinalResponse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionPhase {
    Deterministic,
    SemanticResolved,
    NoMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolverVerdict {
    pub selected_index: usize,
    pub confidence: f64,
    pub justification: String,
}

/// A semantic candidate as shown to a resolver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub policy_id: PolicyId,
    pub priority: i64,
    pub summary: String,
    pub score: f64,
    pub matched_query: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiredPolicy {
    pub policy_id: PolicyId,
    pub outcome: TriggerOutcome,
}

/// Outcome of matching one policy kind at a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub checkpoint: Checkpoint,
    pub kind: PolicyKind,
    pub fired: Vec<FiredPolicy>,
    pub selected: Option<PolicyId>,
    pub resolver_verdict: Option<ResolverVerdict>,
    pub phase: DecisionPhase,
}

impl PolicyDecision {
    fn no_match(checkpoint: Checkpoint, kind: PolicyKind) -> Self {
        Self {
            checkpoint,
            kind,
            fired: Vec::new(),
            selected: None,
            resolver_verdict: None,
            phase: DecisionPhase::NoMatch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResolverError {
    #[error("resolver failed: {0}")]
    Failed(String),
    #[error("resolver returned an invalid verdict: {0}")]
    InvalidVerdict(String),
}

/// Picks one policy among several semantic candidates.
pub trait Resolver: Send + Sync {
    fn resolve(
        &self,
        candidates: &[Candidate],
        context_text: &str,
    ) -> Result<ResolverVerdict, ResolverError>;
}

#[derive(Debug, Error)]
#[error("{source}")]
pub struct MatchError {
    pub checkpoint: Checkpoint,
    pub kind: PolicyKind,
    /// Candidates that were put before the resolver.
    pub candidates: Vec<FiredPolicy>,
    pub source: ResolverError,
}

/// What a [`ScriptedResolver`] does for contexts missing from its script.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScriptFallback {
    /// Report a resolver failure.
    #[default]
    Fail,
    /// Pick the best-scoring candidate.
    TopCandidate,
}

/// Deterministic resolver keyed by a hash of the context text.
#[derive(Debug, Default)]
pub struct ScriptedResolver {
    script: HashMap<String, ResolverVerdict>,
    fallback: ScriptFallback,
    calls: AtomicUsize,
    seen: Mutex<Vec<String>>,
}

impl ScriptedResolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fallback(mut self, fallback: ScriptFallback) -> Self {
        self.fallback = fallback;
        self
    }

    /// Hex FNV-1a hash of a context text: the script key.
    pub fn context_key(context_text: &str) -> String {
        format!("{:016x}", fnv1a64(context_text.as_bytes()))
    }

    pub fn with_verdict(mut self, context_text: &str, verdict: ResolverVerdict) -> Self {
        self.script.insert(Self::context_key(context_text), verdict);
        self
    }

    pub fn with_keyed_verdict(mut self, key: impl Into<String>, verdict: ResolverVerdict) -> Self {
        self.script.insert(key.into(), verdict);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Context texts seen so far, in call order.
    pub fn seen(&self) -> Vec<String> {
        self.seen.lock().clone()
    }
}

impl Resolver for ScriptedResolver {
    fn resolve(
        &self,
        candidates: &[Candidate],
        context_text: &str,
    ) -> Result<ResolverVerdict, ResolverError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.seen.lock().push(context_text.to_owned());
        if let Some(v) = self.script.get(&Self::context_key(context_text)) {
            return Ok(v.clone());
        }
        match self.fallback {
            ScriptFallback::Fail => Err(ResolverError::Failed(format!(
                "no scripted verdict for context {}",
                Self::context_key(context_text)
            ))),
            ScriptFallback::TopCandidate if !candidates.is_empty() => Ok(ResolverVerdict {
                selected_index: 0,
                confidence: candidates[0].score.clamp(0.0, 1.0),
                justification: "highest similarity score".into(),
            }),
            ScriptFallback::TopCandidate => {
                Err(ResolverError::Failed("no candidates to choose from".into()))
            }
        }
    }
}

fn check_verdict(v: &ResolverVerdict, count: usize) -> Result<(), ResolverError> {
    if v.selected_index >= count {
        return Err(ResolverError::InvalidVerdict(format!(
            "index {} out of range for {count} candidates",
            v.selected_index
        )));
    }
    if !(0.0..=1.0).contains(&v.confidence) {
        return Err(ResolverError::InvalidVerdict("confidence out of [0,1]".into()));
    }
    if v.justification.trim().is_empty() {
        return Err(ResolverError::InvalidVerdict("empty justification".into()));
    }
    Ok(())
}

/// Text shown to the resolver: every present contextual field, in order.
fn context_text(ctx: &MatchContext) -> String {
    TargetField::ALL
        .iter()
        .filter_map(|t| ctx.field(*t))
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn two_phase(
    checkpoint: Checkpoint,
    kind: PolicyKind,
    ctx: &MatchContext,
    store: &PolicyStore,
    resolver: &dyn Resolver,
) -> Result<PolicyDecision, MatchError> {
    let mut fired = Vec::new();
    for p in store.enabled_by_kind(kind) {
        let hit = p
            .triggers
            .iter()
            .filter_map(|t| evaluate_deterministic(t, ctx))
            .find(|o| o.matched);
        if let Some(outcome) = hit {
            fired.push(FiredPolicy { policy_id: p.id.clone(), outcome });
        }
    }
    if !fired.is_empty() {
        let selected = Some(fired[0].policy_id.clone());
        return Ok(PolicyDecision {
            checkpoint,
            kind,
            fired,
            selected,
            resolver_verdict: None,
            phase: DecisionPhase::Deterministic,
        });
    }

    let mut best: HashMap<PolicyId, SearchHit> = HashMap::new();
    for target in TargetField::ALL {
        let Some(text) = ctx.field(target) else { continue };
        for hit in store.semantic_search_target(text, kind, target, usize::MAX, 0.0) {
            match best.get(&hit.policy_id) {
                Some(prev) if prev.score >= hit.score => {}
                _ => {
                    best.insert(hit.policy_id.clone(), hit);
                }
            }
        }
    }
    let mut hits: Vec<SearchHit> = best.into_values().collect();
    hits.sort_by(hit_order);

    let fired: Vec<FiredPolicy> = hits
        .iter()
        .map(|h| FiredPolicy {
            policy_id: h.policy_id.clone(),
            outcome: TriggerOutcome {
                matched: true,
                score: Some(h.score),
                matched_query: Some(h.matched_query.clone()),
            },
        })
        .collect();

    match hits.len() {
        0 => Ok(PolicyDecision::no_match(checkpoint, kind)),
        1 => Ok(PolicyDecision {
            checkpoint,
            kind,
            selected: Some(hits[0].policy_id.clone()),
            fired,
            resolver_verdict: None,
            phase: DecisionPhase::SemanticResolved,
        }),
        _ => {
            let candidates: Vec<Candidate> = hits
                .iter()
                .map(|h| {
                    let p = store.policy(&h.policy_id).expect("hit refers to stored policy");
                    Candidate {
                        policy_id: h.policy_id.clone(),
                        priority: p.priority,
                        summary: p.summary(),
                        score: h.score,
                        matched_query: h.matched_query.clone(),
                    }
                })
                .collect();
            let verdict = resolver
                .resolve(&candidates, &context_text(ctx))
                .and_then(|v| check_verdict(&v, candidates.len()).map(|()| v));
            match verdict {
                Ok(v) => Ok(PolicyDecision {
                    checkpoint,
                    kind,
                    selected: Some(candidates[v.selected_index].policy_id.clone()),
                    fired,
                    resolver_verdict: Some(v),
                    phase: DecisionPhase::SemanticResolved,
                }),
                Err(source) => Err(MatchError { checkpoint, kind, candidates: fired, source }),
            }
        }
    }
}

pub fn match_intent_guards(
    ctx: &MatchContext,
    store: &PolicyStore,
    resolver: &dyn Resolver,
) -> Result<PolicyDecision, MatchError> {
    two_phase(Checkpoint::IntentAnalysis, PolicyKind::IntentGuard, ctx, store, resolver)
}

pub fn match_playbooks(
    ctx: &MatchContext,
    store: &PolicyStore,
    resolver: &dyn Resolver,
) -> Result<PolicyDecision, MatchError> {
    two_phase(Checkpoint::IntentAnalysis, PolicyKind::Playbook, ctx, store, resolver)
}

/// Selects at most one output formatter. Triggers may read the user input
/// or the final response, so `ctx.final_response` should be set.
pub fn match_output_formatters(
    ctx: &MatchContext,
    store: &PolicyStore,
    resolver: &dyn Resolver,
) -> Result<PolicyDecision, MatchError> {
    two_phase(Checkpoint::FinalResponse, PolicyKind::OutputFormatter, ctx, store, resolver)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuideMatch {
    pub policy_id: PolicyId,
    pub tool_name: String,
}

/// Every enabled tool guide whose triggers match and whose tools are
/// present contributes one entry per present tool. Entries are ordered by
/// (priority desc, id asc), then by the order of `tools`.
pub fn match_tool_guides(
    tools: &[String],
    ctx: &MatchContext,
    store: &PolicyStore,
) -> Vec<GuideMatch> {
    let mut out = Vec::new();
    for p in store.enabled_by_kind(PolicyKind::ToolGuide) {
        let guide = p.as_tool_guide().expect("tool guide payload");
        let triggered = p
            .triggers
            .iter()
            .any(|t| evaluate(t, ctx, store.embedder()).is_ok_and(|o| o.matched));
        if !triggered {
            continue;
        }
        let mut seen = std::collections::HashSet::new();
        for tool in tools {
            if guide.tool_names.contains(tool) && seen.insert(tool.as_str()) {
                out.push(GuideMatch { policy_id: p.id.clone(), tool_name: tool.clone() });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApprovalMatch {
    pub policy_id: PolicyId,
    pub tool_name: String,
    /// Position of the gated tool in the plan.
    pub plan_index: usize,
    pub auto_approve: bool,
}

/// Finds the first planned tool covered by an enabled approval policy. When
/// several policies cover it, the highest priority wins (ties by id).
pub fn match_tool_approvals(planned_tools: &[String], store: &PolicyStore) -> Option<ApprovalMatch> {
    let policies = store.enabled_by_kind(PolicyKind::ToolApproval);
    planned_tools.iter().enumerate().find_map(|(i, tool)| {
        policies.iter().find_map(|p| {
            let a = p.as_tool_approval().expect("tool approval payload");
            a.covers(tool).then(|| ApprovalMatch {
                policy_id: p.id.clone(),
                tool_name: tool.clone(),
                plan_index: i,
                auto_approve: a.auto_approve,
            })
        })
    })
}
