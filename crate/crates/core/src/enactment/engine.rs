use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex, RwLock};
use serde::Serialize;

use super::approval::{ApprovalDecision, ApprovalRequest, ApprovalStatus};
use super::formatter::{format_output, BasicFormatter, FormatResult, FormatterModel};
use super::playbook::inject_playbook;
use super::session::{ExecutionPlan, Session, SessionId, SessionPhase};
use super::tools::{
    enrich_tools, extract_calls, AppliedGuide, PlannedCall, RecordingExecutor, ToolDefinition,
    ToolExecutor, ToolRegistry,
};
use super::trace::{FailurePosture, TraceCheckpoint, TraceDetail, TraceEvent};
use super::{EnactmentError, IdSource};
use crate::clock::{Clock, SystemClock};
use crate::policy::{PolicyId, PolicyKind, ToolStage};
use crate::policy_agent::{
    match_intent_guards, match_output_formatters, match_playbooks, match_tool_approvals,
    match_tool_guides, Checkpoint, Resolver, ScriptFallback, ScriptedResolver,
};
use crate::store::PolicyStore;
use crate::trigger::{MatchContext, ToolSighting};

const DEFAULT_SYSTEM_PROMPT: &str = "You are an enterprise assistant. Use the provided tools.";
const FAIL_CLOSED_MESSAGE: &str =
    "This request was blocked because the intent guard check could not be completed.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum IntentOutcome {
    Block { message: String },
    Proceed { playbook: Option<PolicyId> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", content = "request", rename_all = "snake_case")]
pub enum GateOutcome {
    Execute,
    Pause(ApprovalRequest),
    AutoApproved(ApprovalRequest),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExecutionReport {
    pub invoked: Vec<String>,
    /// Planned calls still to pass the approval gate.
    pub remaining: usize,
}

/// Receives engine events. Called after the engine has released its locks.
pub trait EngineObserver: Send + Sync {
    fn approval_requested(&self, _request: &ApprovalRequest) {}
    fn approval_resolved(&self, _request: &ApprovalRequest) {}
}

struct SessionSlot {
    session: Mutex<Session>,
    changed: Condvar,
}

/// Runs sessions against a shared policy store and tool registry.
///
/// Every session has its own lock, so sessions advance independently; a
/// session waiting for approval holds nothing. When both a session and the
/// approval table are locked, the session is always locked first.
pub struct Engine {
    store: Arc<RwLock<PolicyStore>>,
    registry: Arc<ToolRegistry>,
    resolver: Arc<dyn Resolver>,
    formatter: Arc<dyn FormatterModel>,
    executor: Arc<dyn ToolExecutor>,
    clock: Arc<dyn Clock>,
    ids: IdSource,
    system_prompt: String,
    sessions: RwLock<HashMap<SessionId, Arc<SessionSlot>>>,
    approvals: Mutex<BTreeMap<String, ApprovalRequest>>,
    observers: RwLock<Vec<Arc<dyn EngineObserver>>>,
}

pub struct EngineBuilder {
    store: Arc<RwLock<PolicyStore>>,
    registry: Arc<ToolRegistry>,
    resolver: Arc<dyn Resolver>,
    formatter: Arc<dyn FormatterModel>,
    executor: Arc<dyn ToolExecutor>,
    clock: Arc<dyn Clock>,
    ids: IdSource,
    system_prompt: String,
}

impl EngineBuilder {
    pub fn resolver(mut self, resolver: Arc<dyn Resolver>) -> Self {
        self.resolver = resolver;
        self
    }

    pub fn formatter(mut self, formatter: Arc<dyn FormatterModel>) -> Self {
        self.formatter = formatter;
        self
    }

    pub fn executor(mut self, executor: Arc<dyn ToolExecutor>) -> Self {
        self.executor = executor;
        self
    }

    pub fn clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn ids(mut self, ids: IdSource) -> Self {
        self.ids = ids;
        self
    }

    pub fn system_prompt(mut self, prompt: impl Into<String>) -> Self {
        self.system_prompt = prompt.into();
        self
    }

    pub fn build(self) -> Engine {
        Engine {
            store: self.store,
            registry: self.registry,
            resolver: self.resolver,
            formatter: self.formatter,
            executor: self.executor,
            clock: self.clock,
            ids: self.ids,
            system_prompt: self.system_prompt,
            sessions: RwLock::new(HashMap::new()),
            approvals: Mutex::new(BTreeMap::new()),
            observers: RwLock::new(Vec::new()),
        }
    }
}

impl Engine {
    /// Defaults: a resolver that picks the best-scoring candidate, the basic
    /// formatter, a recording executor, the system clock and random ids.
    pub fn builder(store: Arc<RwLock<PolicyStore>>, registry: Arc<ToolRegistry>) -> EngineBuilder {
        EngineBuilder {
            store,
            registry,
            resolver: Arc::new(ScriptedResolver::new().with_fallback(ScriptFallback::TopCandidate)),
            formatter: Arc::new(BasicFormatter),
            executor: Arc::new(RecordingExecutor::new()),
            clock: Arc::new(SystemClock),
            ids: IdSource::Random,
            system_prompt: DEFAULT_SYSTEM_PROMPT.into(),
        }
    }

    pub fn store(&self) -> &Arc<RwLock<PolicyStore>> {
        &self.store
    }

    pub fn registry(&self) -> &ToolRegistry {
        &self.registry
    }

    pub fn subscribe(&self, observer: Arc<dyn EngineObserver>) {
        self.observers.write().push(observer);
    }

    fn slot(&self, id: &SessionId) -> Result<Arc<SessionSlot>, EnactmentError> {
        self.sessions
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| EnactmentError::UnknownSession(id.clone()))
    }

    fn insert_slot(&self, session: Session) -> Result<SessionId, EnactmentError> {
        let id = session.id.clone();
        let mut sessions = self.sessions.write();
        if sessions.contains_key(&id) {
            return Err(EnactmentError::DuplicateSession(id));
        }
        let slot = SessionSlot { session: Mutex::new(session), changed: Condvar::new() };
        sessions.insert(id.clone(), Arc::new(slot));
        Ok(id)
    }

    pub fn create_session(&self, context: MatchContext) -> SessionId {
        let mut session =
            Session::new(SessionId::new(self.ids.next()), context, self.system_prompt.clone());
        let user_input = session.context.user_input.clone();
        session.record(
            TraceCheckpoint::Lifecycle,
            None,
            TraceDetail::SessionCreated { user_input },
            self.clock.now(),
        );
        self.insert_slot(session).expect("fresh session ids are unique")
    }

    /// Re-registers a persisted session together with its approval requests.
    pub fn restore_session(
        &self,
        session: Session,
        approvals: Vec<ApprovalRequest>,
    ) -> Result<SessionId, EnactmentError> {
        let id = self.insert_slot(session)?;
        let mut table = self.approvals.lock();
        for a in approvals {
            table.insert(a.id.clone(), a);
        }
        Ok(id)
    }

    /// Intent analysis: guards first, then playbook selection.
    pub fn checkpoint_intent(&self, id: &SessionId) -> Result<IntentOutcome, EnactmentError> {
        let slot = self.slot(id)?;
        let mut s = slot.session.lock();
        s.expect_phase(SessionPhase::Created)?;
        let store = self.store.read();
        let cp = TraceCheckpoint::IntentAnalysis;

        let blocked = match match_intent_guards(&s.context, &store, self.resolver.as_ref()) {
            Ok(decision) => match decision.selected.clone() {
                Some(pid) => {
                    let message = store
                        .policy(&pid)
                        .and_then(|p| p.as_intent_guard())
                        .map(|g| g.block_message.clone())
                        .unwrap_or_default();
                    let detail =
                        TraceDetail::IntentBlocked { policy_id: Some(pid), block_message: message.clone() };
                    s.record(cp, Some(decision), detail, self.clock.now());
                    Some(message)
                }
                None => {
                    let detail = TraceDetail::GuardsEvaluated { blocked_by: None };
                    s.record(cp, Some(decision), detail, self.clock.now());
                    None
                }
            },
            Err(e) => {
                let detail = TraceDetail::ResolverFailed {
                    kind: PolicyKind::IntentGuard,
                    error: e.to_string(),
                    posture: FailurePosture::FailClosed,
                };
                s.record(cp, None, detail, self.clock.now());
                let message = FAIL_CLOSED_MESSAGE.to_owned();
                let detail =
                    TraceDetail::IntentBlocked { policy_id: None, block_message: message.clone() };
                s.record(cp, None, detail, self.clock.now());
                Some(message)
            }
        };
        if let Some(message) = blocked {
            s.block_message = Some(message.clone());
            s.transition(SessionPhase::Blocked, self.clock.now())?;
            slot.changed.notify_all();
            return Ok(IntentOutcome::Block { message });
        }

        let playbook = match match_playbooks(&s.context, &store, self.resolver.as_ref()) {
            Ok(decision) => {
                let selected = decision.selected.clone();
                let detail = TraceDetail::PlaybookEvaluated { selected: selected.clone() };
                s.record(cp, Some(decision), detail, self.clock.now());
                selected
            }
            Err(e) => {
                let detail = TraceDetail::ResolverFailed {
                    kind: PolicyKind::Playbook,
                    error: e.to_string(),
                    posture: FailurePosture::FailOpen,
                };
                s.record(cp, None, detail, self.clock.now());
                None
            }
        };
        s.transition(SessionPhase::Planning, self.clock.now())?;
        if let Some(pid) = &playbook {
            let pb = store.policy(pid).and_then(|p| p.as_playbook()).expect("playbook payload");
            s.system_prompt = inject_playbook(&s.system_prompt, pid, pb);
            s.playbook = Some(pid.clone());
            s.record(cp, None, TraceDetail::PlaybookInjected { policy_id: pid.clone() }, self.clock.now());
        }
        Ok(IntentOutcome::Proceed { playbook })
    }

    /// Tool preparation: hands the session enriched copies of every tool.
    pub fn prepare_tools(&self, id: &SessionId) -> Result<Vec<ToolDefinition>, EnactmentError> {
        let slot = self.slot(id)?;
        let mut s = slot.session.lock();
        s.expect_phase(SessionPhase::Planning)?;
        s.transition(SessionPhase::ToolPrep, self.clock.now())?;
        let store = self.store.read();
        let guides = match_tool_guides(&self.registry.names(), &s.context, &store);
        let applied: Vec<AppliedGuide> = guides
            .iter()
            .filter_map(|g| {
                let payload = store.policy(&g.policy_id)?.as_tool_guide()?;
                Some(AppliedGuide {
                    policy_id: g.policy_id.clone(),
                    tool_name: g.tool_name.clone(),
                    guidance: payload.guidance.clone(),
                    placement: payload.placement,
                })
            })
            .collect();
        s.tools = enrich_tools(self.registry.tools(), &applied);
        s.record(TraceCheckpoint::ToolPreparation, None, TraceDetail::ToolsEnriched { guides }, self.clock.now());
        Ok(s.tools.clone())
    }

    /// Accepts code generated by the agent and scans it for tool calls.
    /// Valid right after tool preparation or after an execution round.
    pub fn submit_code(&self, id: &SessionId, code: &str) -> Result<Vec<PlannedCall>, EnactmentError> {
        let slot = self.slot(id)?;
        let mut s = slot.session.lock();
        if s.phase != SessionPhase::ToolPrep {
            s.expect_phase(SessionPhase::Executing)?;
        }
        s.transition(SessionPhase::CodeGenerated, self.clock.now())?;
        let calls = extract_calls(code, self.registry.tools());
        for c in &calls {
            s.context.tools_seen.push(ToolSighting { tool_name: c.tool.clone(), stage: ToolStage::Pre });
        }
        s.plan = Some(ExecutionPlan { segment: Vec::new(), remaining: calls.clone() });
        let tools = calls.iter().map(|c| c.tool.clone()).collect();
        s.record(TraceCheckpoint::PostCodeGeneration, None, TraceDetail::CodeScanned { tools }, self.clock.now());
        Ok(calls)
    }

    /// Post-code-generation gate. The first planned tool covered by an
    /// approval policy gates itself and every call before it; later calls
    /// are gated again after this round executes.
    pub fn gate_execution(&self, id: &SessionId) -> Result<GateOutcome, EnactmentError> {
        let slot = self.slot(id)?;
        let mut s = slot.session.lock();
        s.expect_phase(SessionPhase::CodeGenerated)?;
        let remaining = s.plan.take().map(|p| p.remaining).unwrap_or_default();
        let names: Vec<String> = remaining.iter().map(|c| c.tool.clone()).collect();
        let matched = match_tool_approvals(&names, &self.store.read());
        let cp = TraceCheckpoint::PostCodeGeneration;

        let Some(m) = matched else {
            s.plan = Some(ExecutionPlan { segment: remaining, remaining: Vec::new() });
            s.record(cp, None, TraceDetail::ExecutionCleared { tools: names }, self.clock.now());
            s.transition(SessionPhase::Executing, self.clock.now())?;
            return Ok(GateOutcome::Execute);
        };

        let mut segment = remaining;
        let rest = segment.split_off(m.plan_index + 1);
        let now = self.clock.now();
        let mut request = ApprovalRequest {
            id: self.ids.next(),
            session: id.clone(),
            policy: m.policy_id.clone(),
            tool_name: m.tool_name.clone(),
            tool_arguments: segment[m.plan_index].arguments.clone(),
            requested_at: now,
            status: ApprovalStatus::Pending,
            resolved_by: None,
            resolved_at: None,
        };
        s.plan = Some(ExecutionPlan { segment, remaining: rest });

        if m.auto_approve {
            request.status = ApprovalStatus::AutoApproved;
            request.resolved_by = Some("auto".into());
            request.resolved_at = Some(now);
            self.approvals.lock().insert(request.id.clone(), request.clone());
            let detail = TraceDetail::ApprovalAutoApproved {
                request_id: request.id.clone(),
                policy_id: m.policy_id,
                tool_name: m.tool_name,
            };
            s.record(cp, None, detail, now);
            s.transition(SessionPhase::Executing, self.clock.now())?;
            return Ok(GateOutcome::AutoApproved(request));
        }

        s.pending_approval = Some(request.id.clone());
        self.approvals.lock().insert(request.id.clone(), request.clone());
        let detail = TraceDetail::ApprovalRequested {
            request_id: request.id.clone(),
            policy_id: m.policy_id,
            tool_name: m.tool_name,
        };
        s.record(cp, None, detail, now);
        s.transition(SessionPhase::AwaitingApproval, self.clock.now())?;
        drop(s);
        for o in self.observers.read().iter() {
            o.approval_requested(&request);
        }
        Ok(GateOutcome::Pause(request))
    }

    /// Applies a human decision to a pending request. Safe to call from any
    /// thread; exactly one resolution of a request succeeds.
    pub fn resolve_approval(
        &self,
        request_id: &str,
        decision: ApprovalDecision,
        actor: &str,
    ) -> Result<SessionPhase, EnactmentError> {
        let session_id = self
            .approvals
            .lock()
            .get(request_id)
            .map(|r| r.session.clone())
            .ok_or_else(|| EnactmentError::UnknownRequest(request_id.to_owned()))?;
        let slot = self.slot(&session_id)?;
        let mut s = slot.session.lock();
        let resolved = {
            let mut table = self.approvals.lock();
            let req = table.get_mut(request_id).expect("requests are never removed");
            if !req.is_pending() {
                return Err(EnactmentError::AlreadyResolved(request_id.to_owned()));
            }
            req.status = match decision {
                ApprovalDecision::Approve => ApprovalStatus::Approved,
                ApprovalDecision::Deny => ApprovalStatus::Denied,
            };
            req.resolved_by = Some(actor.to_owned());
            req.resolved_at = Some(self.clock.now());
            req.clone()
        };
        s.pending_approval = None;
        let detail = TraceDetail::ApprovalResolved {
            request_id: request_id.to_owned(),
            decision,
            actor: actor.to_owned(),
        };
        s.record(TraceCheckpoint::PostCodeGeneration, None, detail, self.clock.now());
        match decision {
            ApprovalDecision::Approve => s.transition(SessionPhase::Executing, self.clock.now())?,
            ApprovalDecision::Deny => {
                s.plan = None;
                s.transition(SessionPhase::Denied, self.clock.now())?;
            }
        }
        let phase = s.phase;
        drop(s);
        slot.changed.notify_all();
        for o in self.observers.read().iter() {
            o.approval_resolved(&resolved);
        }
        Ok(phase)
    }

    /// Runs the cleared segment of the plan. Each cleared call runs once: the
    /// segment is consumed. If calls remain behind the gate the session goes
    /// back to `CodeGenerated` so they are gated again.
    pub fn execute_pending(&self, id: &SessionId) -> Result<ExecutionReport, EnactmentError> {
        let slot = self.slot(id)?;
        let mut s = slot.session.lock();
        s.expect_phase(SessionPhase::Executing)?;
        let mut plan = s.plan.take().unwrap_or_default();
        let segment = std::mem::take(&mut plan.segment);
        let mut invoked = Vec::new();
        for call in segment {
            let result = self.executor.execute(id, &call);
            *s.executions.entry(call.tool.clone()).or_default() += 1;
            s.context.tools_seen.push(ToolSighting { tool_name: call.tool.clone(), stage: ToolStage::Post });
            let detail = TraceDetail::ToolInvoked {
                tool_name: call.tool.clone(),
                arguments: call.arguments.clone(),
                ok: result.is_ok(),
            };
            s.record(TraceCheckpoint::PostCodeGeneration, None, detail, self.clock.now());
            invoked.push(call.tool);
        }
        let remaining = plan.remaining.len();
        if remaining > 0 {
            s.plan = Some(plan);
            s.transition(SessionPhase::CodeGenerated, self.clock.now())?;
        }
        Ok(ExecutionReport { invoked, remaining })
    }

    /// Final response: applies the selected output formatter and completes
    /// the session.
    pub fn respond(&self, id: &SessionId, response: &str) -> Result<FormatResult, EnactmentError> {
        let slot = self.slot(id)?;
        let mut s = slot.session.lock();
        s.expect_phase(SessionPhase::Executing)?;
        s.transition(SessionPhase::Responding, self.clock.now())?;
        s.context.final_response = Some(response.to_owned());
        let store = self.store.read();
        let cp = TraceCheckpoint::FinalResponse;
        let decision = match match_output_formatters(&s.context, &store, self.resolver.as_ref()) {
            Ok(d) => Some(d),
            Err(e) => {
                let detail = TraceDetail::ResolverFailed {
                    kind: PolicyKind::OutputFormatter,
                    error: e.to_string(),
                    posture: FailurePosture::FailOpen,
                };
                s.record(cp, None, detail, self.clock.now());
                None
            }
        };
        let selected = decision
            .as_ref()
            .and_then(|d| d.selected.as_ref())
            .and_then(|pid| Some((pid, store.policy(pid)?.as_output_formatter()?)));
        let result =
            format_output(response, &s.context.user_input, selected, self.formatter.as_ref());
        let detail = TraceDetail::OutputFormatted {
            policy_id: result.policy_id.clone(),
            mode: result.mode,
            diagnostic: result.diagnostic.clone(),
        };
        s.record(cp, decision, detail, self.clock.now());
        s.output = Some(result.output.clone());
        s.transition(SessionPhase::Completed, self.clock.now())?;
        drop(s);
        slot.changed.notify_all();
        Ok(result)
    }

    /// Ends a session with an error. A pending approval is withdrawn.
    pub fn fail(&self, id: &SessionId, reason: &str) -> Result<(), EnactmentError> {
        let slot = self.slot(id)?;
        let mut s = slot.session.lock();
        s.transition(SessionPhase::Failed, self.clock.now())?;
        s.record(
            TraceCheckpoint::Lifecycle,
            None,
            TraceDetail::SessionFailed { reason: reason.to_owned() },
            self.clock.now(),
        );
        if let Some(rid) = s.pending_approval.take() {
            if let Some(req) = self.approvals.lock().get_mut(&rid) {
                req.status = ApprovalStatus::Denied;
                req.resolved_by = Some("system".into());
                req.resolved_at = Some(self.clock.now());
            }
        }
        s.plan = None;
        drop(s);
        slot.changed.notify_all();
        Ok(())
    }

    /// Blocks while the session awaits approval, up to `timeout`. Returns the
    /// phase observed last.
    pub fn wait_for_resolution(
        &self,
        id: &SessionId,
        timeout: Duration,
    ) -> Result<SessionPhase, EnactmentError> {
        let slot = self.slot(id)?;
        let deadline = Instant::now() + timeout;
        let mut s = slot.session.lock();
        while s.phase == SessionPhase::AwaitingApproval {
            if slot.changed.wait_until(&mut s, deadline).timed_out() {
                break;
            }
        }
        Ok(s.phase)
    }

    pub fn session(&self, id: &SessionId) -> Result<Session, EnactmentError> {
        Ok(self.slot(id)?.session.lock().clone())
    }

    pub fn phase(&self, id: &SessionId) -> Result<SessionPhase, EnactmentError> {
        Ok(self.slot(id)?.session.lock().phase)
    }

    pub fn session_ids(&self) -> Vec<SessionId> {
        let mut ids: Vec<_> = self.sessions.read().keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn trace(&self, id: &SessionId) -> Result<Vec<TraceEvent>, EnactmentError> {
        Ok(self.slot(id)?.session.lock().trace.clone())
    }

    pub fn approval(&self, request_id: &str) -> Option<ApprovalRequest> {
        self.approvals.lock().get(request_id).cloned()
    }

    pub fn approvals_for(&self, id: &SessionId) -> Vec<ApprovalRequest> {
        self.approvals.lock().values().filter(|a| &a.session == id).cloned().collect()
    }

    /// Pending requests, oldest first.
    pub fn pending_approvals(&self) -> Vec<ApprovalRequest> {
        let mut out: Vec<_> =
            self.approvals.lock().values().filter(|a| a.is_pending()).cloned().collect();
        out.sort_by(|a, b| (a.requested_at, &a.id).cmp(&(b.requested_at, &b.id)));
        out
    }

    /// The checkpoint a decision kind is evaluated at.
    pub fn checkpoint_of(kind: PolicyKind) -> Checkpoint {
        match kind {
            PolicyKind::IntentGuard | PolicyKind::Playbook => Checkpoint::IntentAnalysis,
            PolicyKind::ToolGuide => Checkpoint::ToolPreparation,
            PolicyKind::ToolApproval => Checkpoint::PostCodeGeneration,
            PolicyKind::OutputFormatter => Checkpoint::FinalResponse,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SteppingClock;
    use crate::embed::HashingEmbedder;
    use serde_json::json;

    const GUARD: &str = "---\nid: crm-guard\nkind: intent_guard\npriority: 100\nblock_message: Bulk CRM deletion is not allowed.\ntriggers:\n  - type: keyword\n    keywords: [delete every contact]\n---\nBlocks bulk deletes.\n";
    const APPROVAL: &str = "---\nid: db-approval\nkind: tool_approval\npriority: 90\npatterns: [drop_*]\nauto_approve: false\n---\nDatabase drops need a human.\n";

    fn engine(policies: &[&str]) -> (Engine, Arc<RecordingExecutor>) {
        let mut store = PolicyStore::new(Arc::new(HashingEmbedder::default()));
        for p in policies {
            store.upsert_source(p).unwrap();
        }
        let registry = ToolRegistry::new(vec![
            ToolDefinition { name: "lookup".into(), description: "Looks up.".into(), parameters: json!({}) },
            ToolDefinition { name: "drop_database".into(), description: "Drops.".into(), parameters: json!({}) },
        ])
        .unwrap();
        let exec = Arc::new(RecordingExecutor::new());
        let engine = Engine::builder(Arc::new(RwLock::new(store)), Arc::new(registry))
            .executor(exec.clone())
            .clock(Arc::new(SteppingClock::default()))
            .ids(IdSource::sequential())
            .build();
        (engine, exec)
    }

    fn to_gate(e: &Engine, input: &str, code: &str) -> SessionId {
        let id = e.create_session(MatchContext::new(input));
        assert!(matches!(e.checkpoint_intent(&id).unwrap(), IntentOutcome::Proceed { .. }));
        e.prepare_tools(&id).unwrap();
        e.submit_code(&id, code).unwrap();
        id
    }

    #[test]
    fn guard_blocks_before_anything_runs() {
        let (e, exec) = engine(&[GUARD]);
        let id = e.create_session(MatchContext::new("please delete every contact in CRM"));
        let out = e.checkpoint_intent(&id).unwrap();
        assert_eq!(out, IntentOutcome::Block { message: "Bulk CRM deletion is not allowed.".into() });
        assert_eq!(e.phase(&id).unwrap(), SessionPhase::Blocked);
        assert!(e.prepare_tools(&id).is_err());
        assert!(exec.invocations().is_empty());
    }

    #[test]
    fn deny_and_approve() {
        let (e, exec) = engine(&[APPROVAL]);
        let denied = to_gate(&e, "clean up", "lookup(1)\ndrop_database('crm')");
        let GateOutcome::Pause(req) = e.gate_execution(&denied).unwrap() else { panic!() };
        assert_eq!(req.tool_arguments, json!({"raw": "'crm'"}));
        assert_eq!(e.pending_approvals().len(), 1);
        assert!(e.execute_pending(&denied).is_err());
        assert_eq!(e.resolve_approval(&req.id, ApprovalDecision::Deny, "ana").unwrap(), SessionPhase::Denied);
        assert_eq!(
            e.resolve_approval(&req.id, ApprovalDecision::Approve, "ana"),
            Err(EnactmentError::AlreadyResolved(req.id.clone()))
        );
        assert_eq!(exec.count(&denied, "drop_database"), 0);

        let approved = to_gate(&e, "clean up", "drop_database('crm')");
        let GateOutcome::Pause(req) = e.gate_execution(&approved).unwrap() else { panic!() };
        e.resolve_approval(&req.id, ApprovalDecision::Approve, "ana").unwrap();
        e.execute_pending(&approved).unwrap();
        assert!(e.execute_pending(&approved).unwrap().invoked.is_empty());
        assert_eq!(exec.count(&approved, "drop_database"), 1);
        e.respond(&approved, "done").unwrap();
        assert_eq!(e.phase(&approved).unwrap(), SessionPhase::Completed);
        assert_eq!(
            e.resolve_approval("nope", ApprovalDecision::Deny, "x"),
            Err(EnactmentError::UnknownRequest("nope".into()))
        );
    }

    #[test]
    fn later_risky_calls_are_gated_again() {
        let (e, exec) = engine(&[APPROVAL]);
        let id = to_gate(&e, "x", "drop_database('a'); lookup(1); drop_database('b')");
        // the plan is deduplicated by tool name, so lookup follows the gated drop
        let GateOutcome::Pause(req) = e.gate_execution(&id).unwrap() else { panic!() };
        e.resolve_approval(&req.id, ApprovalDecision::Approve, "ana").unwrap();
        let report = e.execute_pending(&id).unwrap();
        assert_eq!(report, ExecutionReport { invoked: vec!["drop_database".into()], remaining: 1 });
        assert_eq!(e.phase(&id).unwrap(), SessionPhase::CodeGenerated);
        assert_eq!(e.gate_execution(&id).unwrap(), GateOutcome::Execute);
        e.execute_pending(&id).unwrap();
        assert_eq!(exec.count(&id, "lookup"), 1);
    }

    #[test]
    fn trace_sequences_have_no_gaps() {
        let (e, _) = engine(&[APPROVAL]);
        let id = to_gate(&e, "x", "lookup(1)");
        e.gate_execution(&id).unwrap();
        e.execute_pending(&id).unwrap();
        e.respond(&id, "ok").unwrap();
        let seq: Vec<u64> = e.trace(&id).unwrap().iter().map(|t| t.sequence).collect();
        assert_eq!(seq, (0..seq.len() as u64).collect::<Vec<_>>());
    }

    #[test]
    fn waiting_returns_after_resolution_from_another_thread() {
        let (e, _) = engine(&[APPROVAL]);
        let e = Arc::new(e);
        let id = to_gate(&e, "x", "drop_database(1)");
        let GateOutcome::Pause(req) = e.gate_execution(&id).unwrap() else { panic!() };
        let e2 = e.clone();
        let h = std::thread::spawn(move || {
            e2.resolve_approval(&req.id, ApprovalDecision::Approve, "ops").unwrap()
        });
        let phase = e.wait_for_resolution(&id, Duration::from_secs(5)).unwrap();
        h.join().unwrap();
        assert_eq!(phase, SessionPhase::Executing);
    }
}
