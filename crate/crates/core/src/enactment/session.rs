use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::tools::{PlannedCall, ToolDefinition};
use super::trace::{TraceCheckpoint, TraceDetail, TraceEvent};
use super::EnactmentError;
use crate::policy::PolicyId;
use crate::policy_agent::PolicyDecision;
use crate::trigger::MatchContext;

/// Opaque session identifier in UUID format.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(String);

impl SessionId {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionPhase {
    Created,
    Blocked,
    Planning,
    ToolPrep,
    CodeGenerated,
    AwaitingApproval,
    Executing,
    Responding,
    Completed,
    Denied,
    Failed,
}

impl SessionPhase {
    pub const ALL: [SessionPhase; 11] = [
        SessionPhase::Created,
        SessionPhase::Blocked,
        SessionPhase::Planning,
        SessionPhase::ToolPrep,
        SessionPhase::CodeGenerated,
        SessionPhase::AwaitingApproval,
        SessionPhase::Executing,
        SessionPhase::Responding,
        SessionPhase::Completed,
        SessionPhase::Denied,
        SessionPhase::Failed,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            SessionPhase::Blocked
                | SessionPhase::Denied
                | SessionPhase::Completed
                | SessionPhase::Failed
        )
    }

    pub fn can_transition(self, to: SessionPhase) -> bool {
        use SessionPhase::*;
        if self.is_terminal() {
            return false;
        }
        matches!(
            (self, to),
            (_, Failed)
                | (Created, Blocked | Planning)
                | (Planning, ToolPrep)
                | (ToolPrep, CodeGenerated)
                | (CodeGenerated, AwaitingApproval | Executing)
                | (AwaitingApproval, Executing | Denied)
                | (Executing, Responding | CodeGenerated)
                | (Responding, Completed)
        )
    }
}

impl fmt::Display for SessionPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("phase serializes");
        f.write_str(s.as_str().unwrap_or_default())
    }
}

/// Tool calls cleared to run, and the part of the plan still to be gated.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionPlan {
    pub segment: Vec<PlannedCall>,
    pub remaining: Vec<PlannedCall>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum FinalOutput {
    Text(String),
    Json(serde_json::Value),
}

impl FinalOutput {
    pub fn as_text(&self) -> String {
        match self {
            FinalOutput::Text(s) => s.clone(),
            FinalOutput::Json(v) => v.to_string(),
        }
    }
}

/// One governed execution of a user request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Session {
    pub id: SessionId,
    pub phase: SessionPhase,
    pub context: MatchContext,
    pub system_prompt: String,
    pub playbook: Option<PolicyId>,
    /// Session-scoped copies of the registry tools, possibly enriched.
    pub tools: Vec<ToolDefinition>,
    pub pending_approval: Option<String>,
    pub plan: Option<ExecutionPlan>,
    pub executions: BTreeMap<String, u32>,
    pub block_message: Option<String>,
    pub output: Option<FinalOutput>,
    pub trace: Vec<TraceEvent>,
}

impl Session {
    pub fn new(id: SessionId, context: MatchContext, system_prompt: String) -> Self {
        Self {
            id,
            phase: SessionPhase::Created,
            context,
            system_prompt,
            playbook: None,
            tools: Vec::new(),
            pending_approval: None,
            plan: None,
            executions: BTreeMap::new(),
            block_message: None,
            output: None,
            trace: Vec::new(),
        }
    }

    pub fn record(
        &mut self,
        checkpoint: TraceCheckpoint,
        decision: Option<PolicyDecision>,
        detail: TraceDetail,
        at: DateTime<Utc>,
    ) {
        let sequence = self.trace.last().map_or(0, |e| e.sequence + 1);
        self.trace.push(TraceEvent {
            sequence,
            session: self.id.clone(),
            checkpoint,
            decision,
            detail,
            at,
        });
    }

    /// Moves to `to` if the state machine allows it, recording the change.
    pub fn transition(&mut self, to: SessionPhase, at: DateTime<Utc>) -> Result<(), EnactmentError> {
        if !self.phase.can_transition(to) {
            return Err(EnactmentError::IllegalTransition { from: self.phase, to });
        }
        let from = self.phase;
        self.phase = to;
        self.record(TraceCheckpoint::Lifecycle, None, TraceDetail::PhaseChanged { from, to }, at);
        Ok(())
    }

    pub fn expect_phase(&self, expected: SessionPhase) -> Result<(), EnactmentError> {
        if self.phase == expected {
            Ok(())
        } else {
            Err(EnactmentError::WrongPhase { expected, actual: self.phase })
        }
    }

    pub fn execution_count(&self, tool: &str) -> u32 {
        self.executions.get(tool).copied().unwrap_or(0)
    }
}
