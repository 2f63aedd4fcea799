//! Structured explanation traces.
//!
//! Exported as newline-delimited JSON, one event per line, with the fields
//! `sequence`, `session`, `checkpoint`, `decision`, `detail` and `at`
//! (RFC 3339).

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::approval::ApprovalDecision;
use super::session::{SessionId, SessionPhase};
use crate::policy::{FormatMode, PolicyId, PolicyKind};
use crate::policy_agent::{Checkpoint, GuideMatch, PolicyDecision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceCheckpoint {
    IntentAnalysis,
    ToolPreparation,
    PostCodeGeneration,
    FinalResponse,
    Lifecycle,
}

impl From<Checkpoint> for TraceCheckpoint {
    fn from(c: Checkpoint) -> Self {
        match c {
            Checkpoint::IntentAnalysis => TraceCheckpoint::IntentAnalysis,
            Checkpoint::ToolPreparation => TraceCheckpoint::ToolPreparation,
            Checkpoint::PostCodeGeneration => TraceCheckpoint::PostCodeGeneration,
            Checkpoint::FinalResponse => TraceCheckpoint::FinalResponse,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePosture {
    FailClosed,
    FailOpen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceDetail {
    SessionCreated {
        user_input: String,
    },
    PhaseChanged {
        from: SessionPhase,
        to: SessionPhase,
    },
    GuardsEvaluated {
        blocked_by: Option<PolicyId>,
    },
    IntentBlocked {
        policy_id: Option<PolicyId>,
        block_message: String,
    },
    PlaybookEvaluated {
        selected: Option<PolicyId>,
    },
    PlaybookInjected {
        policy_id: PolicyId,
    },
    ResolverFailed {
        kind: PolicyKind,
        error: String,
        posture: FailurePosture,
    },
    ToolsEnriched {
        guides: Vec<GuideMatch>,
    },
    CodeScanned {
        tools: Vec<String>,
    },
    ApprovalRequested {
        request_id: String,
        policy_id: PolicyId,
        tool_name: String,
    },
    ApprovalAutoApproved {
        request_id: String,
        policy_id: PolicyId,
        tool_name: String,
    },
    ApprovalResolved {
        request_id: String,
        decision: ApprovalDecision,
        actor: String,
    },
    ExecutionCleared {
        tools: Vec<String>,
    },
    ToolInvoked {
        tool_name: String,
        arguments: serde_json::Value,
        ok: bool,
    },
    OutputFormatted {
        policy_id: Option<PolicyId>,
        mode: Option<FormatMode>,
        diagnostic: Option<String>,
    },
    SessionFailed {
        reason: String,
    },
}

fn ser_rfc3339<S: Serializer>(at: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&at.to_rfc3339_opts(SecondsFormat::Millis, true))
}

fn de_rfc3339<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
    let s = String::deserialize(d)?;
    DateTime::parse_from_rfc3339(&s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(serde::de::Error::custom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub sequence: u64,
    pub session: SessionId,
    pub checkpoint: TraceCheckpoint,
    pub decision: Option<PolicyDecision>,
    pub detail: TraceDetail,
    #[serde(serialize_with = "ser_rfc3339", deserialize_with = "de_rfc3339")]
    pub at: DateTime<Utc>,
}

impl TraceEvent {
    pub fn is_tool_invocation(&self) -> bool {
        matches!(self.detail, TraceDetail::ToolInvoked { .. })
    }
}

/// Renders events as newline-delimited JSON.
pub fn to_ndjson<'a>(events: impl IntoIterator<Item = &'a TraceEvent>) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
        out.push('\n');
    }
    out
}

/// Parses newline-delimited JSON trace events, skipping blank lines.
pub fn from_ndjson(text: &str) -> Result<Vec<TraceEvent>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
